//! Protocol classification: assigns each optimized memory point one of the
//! nonadiabatic / absorb-then-transfer / ATS / mixed / EIT labels from the
//! adiabaticity product and the normalized transient-character ratio.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};
use crate::fields::{ControlParams, MemoryParams};
use crate::numerics::{ChebGrid, TimeGrid};
use crate::optimizer::OptResult;
use crate::solver::{default_grids, simulate_storage, GridOptions, SolverResult};

/// Storage-window width for the character ratio, in units of tau_sig.
pub const STORAGE_WINDOW_FACTOR: f64 = 2.25;

/// Normalized-character threshold at or below which a point operates as EIT.
pub const EIT_THRESHOLD: f64 = 0.1;

/// Operative storage protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Nonadiabatic,
    AbsorbTransfer,
    Ats,
    Mixed,
    Eit,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Nonadiabatic => "nonadiabatic",
            Label::AbsorbTransfer => "absorb_transfer",
            Label::Ats => "ats",
            Label::Mixed => "mixed",
            Label::Eit => "eit",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "nonadiabatic" => Some(Label::Nonadiabatic),
            "absorb_transfer" => Some(Label::AbsorbTransfer),
            "ats" => Some(Label::Ats),
            "mixed" => Some(Label::Mixed),
            "eit" => Some(Label::Eit),
            _ => None,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-point classification record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtocolDiagnostics {
    /// d * tau_sig * gamma.
    pub adiabaticity: f64,
    /// Effective optical depth seen through the control pulse.
    pub effective_depth: f64,
    /// Transient character ratio C.
    pub character_ratio: f64,
    /// C / C0, normalized to the pure-ATS reference at the same point.
    pub normalized_character: f64,
    pub label: Label,
    /// Alternative ATS indicator: |delay| <= 0.25 tau_sig.
    pub alt_delay_band: bool,
    /// Alternative ATS indicator: normalized character within [0.75, 1.25].
    pub alt_character_band: bool,
    /// Band edges are unreliable for very low depth.
    pub low_depth_warning: bool,
}

/// Adiabaticity product d * tau_sig.
pub fn adiabaticity(m: &MemoryParams) -> f64 {
    m.adiabaticity()
}

/// Effective optical depth d * tau_sig * pi / (2 theta ln 2) for Gaussian
/// pulses.
pub fn ats_effective_depth(m: &MemoryParams, theta: f64) -> Result<f64> {
    if !theta.is_finite() || theta <= 0.0 {
        return Err(invalid_arg(format!("pulse area must be > 0, got {theta}")));
    }
    Ok(m.adiabaticity() * std::f64::consts::PI / (2.0 * theta * std::f64::consts::LN_2))
}

/// Ratio of the transient polarization population passing through P during
/// the storage window [-tau_s/2, +tau_s/2], tau_s = 2.25 tau_sig, to the
/// stored spin population:
/// C = (1/tau_s) int dtau int dz |P|^2 / int dz |B(z, tau_end)|^2.
pub fn character_ratio(
    result: &SolverResult,
    m: &MemoryParams,
    zgrid: &ChebGrid,
    tgrid: &TimeGrid,
) -> Result<f64> {
    let state = result
        .state
        .as_ref()
        .ok_or_else(|| Error::InvalidState("character ratio needs the field history".into()))?;
    let tau_s = STORAGE_WINDOW_FACTOR * m.tau_sig;
    let (lo, hi) = (-0.5 * tau_s, 0.5 * tau_s);
    let slack = 1e-9 * m.tau_sig;
    if tgrid.tau_start > lo + slack || tgrid.tau_end < hi - slack {
        return Err(invalid_arg(format!(
            "time window [{}, {}] does not cover the storage window [{lo}, {hi}]",
            tgrid.tau_start, tgrid.tau_end
        )));
    }

    let den: f64 = zgrid
        .weights
        .iter()
        .zip(&result.b_final)
        .map(|(w, b)| w * b.norm_sqr())
        .sum();
    if den <= 0.0 {
        return Err(Error::InvalidState(
            "zero spin-wave norm: character ratio denominator is degenerate".into(),
        ));
    }

    // trapezoid over the time samples inside the window
    let idx: Vec<usize> = (0..tgrid.n_steps)
        .filter(|&k| {
            let t = tgrid.tau(k);
            t >= lo - slack && t <= hi + slack
        })
        .collect();
    if idx.len() < 2 {
        return Err(invalid_arg("storage window holds fewer than two time samples"));
    }
    let h = tgrid.step();
    let mut num = 0.0;
    for (pos, &k) in idx.iter().enumerate() {
        let w = if pos == 0 || pos == idx.len() - 1 { h / 2.0 } else { h };
        let pz: f64 = zgrid
            .weights
            .iter()
            .enumerate()
            .map(|(i, wz)| wz * state.p[[i, k]].norm_sqr())
            .sum();
        num += w * pz;
    }
    Ok(num / (tau_s * den))
}

/// Character ratio of the pure-ATS reference run (theta = 2 pi, zero delay,
/// control duration equal to the signal duration) at the same memory point.
/// Deterministic given the grids, so values are reproducible bit for bit.
pub fn pure_ats_reference(m: &MemoryParams, grid: &GridOptions) -> Result<f64> {
    let g = ControlParams::new(2.0 * std::f64::consts::PI, 0.0, m.tau_sig)?;
    let (zg, tg) = default_grids(m, &g, grid)?;
    let r = simulate_storage(m, &g, &zg, &tg)?;
    character_ratio(&r, m, &zg, &tg)
}

/// Pure band/threshold rule. The EIT test wins over the adiabatic band tests;
/// the nonadiabatic cut applies first.
pub fn classify_label(adiabaticity: f64, c_tilde: f64) -> Label {
    if adiabaticity < 1.0 {
        Label::Nonadiabatic
    } else if c_tilde <= EIT_THRESHOLD {
        Label::Eit
    } else if adiabaticity < 3.0 {
        Label::AbsorbTransfer
    } else if adiabaticity <= 8.0 {
        Label::Ats
    } else {
        Label::Mixed
    }
}

/// Full diagnostics for an optimized point: reruns the stored solution with
/// field history, measures C, normalizes by the pure-ATS reference, and
/// applies the label rule.
pub fn classify(m: &MemoryParams, opt: &OptResult, grid: &GridOptions) -> Result<ProtocolDiagnostics> {
    let (zg, tg) = default_grids(m, &opt.best_g, grid)?;
    let r = simulate_storage(m, &opt.best_g, &zg, &tg)?;
    let c = character_ratio(&r, m, &zg, &tg)?;
    let c0 = pure_ats_reference(m, grid)?;
    classify_from_measurements(m, &opt.best_g, c, c0)
}

/// Label assembly from already-measured C and C0; split out so sweeps can
/// classify any control vector without a full optimizer result.
pub fn classify_from_measurements(
    m: &MemoryParams,
    g: &ControlParams,
    c: f64,
    c0: f64,
) -> Result<ProtocolDiagnostics> {
    if !(c >= 0.0) || !(c0 > 0.0) {
        return Err(Error::InvalidState(format!(
            "character measurements out of range: C = {c}, C0 = {c0}"
        )));
    }
    let ad = m.adiabaticity();
    let c_tilde = c / c0;
    Ok(ProtocolDiagnostics {
        adiabaticity: ad,
        effective_depth: ats_effective_depth(m, g.theta)?,
        character_ratio: c,
        normalized_character: c_tilde,
        label: classify_label(ad, c_tilde),
        alt_delay_band: g.delay.abs() <= 0.25 * m.tau_sig,
        alt_character_band: (0.75..=1.25).contains(&c_tilde),
        low_depth_warning: m.d < 2.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::cheb_grid;
    use crate::solver::{simulate_storage, EnergyLedger, FieldState};
    use approx::assert_relative_eq;
    use ndarray::Array2;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    #[test]
    fn adiabaticity_products() {
        assert_eq!(adiabaticity(&MemoryParams::resonant(10.0, 0.5).unwrap()), 5.0);
        assert_eq!(adiabaticity(&MemoryParams::resonant(50.0, 0.02).unwrap()), 1.0);
        assert_relative_eq!(
            adiabaticity(&MemoryParams::resonant(1.0, 0.1).unwrap()),
            0.1
        );
    }

    #[test]
    fn effective_depth_formula() {
        let m = MemoryParams::resonant(4.0 * std::f64::consts::LN_2, 1.0).unwrap();
        assert_relative_eq!(
            ats_effective_depth(&m, 2.0 * PI).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        let m2 = MemoryParams::resonant(5.545, 1.0).unwrap();
        assert_relative_eq!(
            ats_effective_depth(&m2, 2.0 * PI).unwrap(),
            2.0,
            max_relative = 1e-3
        );
        // doubling theta halves the effective depth
        let a = ats_effective_depth(&m2, 2.0 * PI).unwrap();
        let b = ats_effective_depth(&m2, 4.0 * PI).unwrap();
        assert_relative_eq!(a, 2.0 * b, epsilon = 1e-12);
        assert!(ats_effective_depth(&m2, 0.0).is_err());
        assert!(ats_effective_depth(&m2, -1.0).is_err());
    }

    fn synthetic_result(
        n_z: usize,
        n_t: usize,
        p_val: Complex64,
        b_val: Complex64,
    ) -> SolverResult {
        let state = FieldState {
            a: Array2::zeros((n_z, n_t)),
            p: Array2::from_elem((n_z, n_t), p_val),
            b: Array2::from_elem((n_z, n_t), b_val),
        };
        SolverResult {
            state: Some(state),
            b_final: vec![b_val; n_z],
            eta: 0.0,
            eta_total: 0.0,
            ledger: EnergyLedger {
                input: 1.0,
                transmitted: 0.0,
                residual: 0.0,
                decay: 0.0,
            },
        }
    }

    #[test]
    fn zero_polarization_gives_zero_character() {
        let m = MemoryParams::resonant(10.0, 1.0).unwrap();
        let zg = cheb_grid(16).unwrap();
        let tg = TimeGrid::new(-4.0, 4.0, 201).unwrap();
        let r = synthetic_result(zg.n(), tg.n_steps, Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0));
        assert_eq!(character_ratio(&r, &m, &zg, &tg).unwrap(), 0.0);
    }

    #[test]
    fn constant_fields_give_closed_form_character() {
        // |P|^2 = |B|^2 = 1 everywhere: C = (1/tau_s) * tau_s_quadrature * 1
        let m = MemoryParams::resonant(10.0, 1.0).unwrap();
        let zg = cheb_grid(24).unwrap();
        let tg = TimeGrid::new(-4.5, 4.5, 1601).unwrap();
        let r = synthetic_result(zg.n(), tg.n_steps, Complex64::new(0.0, 1.0), Complex64::new(1.0, 0.0));
        let c = character_ratio(&r, &m, &zg, &tg).unwrap();
        // trapezoid window quadrature approximates tau_s itself
        assert_relative_eq!(c, 1.0, max_relative = 2e-2);
    }

    #[test]
    fn zero_spin_wave_is_degenerate() {
        let m = MemoryParams::resonant(10.0, 1.0).unwrap();
        let zg = cheb_grid(16).unwrap();
        let tg = TimeGrid::new(-4.0, 4.0, 201).unwrap();
        let r = synthetic_result(zg.n(), tg.n_steps, Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        assert!(matches!(
            character_ratio(&r, &m, &zg, &tg),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn missing_history_rejected() {
        let m = MemoryParams::resonant(10.0, 0.5).unwrap();
        let g = ControlParams::new(2.0 * PI, 0.0, 0.5).unwrap();
        let (zg, tg) = default_grids(&m, &g, &GridOptions::default()).unwrap();
        let r = crate::solver::simulate_storage_light(&m, &g, &zg, &tg).unwrap();
        assert!(character_ratio(&r, &m, &zg, &tg).is_err());
    }

    #[test]
    fn pure_ats_reference_is_positive_and_bit_reproducible() {
        let grid = GridOptions::default();
        for d in [2.0, 10.0, 50.0] {
            let m = MemoryParams::resonant(d, 0.5).unwrap();
            let a = pure_ats_reference(&m, &grid).unwrap();
            let b = pure_ats_reference(&m, &grid).unwrap();
            assert!(a > 0.0, "C0 not positive at d={d}");
            assert_eq!(a.to_bits(), b.to_bits(), "C0 not reproducible at d={d}");
        }
    }

    #[test]
    fn label_rule_bands() {
        assert_eq!(classify_label(0.5, 1.0), Label::Nonadiabatic);
        assert_eq!(classify_label(0.5, 0.01), Label::Nonadiabatic);
        assert_eq!(classify_label(1.0, 1.0), Label::AbsorbTransfer);
        assert_eq!(classify_label(2.9, 1.0), Label::AbsorbTransfer);
        assert_eq!(classify_label(3.0, 1.0), Label::Ats);
        assert_eq!(classify_label(5.0, 1.0), Label::Ats);
        assert_eq!(classify_label(8.0, 1.0), Label::Ats);
        assert_eq!(classify_label(8.1, 1.0), Label::Mixed);
        // EIT beats any adiabatic band
        assert_eq!(classify_label(5.0, 0.1), Label::Eit);
        assert_eq!(classify_label(20.0, 0.05), Label::Eit);
    }

    #[test]
    fn label_round_trip() {
        for l in [
            Label::Nonadiabatic,
            Label::AbsorbTransfer,
            Label::Ats,
            Label::Mixed,
            Label::Eit,
        ] {
            assert_eq!(Label::parse(l.as_str()), Some(l));
        }
        assert_eq!(Label::parse("afc"), None);
    }

    #[test]
    fn eit_operating_point_has_small_character() {
        // deep-adiabatic point driven by the EIT-asymptote control
        let m = MemoryParams::resonant(50.0, 1.5).unwrap();
        let g = ControlParams::new(10.0 * PI, -0.55 * 1.5, 1.33 * 1.5).unwrap();
        let grid = GridOptions::default();
        let (zg, tg) = default_grids(&m, &g, &grid).unwrap();
        let r = simulate_storage(&m, &g, &zg, &tg).unwrap();
        let c = character_ratio(&r, &m, &zg, &tg).unwrap();
        let c0 = pure_ats_reference(&m, &grid).unwrap();
        assert!(c / c0 <= EIT_THRESHOLD, "C_tilde = {}", c / c0);
    }

    #[test]
    fn ats_point_has_unit_scale_character() {
        let m = MemoryParams::resonant(20.0, 0.25).unwrap();
        let g = ControlParams::new(2.0 * PI, 0.0, 0.25).unwrap();
        let grid = GridOptions::default();
        let (zg, tg) = default_grids(&m, &g, &grid).unwrap();
        let r = simulate_storage(&m, &g, &zg, &tg).unwrap();
        let c = character_ratio(&r, &m, &zg, &tg).unwrap();
        let c0 = pure_ats_reference(&m, &grid).unwrap();
        // the run is the reference itself
        assert_relative_eq!(c / c0, 1.0, epsilon = 1e-12);
    }
}
