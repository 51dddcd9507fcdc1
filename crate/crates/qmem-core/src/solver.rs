//! Maxwell-Bloch integrator for Lambda-type storage.
//!
//! Time stepping is Heun's predictor-corrector on the atomic coherences
//! (P, B); at every stage the signal field A is recovered from P by solving
//! the spatial boundary-value problem D A = -sqrt(d) P with the first row of
//! the Chebyshev differentiation matrix replaced by the input boundary
//! condition A(0, tau) = A_in(tau).

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};
use crate::fields::{control_envelope, signal_envelope, ControlParams, MemoryParams};
use crate::numerics::{cheb_grid, trapezoid_weights, ChebGrid, Lu, TimeGrid};

/// Discretization controls; the defaults are what every higher-level module
/// uses unless explicitly overridden.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    /// Number of Chebyshev collocation points in z.
    pub n_z: usize,
    /// Time step = min(sigma_sig, sigma_ctrl) / step_divisor.
    pub step_divisor: f64,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions {
            n_z: 48,
            step_divisor: 20.0,
        }
    }
}

impl GridOptions {
    /// Short deterministic identifier embedded in sweep output.
    pub fn fingerprint(&self) -> String {
        format!("nz{}div{}", self.n_z, self.step_divisor)
    }
}

/// Builds the z and tau grids for a simulation. The tau window covers both
/// pulses out to four FWHM on either side.
pub fn default_grids(
    m: &MemoryParams,
    g: &ControlParams,
    opts: &GridOptions,
) -> Result<(ChebGrid, TimeGrid)> {
    let zgrid = cheb_grid(opts.n_z)?;
    let tgrid = time_grid(m, g, opts)?;
    Ok((zgrid, tgrid))
}

/// Time window [min(-4 tau_sig, delay - 4 tau_ctrl), max(4 tau_sig,
/// delay + 4 tau_ctrl)] with uniform step min(sigma)/divisor.
pub fn time_grid(m: &MemoryParams, g: &ControlParams, opts: &GridOptions) -> Result<TimeGrid> {
    if !(opts.step_divisor > 0.0) || opts.n_z < 8 {
        return Err(invalid_arg("grid options: need n_z >= 8 and step_divisor > 0"));
    }
    let t0 = (-4.0 * m.tau_sig).min(g.delay - 4.0 * g.tau_ctrl);
    let t1 = (4.0 * m.tau_sig).max(g.delay + 4.0 * g.tau_ctrl);
    let target = m.sigma_sig().min(g.sigma_ctrl()) / opts.step_divisor;
    let n_steps = (((t1 - t0) / target).ceil() as usize + 1).max(2);
    TimeGrid::new(t0, t1, n_steps)
}

/// Full field history on the (z, tau) grid.
#[derive(Debug, Clone)]
pub struct FieldState {
    /// Signal amplitude A(z, tau), n_z x n_t.
    pub a: Array2<Complex64>,
    /// Polarization coherence P(z, tau).
    pub p: Array2<Complex64>,
    /// Spin-wave coherence B(z, tau).
    pub b: Array2<Complex64>,
}

/// Photon-number bookkeeping for one storage run.
#[derive(Debug, Clone, Copy)]
pub struct EnergyLedger {
    /// Input photon number, integral of |A_in|^2 over tau.
    pub input: f64,
    /// Photon number leaving the far face, integral of |A(1, tau)|^2.
    pub transmitted: f64,
    /// Polarization plus spin population left in the medium at tau_end.
    pub residual: f64,
    /// Cumulative decay loss 2 * integral of Re(gbar)|P|^2 + gamma_B |B|^2.
    pub decay: f64,
}

#[derive(Debug, Clone)]
pub struct SolverResult {
    /// Field history; present only when requested.
    pub state: Option<FieldState>,
    /// Spin wave at the final time, B(z, tau_end).
    pub b_final: Vec<Complex64>,
    /// Storage efficiency: stored spin population over input photon number.
    pub eta: f64,
    /// Total (storage plus backward-retrieval) efficiency, eta^2.
    pub eta_total: f64,
    pub ledger: EnergyLedger,
}

/// Simulates storage of the Gaussian input signal, keeping the full field
/// history.
pub fn simulate_storage(
    m: &MemoryParams,
    g: &ControlParams,
    zgrid: &ChebGrid,
    tgrid: &TimeGrid,
) -> Result<SolverResult> {
    simulate_storage_impl(m, g, zgrid, tgrid, true)
}

/// Same as [`simulate_storage`] but discards the field history; this is the
/// fast path used inside optimization loops.
pub fn simulate_storage_light(
    m: &MemoryParams,
    g: &ControlParams,
    zgrid: &ChebGrid,
    tgrid: &TimeGrid,
) -> Result<SolverResult> {
    simulate_storage_impl(m, g, zgrid, tgrid, false)
}

fn simulate_storage_impl(
    m: &MemoryParams,
    g: &ControlParams,
    zgrid: &ChebGrid,
    tgrid: &TimeGrid,
    store: bool,
) -> Result<SolverResult> {
    check_window(m, g, tgrid)?;
    let a_in: Vec<Complex64> = tgrid
        .taus()
        .iter()
        .map(|&tau| Complex64::new(signal_envelope(tau, m.tau_sig).unwrap(), 0.0))
        .collect();
    let omega: Vec<f64> = tgrid.taus().iter().map(|&tau| control_envelope(tau, g)).collect();
    integrate(m, zgrid, tgrid, &a_in, &omega, store)
}

/// Storage run with an arbitrary sampled input envelope; the control field
/// is still the Gaussian defined by `g`. Used by the shape-based optimizer.
pub fn simulate_with_input(
    m: &MemoryParams,
    g: &ControlParams,
    a_in: &[Complex64],
    zgrid: &ChebGrid,
    tgrid: &TimeGrid,
    store: bool,
) -> Result<SolverResult> {
    if a_in.len() != tgrid.n_steps {
        return Err(invalid_arg(format!(
            "input envelope has {} samples, time grid has {}",
            a_in.len(),
            tgrid.n_steps
        )));
    }
    let omega: Vec<f64> = tgrid.taus().iter().map(|&tau| control_envelope(tau, g)).collect();
    integrate(m, zgrid, tgrid, a_in, &omega, store)
}

fn check_window(m: &MemoryParams, g: &ControlParams, tgrid: &TimeGrid) -> Result<()> {
    let slack = 1e-9 * (1.0 + m.tau_sig.max(g.tau_ctrl));
    let need_lo = (-4.0 * m.tau_sig).min(g.delay - 4.0 * g.tau_ctrl);
    let need_hi = (4.0 * m.tau_sig).max(g.delay + 4.0 * g.tau_ctrl);
    if tgrid.tau_start > need_lo + slack || tgrid.tau_end < need_hi - slack {
        return Err(invalid_arg(format!(
            "time window [{}, {}] does not cover the pulses (need [{need_lo}, {need_hi}])",
            tgrid.tau_start, tgrid.tau_end
        )));
    }
    Ok(())
}

fn integrate(
    m: &MemoryParams,
    zgrid: &ChebGrid,
    tgrid: &TimeGrid,
    a_in: &[Complex64],
    omega: &[f64],
    store: bool,
) -> Result<SolverResult> {
    let n_z = zgrid.n();
    let n_t = tgrid.n_steps;
    let h = tgrid.step();
    let sqrt_d = m.d.sqrt();
    let gbar = Complex64::new(1.0, -m.delta);
    let gamma_b = m.gamma_b;

    // D with the first row replaced by the boundary condition, inverted once.
    let mut dbc = zgrid.diff.clone();
    for j in 0..n_z {
        dbc[[0, j]] = 0.0;
    }
    dbc[[0, 0]] = 1.0;
    let inv = Lu::factor(dbc)?.inverse(n_z);

    let solve_a = |p: &[Complex64], bc: Complex64, out: &mut [Complex64]| {
        for i in 0..n_z {
            let row = inv.row(i);
            let mut s = row[0] * bc;
            for j in 1..n_z {
                s -= row[j] * (sqrt_d * p[j]);
            }
            out[i] = s;
        }
    };

    let zero = Complex64::new(0.0, 0.0);
    let mut p = vec![zero; n_z];
    let mut b = vec![zero; n_z];
    let mut a = vec![zero; n_z];
    solve_a(&p, a_in[0], &mut a);

    let mut state = if store {
        Some(FieldState {
            a: Array2::zeros((n_z, n_t)),
            p: Array2::zeros((n_z, n_t)),
            b: Array2::zeros((n_z, n_t)),
        })
    } else {
        None
    };

    let tw = |k: usize| if k == 0 || k == n_t - 1 { h / 2.0 } else { h };
    let decay_rate = |p: &[Complex64], b: &[Complex64]| -> f64 {
        zgrid
            .weights
            .iter()
            .enumerate()
            .map(|(i, w)| w * (p[i].norm_sqr() + gamma_b * b[i].norm_sqr()))
            .sum()
    };

    let mut input = 0.0;
    let mut transmitted = 0.0;
    let mut decay = 0.0;

    let mut f1_p = vec![zero; n_z];
    let mut f1_b = vec![zero; n_z];
    let mut p_star = vec![zero; n_z];
    let mut b_star = vec![zero; n_z];
    let mut a_star = vec![zero; n_z];

    for k in 0..n_t {
        if let Some(st) = state.as_mut() {
            for i in 0..n_z {
                st.a[[i, k]] = a[i];
                st.p[[i, k]] = p[i];
                st.b[[i, k]] = b[i];
            }
        }
        let w = tw(k);
        input += w * a_in[k].norm_sqr();
        transmitted += w * a[n_z - 1].norm_sqr();
        decay += w * decay_rate(&p, &b);
        if k == n_t - 1 {
            break;
        }

        let om0 = Complex64::new(0.0, -0.5 * omega[k]);
        let om1 = Complex64::new(0.0, -0.5 * omega[k + 1]);
        for i in 0..n_z {
            f1_p[i] = -gbar * p[i] + sqrt_d * a[i] + om0 * b[i];
            f1_b[i] = -gamma_b * b[i] + om0 * p[i];
            p_star[i] = p[i] + h * f1_p[i];
            b_star[i] = b[i] + h * f1_b[i];
        }
        solve_a(&p_star, a_in[k + 1], &mut a_star);
        let mut check = 0.0;
        for i in 0..n_z {
            let f2_p = -gbar * p_star[i] + sqrt_d * a_star[i] + om1 * b_star[i];
            let f2_b = -gamma_b * b_star[i] + om1 * p_star[i];
            p[i] += 0.5 * h * (f1_p[i] + f2_p);
            b[i] += 0.5 * h * (f1_b[i] + f2_b);
            check += p[i].norm_sqr() + b[i].norm_sqr();
        }
        if !check.is_finite() {
            return Err(Error::NumericalInstability { step: k + 1 });
        }
        solve_a(&p, a_in[k + 1], &mut a);
    }

    let residual: f64 = zgrid
        .weights
        .iter()
        .enumerate()
        .map(|(i, w)| w * (p[i].norm_sqr() + b[i].norm_sqr()))
        .sum();
    decay *= 2.0;

    let eta = storage_efficiency(&b, a_in, zgrid, tgrid)?;
    Ok(SolverResult {
        state,
        b_final: b,
        eta,
        eta_total: eta * eta,
        ledger: EnergyLedger {
            input,
            transmitted,
            residual,
            decay,
        },
    })
}

/// Storage efficiency: spin-wave population at the final time over the input
/// photon number. Clenshaw-Curtis in z, trapezoid in tau.
pub fn storage_efficiency(
    b_final: &[Complex64],
    a_in: &[Complex64],
    zgrid: &ChebGrid,
    tgrid: &TimeGrid,
) -> Result<f64> {
    if b_final.is_empty() || a_in.is_empty() {
        return Err(Error::InvalidState("empty fields in storage_efficiency".into()));
    }
    if b_final.len() != zgrid.n() || a_in.len() != tgrid.n_steps {
        return Err(invalid_arg("field lengths do not match the grids"));
    }
    let num: f64 = zgrid
        .weights
        .iter()
        .zip(b_final)
        .map(|(w, b)| w * b.norm_sqr())
        .sum();
    let wt = trapezoid_weights(tgrid.n_steps, tgrid.step());
    let den: f64 = wt.iter().zip(a_in).map(|(w, a)| w * a.norm_sqr()).sum();
    if den == 0.0 {
        return Err(Error::InvalidState("zero input photon number".into()));
    }
    Ok(num / den)
}

/// Relative energy-ledger residual
/// |input - transmitted - residual - decay| / input.
pub fn energy_balance(result: &SolverResult) -> Result<f64> {
    let l = &result.ledger;
    if l.input == 0.0 {
        return Err(Error::InvalidState("zero input photon number in energy ledger".into()));
    }
    Ok((l.input - l.transmitted - l.residual - l.decay).abs() / l.input)
}

/// Spin-wave norm integral at time index `k` from a stored field history.
pub fn spin_norm_at(state: &FieldState, zgrid: &ChebGrid, k: usize) -> f64 {
    zgrid
        .weights
        .iter()
        .enumerate()
        .map(|(i, w)| w * state.b[[i, k]].norm_sqr())
        .sum()
}
