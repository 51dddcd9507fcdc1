//! Gaussian control-field optimization: Nelder-Mead simplex over
//! (theta, delay, tau_ctrl) with protocol-inspired multi-start seeding, plus
//! the reduced theta-only optimization at zero delay.

use serde::{Deserialize, Serialize};

use crate::bound;
use crate::error::{Error, Result};
use crate::fields::{ControlParams, MemoryParams};
use crate::solver::{default_grids, simulate_storage_light, GridOptions};

/// Storage efficiency for one control setting; the objective maximized by
/// everything below. Grids are rebuilt per call so the window always covers
/// the candidate control pulse.
pub fn objective(m: &MemoryParams, g: &ControlParams, grid: &GridOptions) -> Result<f64> {
    let (zg, tg) = default_grids(m, g, grid)?;
    Ok(simulate_storage_light(m, g, &zg, &tg)?.eta)
}

#[derive(Debug, Clone)]
pub struct NmOptions {
    pub max_evals: usize,
    /// Stop when the simplex f-spread falls below this.
    pub f_tol: f64,
}

impl Default for NmOptions {
    fn default() -> Self {
        NmOptions {
            max_evals: 400,
            f_tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NmResult {
    pub x_best: Vec<f64>,
    pub f_best: f64,
    pub n_evals: usize,
    pub converged: bool,
}

/// Nelder-Mead simplex minimization: reflection 1, expansion 2, contraction
/// 0.5, shrink 0.5. Initial simplex edges are 10% of each coordinate with an
/// absolute floor of 0.05. A exhausted budget returns `converged = false`
/// rather than an error.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: &NmOptions) -> NmResult
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = x0.len();
    let mut n_evals = 0usize;
    let mut eval = |x: &[f64], n_evals: &mut usize| -> f64 {
        *n_evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    let fx0 = eval(x0, &mut n_evals);
    simplex.push((x0.to_vec(), fx0));
    for i in 0..dim {
        let mut x = x0.to_vec();
        x[i] += (0.1 * x0[i].abs()).max(0.05);
        let fx = eval(&x, &mut n_evals);
        simplex.push((x, fx));
    }

    let mut converged = false;
    while n_evals < opts.max_evals {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let spread = simplex[dim].1 - simplex[0].1;
        if spread.abs() <= opts.f_tol {
            converged = true;
            break;
        }

        // centroid of all but the worst vertex
        let mut centroid = vec![0.0; dim];
        for (x, _) in simplex.iter().take(dim) {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / dim as f64;
            }
        }
        let worst = simplex[dim].clone();
        let point = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = point(1.0);
        let fr = eval(&xr, &mut n_evals);
        if fr < simplex[0].1 {
            let xe = point(2.0);
            let fe = eval(&xe, &mut n_evals);
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[dim - 1].1 {
            simplex[dim] = (xr, fr);
        } else {
            let xc = if fr < worst.1 { point(0.5) } else { point(-0.5) };
            let fc = eval(&xc, &mut n_evals);
            if fc < worst.1.min(fr) {
                simplex[dim] = (xc, fc);
            } else {
                // shrink toward the best vertex
                let best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    for (x, b) in vertex.0.iter_mut().zip(&best) {
                        *x = b + 0.5 * (*x - b);
                    }
                    vertex.1 = eval(&vertex.0, &mut n_evals);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    NmResult {
        x_best: simplex[0].0.clone(),
        f_best: simplex[0].1,
        n_evals,
        converged,
    }
}

/// Outcome of one seeded Nelder-Mead run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub label: String,
    pub g: ControlParams,
    pub eta: f64,
    pub n_evals: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptResult {
    pub best_g: ControlParams,
    pub eta: f64,
    /// eta / eta_opt(d); may slightly exceed 1 from discretization, in which
    /// case `bound_exceeded` is set instead of clipping.
    pub eta_ratio: f64,
    pub eta_opt: f64,
    pub bound_exceeded: bool,
    pub n_evals: usize,
    pub converged: bool,
    pub seed_label: String,
    pub seeds: Vec<SeedOutcome>,
}

#[derive(Debug, Clone)]
pub struct OptimizeOptions {
    pub grid: GridOptions,
    pub nm: NmOptions,
    /// Precomputed eta_opt(d); computed at the default bound grid if absent.
    pub eta_opt: Option<f64>,
    /// Replacement for the three protocol-archetype seeds.
    pub seeds: Option<Vec<(String, ControlParams)>>,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            grid: GridOptions::default(),
            nm: NmOptions::default(),
            eta_opt: None,
            seeds: None,
        }
    }
}

/// The three protocol-archetype start points: absorb-then-transfer (pi pulse
/// trailing the signal), ATS (2 pi pulse at zero delay, matched duration),
/// EIT (4 pi pulse leading the signal, asymptotic delay and duration).
pub fn default_seeds(m: &MemoryParams) -> Vec<(String, ControlParams)> {
    let t = m.tau_sig;
    vec![
        (
            "absorb_transfer".into(),
            ControlParams::new(std::f64::consts::PI, 0.5 * t, 0.5 * t).unwrap(),
        ),
        (
            "ats".into(),
            ControlParams::new(2.0 * std::f64::consts::PI, 0.0, t).unwrap(),
        ),
        (
            "eit".into(),
            ControlParams::new(4.0 * std::f64::consts::PI, -0.55 * t, 1.33 * t).unwrap(),
        ),
    ]
}

// Optimization runs in (ln theta, delay / tau_sig, ln tau_ctrl) so that
// positivity is structural and the scales are comparable.
fn to_coords(g: &ControlParams, tau_sig: f64) -> Vec<f64> {
    vec![g.theta.ln(), g.delay / tau_sig, g.tau_ctrl.ln()]
}

fn from_coords(x: &[f64], tau_sig: f64) -> Option<ControlParams> {
    let theta = x[0].exp();
    let delay = x[1] * tau_sig;
    let tau_ctrl = x[2].exp();
    // generous search box; keeps runaway simplex steps from requesting
    // absurdly long or short simulations
    let pi = std::f64::consts::PI;
    if theta < 0.1 * pi
        || theta > 40.0 * pi
        || x[1].abs() > 5.0
        || tau_ctrl < 0.05 * tau_sig
        || tau_ctrl > 12.0 * tau_sig
    {
        return None;
    }
    ControlParams::new(theta, delay, tau_ctrl).ok()
}

/// Maximizes storage efficiency over the full Gaussian control vector,
/// multi-started from the protocol seeds (ties broken in seed order).
pub fn optimize_control(m: &MemoryParams, opts: &OptimizeOptions) -> Result<OptResult> {
    let seeds = opts.seeds.clone().unwrap_or_else(|| default_seeds(m));
    let mut outcomes = Vec::with_capacity(seeds.len());
    for (label, seed_g) in &seeds {
        let x0 = to_coords(seed_g, m.tau_sig);
        let nm = nelder_mead(
            |x| match from_coords(x, m.tau_sig) {
                Some(g) => match objective(m, &g, &opts.grid) {
                    Ok(eta) => -eta,
                    Err(_) => f64::INFINITY,
                },
                None => f64::INFINITY,
            },
            &x0,
            &opts.nm,
        );
        if let Some(g) = from_coords(&nm.x_best, m.tau_sig) {
            if nm.f_best.is_finite() {
                outcomes.push(SeedOutcome {
                    label: label.clone(),
                    g,
                    eta: -nm.f_best,
                    n_evals: nm.n_evals,
                    converged: nm.converged,
                });
            }
        }
    }
    finish(m, opts, outcomes)
}

/// Reduced one-parameter optimization: delay fixed to zero,
/// control duration fixed to the signal duration, pulse area free. The
/// theta = 2 pi point is always evaluated as a simplex vertex, so the result
/// can never fall below it.
pub fn optimize_theta_only(m: &MemoryParams, opts: &OptimizeOptions) -> Result<OptResult> {
    let make = |theta: f64| ControlParams::new(theta, 0.0, m.tau_sig).unwrap();
    let x0 = vec![(2.0 * std::f64::consts::PI).ln()];
    let nm = nelder_mead(
        |x| {
            let theta = x[0].exp();
            match objective(m, &make(theta), &opts.grid) {
                Ok(eta) => -eta,
                Err(_) => f64::INFINITY,
            }
        },
        &x0,
        &opts.nm,
    );
    let outcome = if nm.f_best.is_finite() {
        vec![SeedOutcome {
            label: "theta_only".into(),
            g: make(nm.x_best[0].exp()),
            eta: -nm.f_best,
            n_evals: nm.n_evals,
            converged: nm.converged,
        }]
    } else {
        Vec::new()
    };
    finish(m, opts, outcome)
}

fn finish(
    m: &MemoryParams,
    opts: &OptimizeOptions,
    outcomes: Vec<SeedOutcome>,
) -> Result<OptResult> {
    let best = outcomes
        .iter()
        .max_by(|a, b| a.eta.partial_cmp(&b.eta).unwrap())
        .cloned()
        .ok_or_else(|| {
            Error::OptimizationFailed(format!(
                "no seed produced a finite efficiency at d={}, tau_sig={}",
                m.d, m.tau_sig
            ))
        })?;
    // fresh evaluation at the winner; deterministic, so this matches the
    // value seen during the search
    let eta = objective(m, &best.g, &opts.grid)?;
    let eta_opt = match opts.eta_opt {
        Some(v) => v,
        None => bound::eta_opt_default(m.d)?,
    };
    let eta_ratio = eta / eta_opt;
    let n_evals = outcomes.iter().map(|o| o.n_evals).sum::<usize>() + 1;
    Ok(OptResult {
        best_g: best.g,
        eta,
        eta_ratio,
        eta_opt,
        bound_exceeded: eta_ratio > 1.0 + 5e-3,
        n_evals,
        converged: best.converged,
        seed_label: best.label,
        seeds: outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn nm_quadratic_bowl() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + (x[1] - 2.0).powi(2) + (x[2] + 3.0).powi(2);
        let r = nelder_mead(
            f,
            &[0.0, 0.0, 0.0],
            &NmOptions {
                max_evals: 600,
                f_tol: 1e-12,
            },
        );
        assert!(r.converged);
        assert!((r.x_best[0] - 1.0).abs() < 1e-4);
        assert!((r.x_best[1] - 2.0).abs() < 1e-4);
        assert!((r.x_best[2] + 3.0).abs() < 1e-4);
    }

    #[test]
    fn nm_rosenbrock() {
        let f = |x: &[f64]| {
            100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2)
        };
        let r = nelder_mead(
            f,
            &[-1.2, 1.0],
            &NmOptions {
                max_evals: 2000,
                f_tol: 1e-14,
            },
        );
        assert!((r.x_best[0] - 1.0).abs() < 1e-3, "x = {:?}", r.x_best);
        assert!((r.x_best[1] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn nm_flat_objective_converges_immediately() {
        let r = nelder_mead(|_| 1.0, &[0.3, 0.4], &NmOptions::default());
        assert!(r.converged);
        assert_eq!(r.x_best, vec![0.3, 0.4]);
        assert_eq!(r.f_best, 1.0);
    }

    #[test]
    fn nm_budget_exhaustion_is_not_an_error() {
        let f = |x: &[f64]| x[0] * x[0];
        let r = nelder_mead(
            f,
            &[5.0],
            &NmOptions {
                max_evals: 4,
                f_tol: 1e-30,
            },
        );
        assert!(!r.converged);
        assert!(r.n_evals <= 6);
    }

    #[test]
    fn objective_zero_theta_is_zero() {
        let m = MemoryParams::resonant(10.0, 0.5).unwrap();
        let g = ControlParams::new(0.0, 0.0, 0.5).unwrap();
        assert_eq!(objective(&m, &g, &GridOptions::default()).unwrap(), 0.0);
    }

    #[test]
    fn objective_is_deterministic_and_delegates() {
        let m = MemoryParams::resonant(10.0, 0.5).unwrap();
        let g = ControlParams::new(2.0 * PI, 0.0, 0.5).unwrap();
        let opts = GridOptions::default();
        let a = objective(&m, &g, &opts).unwrap();
        let b = objective(&m, &g, &opts).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        let (zg, tg) = default_grids(&m, &g, &opts).unwrap();
        let direct = simulate_storage_light(&m, &g, &zg, &tg).unwrap().eta;
        assert_eq!(a.to_bits(), direct.to_bits());
    }

    #[test]
    fn reevaluation_consistency() {
        let m = MemoryParams::resonant(10.0, 0.5).unwrap();
        let opts = OptimizeOptions {
            eta_opt: Some(0.8142145583512725),
            ..Default::default()
        };
        let r = optimize_control(&m, &opts).unwrap();
        let fresh = objective(&m, &r.best_g, &opts.grid).unwrap();
        assert_relative_eq!(fresh, r.eta, epsilon = 1e-10);
        // optimizer never loses to its own seeds
        for s in &r.seeds {
            assert!(r.eta >= s.eta - 1e-12);
        }
        assert!(r.eta_ratio <= 1.0 + 5e-3);
    }
}
