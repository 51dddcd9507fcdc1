//! Shape-based optimization benchmark: builds the discretized storage map
//! from input-signal samples to the final spin wave, takes its largest
//! singular value as the signal-shaping efficiency bound, and compares that
//! bound against Gaussian-optimized storage.

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bound;
use crate::error::{invalid_arg, Result};
use crate::fields::{signal_envelope, ControlParams, MemoryParams};
use crate::numerics::{largest_singular_triplet, trapezoid_weights};
use crate::optimizer::{optimize_control, OptimizeOptions};
use crate::solver::{default_grids, simulate_with_input, GridOptions};

/// Fewest basis columns the map builder accepts.
pub const MIN_BASIS_COLUMNS: usize = 32;

/// Default basis resolution; convergence is checked by doubling.
pub const DEFAULT_BASIS_COLUMNS: usize = 96;

#[derive(Debug, Clone)]
pub struct ShapeOptions {
    pub n_basis: usize,
    pub grid: GridOptions,
}

impl Default for ShapeOptions {
    fn default() -> Self {
        ShapeOptions {
            n_basis: DEFAULT_BASIS_COLUMNS,
            grid: GridOptions::default(),
        }
    }
}

/// Discretized linear storage map. `matrix` carries the quadrature weights
/// symmetrically (sqrt of the z weight on rows, sqrt of the basis-grid tau
/// weight on columns), so its largest singular value squared is the best
/// storage efficiency over input shapes.
#[derive(Debug, Clone)]
pub struct StorageMap {
    pub m: MemoryParams,
    pub g: ControlParams,
    pub matrix: Array2<Complex64>,
    /// Coarse tau nodes carrying the input-shape coefficients.
    pub basis_taus: Vec<f64>,
    /// Trapezoid weights of the basis grid.
    pub basis_weights: Vec<f64>,
    /// Clenshaw-Curtis weights of the z grid, for unfolding map outputs.
    pub z_weights: Vec<f64>,
}

/// Output of [`optimal_signal_efficiency`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapeResult {
    /// Largest singular value squared: efficiency of the optimal input mode.
    pub eta_shape: f64,
    /// Unit-norm optimal input envelope on the basis grid.
    pub optimal_mode: Vec<Complex64>,
    /// Set when the map is numerically zero and the mode is arbitrary.
    pub degenerate: bool,
}

/// One row of the shape-vs-Gaussian comparison table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareRow {
    pub d: f64,
    pub tau_sig: f64,
    pub eta_gaussian: f64,
    pub eta_shape: f64,
    pub eta_opt: f64,
    pub best_g: ControlParams,
}

// Local cubic Lagrange weights on the four nodes bracketing the interval,
// t in [0,1] measured from node j; exact on cubics.
fn cardinal_weights(t: f64) -> [f64; 4] {
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

/// Interpolates basis coefficients (on the uniform coarse grid t0 + j*delta)
/// to the given sample times.
pub fn interpolate_basis(
    t0: f64,
    delta: f64,
    coeffs: &[Complex64],
    taus: &[f64],
) -> Vec<Complex64> {
    let n = coeffs.len();
    let clamp = |j: isize| -> Complex64 { coeffs[j.clamp(0, n as isize - 1) as usize] };
    taus.iter()
        .map(|&tau| {
            let s = (tau - t0) / delta;
            let j = (s.floor() as isize).clamp(0, n as isize - 2);
            let t = s - j as f64;
            let w = cardinal_weights(t);
            clamp(j - 1) * w[0] + clamp(j) * w[1] + clamp(j + 1) * w[2] + clamp(j + 2) * w[3]
        })
        .collect()
}

/// Builds the storage map by running the solver once per basis column.
pub fn build_storage_map(
    m: &MemoryParams,
    g: &ControlParams,
    opts: &ShapeOptions,
) -> Result<StorageMap> {
    if opts.n_basis < MIN_BASIS_COLUMNS {
        return Err(invalid_arg(format!(
            "storage map needs at least {MIN_BASIS_COLUMNS} basis columns, got {}",
            opts.n_basis
        )));
    }
    let (zg, tg) = default_grids(m, g, &opts.grid)?;
    let n_b = opts.n_basis;
    let delta = (tg.tau_end - tg.tau_start) / (n_b - 1) as f64;
    let basis_taus: Vec<f64> = (0..n_b).map(|j| tg.tau_start + j as f64 * delta).collect();
    let basis_weights = trapezoid_weights(n_b, delta);
    let taus = tg.taus();

    let columns: Vec<Result<Vec<Complex64>>> = (0..n_b)
        .into_par_iter()
        .map(|j| {
            let mut coeffs = vec![Complex64::new(0.0, 0.0); n_b];
            coeffs[j] = Complex64::new(1.0, 0.0);
            let a_in = interpolate_basis(tg.tau_start, delta, &coeffs, &taus);
            Ok(simulate_with_input(m, g, &a_in, &zg, &tg, false)?.b_final)
        })
        .collect();

    let mut matrix = Array2::<Complex64>::zeros((zg.n(), n_b));
    for (j, col) in columns.into_iter().enumerate() {
        let col = col?;
        let sw = basis_weights[j].sqrt();
        for (i, b) in col.into_iter().enumerate() {
            matrix[[i, j]] = b * (zg.weights[i].sqrt() / sw);
        }
    }
    Ok(StorageMap {
        m: *m,
        g: *g,
        matrix,
        basis_taus,
        basis_weights,
        z_weights: zg.weights.clone(),
    })
}

/// Applies the map to input-shape coefficients on the basis grid, returning
/// the final spin wave B(z, tau_end) on the z grid.
pub fn apply_map(map: &StorageMap, coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let (n_z, n_b) = map.matrix.dim();
    if coeffs.len() != n_b {
        return Err(invalid_arg(format!(
            "coefficient vector has {} entries, map has {n_b} columns",
            coeffs.len()
        )));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); n_z];
    for i in 0..n_z {
        let mut s = Complex64::new(0.0, 0.0);
        for j in 0..n_b {
            // unfold the column weight to act on raw samples
            s += map.matrix[[i, j]] * map.basis_weights[j].sqrt() * coeffs[j];
        }
        out[i] = s / map.z_weights[i].sqrt();
    }
    Ok(out)
}

/// Largest singular value squared and the matching right-singular vector:
/// the best storage efficiency over input shapes and the envelope achieving
/// it.
pub fn optimal_signal_efficiency(map: &StorageMap) -> Result<ShapeResult> {
    let frob: f64 = map.matrix.iter().map(|v| v.norm_sqr()).sum();
    let n_b = map.matrix.dim().1;
    if frob < 1e-24 {
        let mut mode = vec![Complex64::new(0.0, 0.0); n_b];
        mode[0] = Complex64::new(1.0, 0.0);
        return Ok(ShapeResult {
            eta_shape: 0.0,
            optimal_mode: mode,
            degenerate: true,
        });
    }
    let (sigma, _u, v) = largest_singular_triplet(&map.matrix)?;
    Ok(ShapeResult {
        eta_shape: sigma * sigma,
        optimal_mode: v,
        degenerate: false,
    })
}

#[derive(Debug, Clone, Default)]
pub struct CompareOptions {
    pub shape: ShapeOptions,
    pub optimize: OptimizeOptions,
}

/// Gaussian-optimized efficiency versus the signal-shaping bound at fixed d
/// over a list of signal durations. The shape value at each duration is the
/// largest sigma^2 over the maps built from every seed-optimized control.
pub fn compare_methods(
    d: f64,
    tau_list: &[f64],
    opts: &CompareOptions,
) -> Result<Vec<CompareRow>> {
    if tau_list.is_empty() {
        return Err(invalid_arg("empty duration list"));
    }
    let eta_opt = match opts.optimize.eta_opt {
        Some(v) => v,
        None => bound::eta_opt_default(d)?,
    };
    let mut rows = Vec::with_capacity(tau_list.len());
    for &tau in tau_list {
        let m = MemoryParams::resonant(d, tau)?;
        let oo = OptimizeOptions {
            eta_opt: Some(eta_opt),
            ..opts.optimize.clone()
        };
        let opt = optimize_control(&m, &oo)?;
        let mut eta_shape = 0.0f64;
        for seed in &opt.seeds {
            let map = build_storage_map(&m, &seed.g, &opts.shape)?;
            let r = optimal_signal_efficiency(&map)?;
            eta_shape = eta_shape.max(r.eta_shape);
        }
        rows.push(CompareRow {
            d,
            tau_sig: tau,
            eta_gaussian: opt.eta,
            eta_shape,
            eta_opt,
            best_g: opt.best_g,
        });
    }
    Ok(rows)
}

/// Samples the Gaussian signal envelope on a map's basis grid.
pub fn gaussian_coefficients(map: &StorageMap) -> Result<Vec<Complex64>> {
    map.basis_taus
        .iter()
        .map(|&t| Ok(Complex64::new(signal_envelope(t, map.m.tau_sig)?, 0.0)))
        .collect()
}
