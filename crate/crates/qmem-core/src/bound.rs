//! Protocol-independent storage-efficiency bound: the largest eigenvalue of
//! the storage kernel K(z,z') = (d/2) exp(-d(z+z')/2) I0(d sqrt(z z')).
//!
//! The kernel is assembled in scaled-Bessel form,
//! (d/2) exp(-d (sqrt z - sqrt z')^2 / 2) i0e(d sqrt(z z')),
//! whose exponent is never positive, so entries stay finite at any depth.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{invalid_arg, Result};
use crate::numerics::{bessel_i0_scaled, largest_symmetric_eigenvalue, trapezoid_weights};

/// Discretized bound kernel with trapezoid quadrature weights folded in
/// symmetrically, so its top eigenvalue is the storage efficiency.
#[derive(Debug, Clone)]
pub struct BoundKernel {
    pub d: f64,
    pub n: usize,
    pub matrix: Array2<f64>,
}

/// Default grid size for [`eta_opt_default`]; chosen so the Richardson check
/// against 2n stays below 1e-4 across d = 1 to 50.
pub const DEFAULT_BOUND_N: usize = 2000;

/// Assembles the kernel on a uniform n-point grid over [0,1].
pub fn kernel_matrix(d: f64, n: usize) -> Result<BoundKernel> {
    if !d.is_finite() || d <= 0.0 {
        return Err(invalid_arg(format!("optical depth must be > 0, got {d}")));
    }
    if n < 100 {
        return Err(invalid_arg(format!("bound grid needs n >= 100, got {n}")));
    }
    let h = 1.0 / (n - 1) as f64;
    let z: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
    let sz: Vec<f64> = z.iter().map(|v| v.sqrt()).collect();
    let w = trapezoid_weights(n, h);
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();

    let mut matrix = Array2::<f64>::zeros((n, n));
    {
        let rows: Vec<(usize, &mut [f64])> = matrix
            .outer_iter_mut()
            .into_iter()
            .enumerate()
            .map(|(i, r)| (i, r.into_slice().unwrap()))
            .collect();
        rows.into_par_iter().for_each(|(i, row)| {
            for j in 0..n {
                let ds = sz[i] - sz[j];
                let val = 0.5
                    * d
                    * (-0.5 * d * ds * ds).exp()
                    * bessel_i0_scaled(d * sz[i] * sz[j]).unwrap();
                row[j] = val * sw[i] * sw[j];
            }
        });
    }
    // enforce exact symmetry against rounding differences
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (matrix[[i, j]] + matrix[[j, i]]);
            matrix[[i, j]] = v;
            matrix[[j, i]] = v;
        }
    }
    Ok(BoundKernel { d, n, matrix })
}

/// Maximum achievable storage efficiency at optical depth `d` on an n-point
/// kernel grid.
pub fn eta_opt(d: f64, n: usize) -> Result<f64> {
    let kernel = kernel_matrix(d, n)?;
    largest_symmetric_eigenvalue(&kernel.matrix)
}

/// eta_opt at the default grid plus the Richardson delta |eta(n) - eta(2n)|.
pub fn eta_opt_checked(d: f64, n: usize) -> Result<(f64, f64)> {
    let coarse = eta_opt(d, n)?;
    let fine = eta_opt(d, 2 * n)?;
    Ok((coarse, (coarse - fine).abs()))
}

/// eta_opt at the default desk-scale grid size.
pub fn eta_opt_default(d: f64) -> Result<f64> {
    eta_opt(d, DEFAULT_BOUND_N)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_bad_arguments() {
        assert!(kernel_matrix(0.0, 200).is_err());
        assert!(kernel_matrix(-1.0, 200).is_err());
        assert!(kernel_matrix(1.0, 99).is_err());
    }

    #[test]
    fn diagonal_entry_closed_form() {
        let d = 10.0;
        let n = 200;
        let k = kernel_matrix(d, n).unwrap();
        let h = 1.0 / (n - 1) as f64;
        // at z = 0 the scaled Bessel factor is 1, so K_00 = (d/2) w_0
        assert_relative_eq!(k.matrix[[0, 0]], 0.5 * d * (h / 2.0), epsilon = 1e-14);
        // generic diagonal entry: (d/2) i0e(d z) w(z)
        let i = 57;
        let z = i as f64 * h;
        let expected = 0.5 * d * bessel_i0_scaled(d * z).unwrap() * h;
        assert_relative_eq!(k.matrix[[i, i]], expected, max_relative = 1e-12);
    }

    #[test]
    fn kernel_is_symmetric() {
        let k = kernel_matrix(7.0, 150).unwrap();
        for i in 0..k.n {
            for j in 0..k.n {
                assert_eq!(k.matrix[[i, j]], k.matrix[[j, i]]);
            }
        }
    }

    #[test]
    fn grid_refinement_converges() {
        let a = eta_opt(10.0, 500).unwrap();
        let b = eta_opt(10.0, 1000).unwrap();
        assert!((a - b).abs() < 1e-4, "eta_opt(500)={a}, eta_opt(1000)={b}");
    }

    #[test]
    fn golden_value_at_unit_depth() {
        // dense-eigensolver golden number on an n = 1000 grid, frozen before
        // the power-iteration path was written
        let v = eta_opt(1.0, 1000).unwrap();
        assert_relative_eq!(v, 0.33047781772747165, epsilon = 1e-8);
    }

    #[test]
    fn monotone_in_depth_and_bounded() {
        let mut prev = 0.0;
        for d in [1.0, 2.0, 5.0, 10.0, 20.0, 50.0] {
            let v = eta_opt(d, 600).unwrap();
            assert!(v > prev, "eta_opt not increasing at d={d}");
            assert!(v > 0.0 && v < 1.0);
            prev = v;
        }
    }

    #[test]
    fn power_iteration_matches_dense_oracle() {
        let k = kernel_matrix(10.0, 400).unwrap();
        let ours = largest_symmetric_eigenvalue(&k.matrix).unwrap();
        let dm = nalgebra::DMatrix::from_fn(k.n, k.n, |i, j| k.matrix[[i, j]]);
        let oracle = dm
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        assert_relative_eq!(ours, oracle, max_relative = 1e-8);
    }
}
