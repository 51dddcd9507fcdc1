//! Numerical kernels shared by the rest of the crate: Chebyshev collocation
//! on [0,1], Clenshaw-Curtis quadrature, the scaled modified Bessel function
//! I0, and power-iteration eigenvalue/SVD extraction.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{invalid_arg, Error, Result};

/// Chebyshev-Gauss-Lobatto collocation grid on [0,1] with spectral
/// differentiation matrix and Clenshaw-Curtis quadrature weights.
#[derive(Debug, Clone)]
pub struct ChebGrid {
    /// Strictly increasing nodes, first = 0, last = 1.
    pub nodes: Vec<f64>,
    /// n x n matrix approximating d/dz at the nodes.
    pub diff: Array2<f64>,
    /// Quadrature weights over [0,1]; exact for polynomials of degree < n.
    pub weights: Vec<f64>,
}

impl ChebGrid {
    pub fn n(&self) -> usize {
        self.nodes.len()
    }
}

/// Builds the collocation grid. Requires `n >= 8`.
pub fn cheb_grid(n: usize) -> Result<ChebGrid> {
    if n < 8 {
        return Err(invalid_arg(format!("cheb_grid requires n >= 8, got {n}")));
    }
    let big_n = n - 1;
    // Gauss-Lobatto nodes y_j = cos(pi j / N) descend from 1 to -1; the map
    // z = (1 - y)/2 makes z_j increase from 0 to 1 in the same index order.
    let y: Vec<f64> = (0..n)
        .map(|j| (std::f64::consts::PI * j as f64 / big_n as f64).cos())
        .collect();
    let mut nodes: Vec<f64> = y.iter().map(|&yj| (1.0 - yj) / 2.0).collect();
    nodes[0] = 0.0;
    nodes[n - 1] = 1.0;

    // Trefethen differentiation matrix on y, negative-sum trick on the
    // diagonal, then chain rule d/dz = -2 d/dy.
    let mut diff = Array2::<f64>::zeros((n, n));
    let c = |i: usize| -> f64 {
        let base = if i == 0 || i == big_n { 2.0 } else { 1.0 };
        if i % 2 == 0 {
            base
        } else {
            -base
        }
    };
    for i in 0..n {
        let mut row_sum = 0.0;
        for j in 0..n {
            if i != j {
                let v = c(i) / c(j) / (y[i] - y[j]);
                diff[[i, j]] = v;
                row_sum += v;
            }
        }
        diff[[i, i]] = -row_sum;
    }
    diff.mapv_inplace(|v| -2.0 * v);

    let weights = clenshaw_curtis_weights(&y)?;
    Ok(ChebGrid {
        nodes,
        diff,
        weights,
    })
}

/// Quadrature weights on [0,1] for the given Gauss-Lobatto nodes in y, found
/// by imposing exactness on the Chebyshev basis: sum_j w_j T_k(y_j) equals
/// the exact integral of T_k over [-1,1], then halving for the [0,1] map.
fn clenshaw_curtis_weights(y: &[f64]) -> Result<Vec<f64>> {
    let n = y.len();
    // Row k of the system is T_k evaluated at the nodes.
    let mut vt = Array2::<f64>::zeros((n, n));
    let mut rhs = vec![0.0; n];
    for j in 0..n {
        let mut t_prev = 1.0;
        let mut t_cur = y[j];
        vt[[0, j]] = 1.0;
        if n > 1 {
            vt[[1, j]] = t_cur;
        }
        for k in 2..n {
            let t_next = 2.0 * y[j] * t_cur - t_prev;
            vt[[k, j]] = t_next;
            t_prev = t_cur;
            t_cur = t_next;
        }
    }
    for (k, r) in rhs.iter_mut().enumerate() {
        *r = if k % 2 == 0 {
            2.0 / (1.0 - (k * k) as f64)
        } else {
            0.0
        };
    }
    let lu = Lu::factor(vt)?;
    lu.solve_real(&mut rhs);
    Ok(rhs.into_iter().map(|w| w / 2.0).collect())
}

/// Uniform time grid in the co-moving frame, in units of 1/gamma.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub n_steps: usize,
    pub tau_start: f64,
    pub tau_end: f64,
}

impl TimeGrid {
    pub fn new(tau_start: f64, tau_end: f64, n_steps: usize) -> Result<TimeGrid> {
        if n_steps < 2 || !(tau_end > tau_start) || !tau_start.is_finite() || !tau_end.is_finite() {
            return Err(invalid_arg(format!(
                "invalid time grid: [{tau_start}, {tau_end}] with {n_steps} steps"
            )));
        }
        Ok(TimeGrid {
            n_steps,
            tau_start,
            tau_end,
        })
    }

    pub fn step(&self) -> f64 {
        (self.tau_end - self.tau_start) / (self.n_steps - 1) as f64
    }

    pub fn tau(&self, k: usize) -> f64 {
        self.tau_start + self.step() * k as f64
    }

    pub fn taus(&self) -> Vec<f64> {
        (0..self.n_steps).map(|k| self.tau(k)).collect()
    }
}

/// e^(-x) I0(x): scaled zeroth-order modified Bessel function of the first
/// kind. Power series below x = 50 (all-positive terms, no cancellation),
/// large-argument asymptotic expansion above.
pub fn bessel_i0_scaled(x: f64) -> Result<f64> {
    if !x.is_finite() || x < 0.0 {
        return Err(invalid_arg(format!("bessel_i0_scaled requires x >= 0, got {x}")));
    }
    if x < 50.0 {
        let q = x * x / 4.0;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        while term > sum * 1e-18 {
            term *= q / (k * k);
            sum += term;
            k += 1.0;
        }
        Ok((-x).exp() * sum)
    } else {
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        loop {
            let next = term * (2.0 * k - 1.0) * (2.0 * k - 1.0) / (8.0 * k * x);
            if next >= term || next < sum * 1e-18 {
                break;
            }
            sum += next;
            term = next;
            k += 1.0;
        }
        Ok(sum / (2.0 * std::f64::consts::PI * x).sqrt())
    }
}

/// LU factorization with partial pivoting for real square matrices.
/// Solves against real or complex right-hand sides.
pub(crate) struct Lu {
    a: Array2<f64>,
    piv: Vec<usize>,
}

impl Lu {
    pub(crate) fn factor(mut a: Array2<f64>) -> Result<Lu> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(invalid_arg("LU factorization requires a square matrix"));
        }
        let mut piv = vec![0usize; n];
        for col in 0..n {
            let mut p = col;
            let mut best = a[[col, col]].abs();
            for r in col + 1..n {
                let v = a[[r, col]].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 {
                return Err(Error::InvalidState("singular matrix in LU factorization".into()));
            }
            piv[col] = p;
            if p != col {
                for j in 0..n {
                    a.swap([col, j], [p, j]);
                }
            }
            let pivot = a[[col, col]];
            for r in col + 1..n {
                let f = a[[r, col]] / pivot;
                a[[r, col]] = f;
                for j in col + 1..n {
                    a[[r, j]] -= f * a[[col, j]];
                }
            }
        }
        Ok(Lu { a, piv })
    }

    pub(crate) fn solve_real(&self, b: &mut [f64]) {
        let n = b.len();
        for i in 0..n {
            b.swap(i, self.piv[i]);
        }
        for i in 1..n {
            let mut s = b[i];
            for j in 0..i {
                s -= self.a[[i, j]] * b[j];
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..n {
                s -= self.a[[i, j]] * b[j];
            }
            b[i] = s / self.a[[i, i]];
        }
    }

    /// Explicit inverse; used to turn the repeated boundary-value solves in
    /// the field solver into plain matrix-vector products.
    pub(crate) fn inverse(&self, n: usize) -> Array2<f64> {
        let mut inv = Array2::<f64>::zeros((n, n));
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|v| *v = 0.0);
            col[j] = 1.0;
            self.solve_real(&mut col);
            for i in 0..n {
                inv[[i, j]] = col[i];
            }
        }
        inv
    }
}

/// Largest eigenvalue of a symmetric real matrix via shifted power iteration.
/// The Gershgorin shift makes the iteration converge to the algebraically
/// largest eigenvalue rather than the largest in magnitude.
pub fn largest_symmetric_eigenvalue(m: &Array2<f64>) -> Result<f64> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(invalid_arg("matrix must be square"));
    }
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            asym = asym.max((m[[i, j]] - m[[j, i]]).abs());
        }
    }
    if asym > 1e-10 * scale {
        return Err(invalid_arg(format!(
            "matrix is not symmetric (max asymmetry {asym:.3e})"
        )));
    }
    let shift = (0..n)
        .map(|i| (0..n).map(|j| m[[i, j]].abs()).sum::<f64>())
        .fold(0.0f64, f64::max);

    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 1e-3 * (i as f64 + 1.0) / n as f64).collect();
    normalize(&mut v);
    let mut mu_prev = f64::INFINITY;
    let mut w = vec![0.0; n];
    for _ in 0..200_000 {
        matvec(m, &v, &mut w);
        // Rayleigh quotient of the unshifted matrix.
        let mu: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        for i in 0..n {
            w[i] += shift * v[i];
        }
        normalize(&mut w);
        std::mem::swap(&mut v, &mut w);
        if (mu - mu_prev).abs() <= 1e-13 * mu.abs().max(1e-300) {
            return Ok(mu);
        }
        mu_prev = mu;
    }
    Ok(mu_prev)
}

fn matvec(m: &Array2<f64>, v: &[f64], out: &mut [f64]) {
    let n = v.len();
    for i in 0..n {
        let row = m.row(i);
        let mut s = 0.0;
        for j in 0..n {
            s += row[j] * v[j];
        }
        out[i] = s;
    }
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Largest singular triplet of a complex matrix via power iteration on the
/// normal equations. Returns (sigma, left vector, right vector), both vectors
/// unit norm. A zero matrix yields sigma = 0 with arbitrary unit vectors.
pub fn largest_singular_triplet(
    m: &Array2<Complex64>,
) -> Result<(f64, Vec<Complex64>, Vec<Complex64>)> {
    let (rows, cols) = m.dim();
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(invalid_arg("matrix contains non-finite entries"));
    }
    let unit = |len: usize| {
        let mut e = vec![Complex64::new(0.0, 0.0); len];
        e[0] = Complex64::new(1.0, 0.0);
        e
    };
    if rows == 0 || cols == 0 || m.iter().all(|z| z.norm_sqr() == 0.0) {
        return Ok((0.0, unit(rows.max(1)), unit(cols.max(1))));
    }

    let mut v: Vec<Complex64> = (0..cols)
        .map(|j| Complex64::new(1.0 + 1e-3 * (j as f64 + 1.0) / cols as f64, 0.0))
        .collect();
    normalize_c(&mut v);
    let mut u = vec![Complex64::new(0.0, 0.0); rows];
    let mut v_prev = v.clone();
    let mut sigma = 0.0;
    for _ in 0..200_000 {
        // u <- M v, sigma = |u|
        for i in 0..rows {
            let row = m.row(i);
            let mut s = Complex64::new(0.0, 0.0);
            for j in 0..cols {
                s += row[j] * v[j];
            }
            u[i] = s;
        }
        sigma = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if sigma == 0.0 {
            return Ok((0.0, unit(rows), unit(cols)));
        }
        u.iter_mut().for_each(|z| *z /= sigma);
        // v <- M^H u, renormalized
        for j in 0..cols {
            let mut s = Complex64::new(0.0, 0.0);
            for i in 0..rows {
                s += m[[i, j]].conj() * u[i];
            }
            v[j] = s;
        }
        normalize_c(&mut v);
        // iterate until the right vector itself settles; the singular value
        // alone converges much earlier than the vectors do
        let drift: f64 = v
            .iter()
            .zip(&v_prev)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        if drift <= 1e-11 {
            break;
        }
        v_prev.copy_from_slice(&v);
    }
    Ok((sigma, u, v))
}

/// Real-matrix convenience wrapper around [`largest_singular_triplet`].
pub fn largest_singular_triplet_real(m: &Array2<f64>) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let mc = m.mapv(|v| Complex64::new(v, 0.0));
    let (sigma, u, v) = largest_singular_triplet(&mc)?;
    Ok((
        sigma,
        u.into_iter().map(|z| z.re).collect(),
        v.into_iter().map(|z| z.re).collect(),
    ))
}

fn normalize_c(v: &mut [Complex64]) {
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|z| *z /= norm);
    }
}

/// Trapezoid weights for a uniform grid of `n` points with spacing `h`.
pub fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    if n >= 2 {
        w[0] = h / 2.0;
        w[n - 1] = h / 2.0;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cheb_grid_rejects_small_n() {
        assert!(cheb_grid(7).is_err());
        assert!(cheb_grid(8).is_ok());
    }

    #[test]
    fn cheb_nodes_span_unit_interval() {
        let g = cheb_grid(16).unwrap();
        assert_eq!(g.nodes[0], 0.0);
        assert_eq!(g.nodes[15], 1.0);
        assert!(g.nodes.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn diff_matrix_annihilates_constants() {
        let g = cheb_grid(16).unwrap();
        let ones = vec![1.0; 16];
        let mut out = vec![0.0; 16];
        matvec(&g.diff, &ones, &mut out);
        for v in out {
            assert!(v.abs() < 1e-12, "derivative of constant was {v}");
        }
    }

    #[test]
    fn diff_matrix_differentiates_cubic() {
        // d/dz z^3 = 3 z^2, analytic oracle
        let g = cheb_grid(16).unwrap();
        let f: Vec<f64> = g.nodes.iter().map(|z| z.powi(3)).collect();
        let mut out = vec![0.0; 16];
        matvec(&g.diff, &f, &mut out);
        for (z, v) in g.nodes.iter().zip(&out) {
            let exact = 3.0 * z * z;
            assert!((v - exact).abs() <= 1e-10 * exact.abs().max(1.0));
        }
    }

    #[test]
    fn quad_weights_integrate_one() {
        let g = cheb_grid(16).unwrap();
        let total: f64 = g.weights.iter().sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn quadrature_exact_on_polynomials() {
        let g = cheb_grid(24).unwrap();
        for k in 0..24u32 {
            let approx_int: f64 = g
                .nodes
                .iter()
                .zip(&g.weights)
                .map(|(z, w)| w * z.powi(k as i32))
                .sum();
            let exact = 1.0 / (k as f64 + 1.0);
            assert!(
                (approx_int - exact).abs() <= 1e-10,
                "degree {k}: {approx_int} vs {exact}"
            );
        }
    }

    #[test]
    fn spectral_exactness_all_degrees() {
        let n = 20;
        let g = cheb_grid(n).unwrap();
        for k in 1..n as i32 {
            let f: Vec<f64> = g.nodes.iter().map(|z| z.powi(k)).collect();
            let mut out = vec![0.0; n];
            matvec(&g.diff, &f, &mut out);
            for (z, v) in g.nodes.iter().zip(&out) {
                let exact = k as f64 * z.powi(k - 1);
                assert!(
                    (v - exact).abs() <= 1e-10 * exact.abs().max(1.0),
                    "degree {k} at z={z}"
                );
            }
        }
    }

    #[test]
    fn bessel_at_zero_is_one() {
        assert_eq!(bessel_i0_scaled(0.0).unwrap(), 1.0);
    }

    #[test]
    fn bessel_rejects_bad_input() {
        assert!(bessel_i0_scaled(-1.0).is_err());
        assert!(bessel_i0_scaled(f64::NAN).is_err());
        assert!(bessel_i0_scaled(f64::INFINITY).is_err());
    }

    #[test]
    fn bessel_matches_series_oracle_at_one() {
        // 40-term power series oracle, times e^(-x)
        let x: f64 = 1.0;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..=40 {
            term *= (x / 2.0) * (x / 2.0) / ((k * k) as f64);
            sum += term;
        }
        let oracle = (-x).exp() * sum;
        assert_relative_eq!(bessel_i0_scaled(x).unwrap(), oracle, max_relative = 1e-10);
    }

    #[test]
    fn bessel_matches_asymptotic_oracle_at_2500() {
        let x: f64 = 2500.0;
        let oracle = 1.0 / (2.0 * std::f64::consts::PI * x).sqrt()
            * (1.0 + 1.0 / (8.0 * x) + 9.0 / (128.0 * x * x));
        assert_relative_eq!(bessel_i0_scaled(x).unwrap(), oracle, max_relative = 1e-8);
    }

    #[test]
    fn bessel_strictly_decreasing_on_log_grid() {
        let mut prev = bessel_i0_scaled(0.0).unwrap();
        assert_eq!(prev, 1.0);
        for i in 0..1000 {
            // log-spaced from 1e-3 to 1e4
            let x = 1e-3 * (1e7f64).powf(i as f64 / 999.0);
            let v = bessel_i0_scaled(x).unwrap();
            assert!(v > 0.0 && v <= 1.0);
            assert!(v < prev, "not decreasing at x={x}");
            prev = v;
        }
    }

    #[test]
    fn eigenvalue_of_identity() {
        let m = Array2::<f64>::eye(2);
        assert_relative_eq!(largest_symmetric_eigenvalue(&m).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn eigenvalue_of_diagonal() {
        let m = Array2::from_diag(&ndarray::arr1(&[0.1, 0.9, 0.5]));
        assert_relative_eq!(largest_symmetric_eigenvalue(&m).unwrap(), 0.9, epsilon = 1e-10);
    }

    #[test]
    fn eigenvalue_rejects_asymmetric() {
        let mut m = Array2::<f64>::eye(3);
        m[[0, 1]] = 1.0;
        assert!(largest_symmetric_eigenvalue(&m).is_err());
    }

    #[test]
    fn eigenvalue_matches_dense_oracle_random_100() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 100;
        let mut m = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in i..n {
                let v: f64 = rng.gen_range(-1.0..1.0);
                m[[i, j]] = v;
                m[[j, i]] = v;
            }
        }
        let ours = largest_symmetric_eigenvalue(&m).unwrap();
        let dm = nalgebra::DMatrix::from_fn(n, n, |i, j| m[[i, j]]);
        let oracle = dm
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        assert_relative_eq!(ours, oracle, max_relative = 1e-8);
    }

    #[test]
    fn svd_of_zero_matrix() {
        let m = Array2::<Complex64>::zeros((4, 6));
        let (sigma, _, _) = largest_singular_triplet(&m).unwrap();
        assert_eq!(sigma, 0.0);
    }

    #[test]
    fn svd_of_rank_one_outer_product() {
        // u v^T with |u| = 2, |v| = 3 has sigma = 6
        let u = [2.0, 0.0, 0.0];
        let v = [0.0, 3.0, 0.0, 0.0];
        let mut m = Array2::<f64>::zeros((3, 4));
        for i in 0..3 {
            for j in 0..4 {
                m[[i, j]] = u[i] * v[j];
            }
        }
        let (sigma, _, _) = largest_singular_triplet_real(&m).unwrap();
        assert_relative_eq!(sigma, 6.0, epsilon = 1e-10);
    }

    #[test]
    fn svd_rejects_non_finite() {
        let mut m = Array2::<Complex64>::zeros((2, 2));
        m[[0, 0]] = Complex64::new(f64::NAN, 0.0);
        assert!(largest_singular_triplet(&m).is_err());
    }

    #[test]
    fn svd_matches_dense_oracle_random_80x120() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let m = Array2::<f64>::from_shape_fn((80, 120), |_| rng.gen_range(-1.0..1.0));
        let (sigma, u, v) = largest_singular_triplet_real(&m).unwrap();
        let dm = nalgebra::DMatrix::from_fn(80, 120, |i, j| m[[i, j]]);
        let oracle = dm.svd(false, false).singular_values[0];
        assert_relative_eq!(sigma, oracle, max_relative = 1e-8);
        // M v = sigma u, unit norms
        let un: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let vn: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert_relative_eq!(un, 1.0, epsilon = 1e-10);
        assert_relative_eq!(vn, 1.0, epsilon = 1e-10);
        for i in 0..80 {
            let mut s = 0.0;
            for j in 0..120 {
                s += m[[i, j]] * v[j];
            }
            assert!((s - sigma * u[i]).abs() < 1e-8 * sigma.max(1.0));
        }
    }

    #[test]
    fn time_grid_basics() {
        let t = TimeGrid::new(-2.0, 2.0, 5).unwrap();
        assert_eq!(t.step(), 1.0);
        assert_eq!(t.taus(), vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        assert!(TimeGrid::new(2.0, -2.0, 5).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 1).is_err());
    }
}
