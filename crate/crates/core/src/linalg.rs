//! Small dense linear-algebra helpers shared by the density and filter code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Result, SlamError};

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Replaces `m` with `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Cholesky factorisation with a single retry after adding `1e-9 · trace` to the diagonal.
pub fn cholesky_jittered(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let trace = m.trace();
    if trace > 0.0 && trace.is_finite() {
        let mut jittered = m.clone();
        let jitter = 1e-9 * trace;
        for i in 0..jittered.nrows() {
            jittered[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(jittered) {
            return Ok(c);
        }
    }
    Err(SlamError::NotPositiveDefinite(format!(
        "{}x{} matrix with trace {trace:e}",
        m.nrows(),
        m.ncols()
    )))
}

/// Lower-triangular square root `L` with `L Lᵀ = m`; zero for an all-zero matrix.
pub fn matrix_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.iter().all(|v| *v == 0.0) {
        return Ok(DMatrix::zeros(m.nrows(), m.ncols()));
    }
    Ok(cholesky_jittered(m)?.l())
}

/// Symmetric square root `A` with `A Aᵀ = m` for a PSD `m`; negative eigenvalues are clipped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut sym = m.clone();
    symmetrize(&mut sym);
    let eig = sym.symmetric_eigen();
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Pre-factored Gaussian log-density evaluator.
#[derive(Clone, Debug)]
pub struct GaussianEvaluator {
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl GaussianEvaluator {
    pub fn new(cov: &DMatrix<f64>) -> Result<Self> {
        let chol = cholesky_jittered(cov)?;
        let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let log_norm = -0.5 * (cov.nrows() as f64 * LN_2PI + log_det);
        Ok(Self { chol, log_norm })
    }

    /// Squared Mahalanobis length of `residual`.
    pub fn mahalanobis_sq(&self, residual: &DVector<f64>) -> f64 {
        let mut y = residual.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut y);
        y.norm_squared()
    }

    pub fn log_pdf(&self, residual: &DVector<f64>) -> f64 {
        self.log_norm - 0.5 * self.mahalanobis_sq(residual)
    }

    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(rhs)
    }
}

/// `ln N(residual; 0, cov)`.
pub fn log_gaussian(residual: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    Ok(GaussianEvaluator::new(cov)?.log_pdf(residual))
}

/// Numerically stable `ln Σ exp(x)`; `-inf` for an empty input.
pub fn log_sum_exp<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Block-diagonal matrix assembled from `blocks`.
pub fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        let k = b.nrows();
        out.view_mut((off, off), (k, k)).copy_from(b);
        off += k;
    }
    out
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let mut s = m.clone();
    symmetrize(&mut s);
    s.symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Covariance check used by invariants: symmetric and `λ_min ≥ -tol · trace`.
pub fn is_psd(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-9 * scale {
                return false;
            }
        }
    }
    let trace = m.trace().abs();
    min_eigenvalue(m) >= -rel_tol * trace
}

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    if a > -PI && a <= PI {
        return a;
    }
    let mut w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_angle(0.1) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(Vec::<f64>::new()), f64::NEG_INFINITY);
        let v = log_sum_exp([-1000.0, -1000.0]);
        assert!((v - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp([f64::NEG_INFINITY, 0.0]), 0.0);
    }

    #[test]
    fn standard_normal_density() {
        let ev = GaussianEvaluator::new(&DMatrix::identity(1, 1)).unwrap();
        let p = ev.log_pdf(&DVector::from_element(1, 0.0)).exp();
        assert!((p - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn jitter_rescues_semidefinite() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        assert!(cholesky_jittered(&m).is_ok());
        assert!(cholesky_jittered(&DMatrix::from_element(1, 1, -1.0)).is_err());
    }

    #[test]
    fn psd_sqrt_handles_singular_matrices() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 2.0, 0.0, 2.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        let a = psd_sqrt(&m);
        assert!((&a * a.transpose() - &m).abs().max() < 1e-12);
    }
}
