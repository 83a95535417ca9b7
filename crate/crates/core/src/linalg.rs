//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::dataset::{Assignment, CovariateMatrix};
use crate::error::{Error, Result};

const RIDGE_FACTOR: f64 = 1e-8;
const SINGULAR_RATIO: f64 = 1e-12;

/// Per-arm column means, `(treated, control)`.
pub(crate) fn arm_means(x: &CovariateMatrix, a: &Assignment) -> (Vec<f64>, Vec<f64>) {
    let d = x.dim();
    let (mut m1, mut m0) = (vec![0.0; d], vec![0.0; d]);
    let (n1, n0) = a.group_sizes();
    for (i, row) in x.rows().enumerate() {
        let m = if a.is_treated(i) { &mut m1 } else { &mut m0 };
        for (acc, v) in m.iter_mut().zip(row) {
            *acc += v;
        }
    }
    m1.iter_mut().for_each(|v| *v /= n1 as f64);
    m0.iter_mut().for_each(|v| *v /= n0 as f64);
    (m1, m0)
}

/// Pooled within-arm covariance,
/// `(sum_treated (x - m1)(x - m1)' + sum_control (x - m0)(x - m0)') / (n - 2)`.
pub(crate) fn pooled_covariance(x: &CovariateMatrix, a: &Assignment, m1: &[f64], m0: &[f64]) -> DMatrix<f64> {
    let d = x.dim();
    let mut s = DMatrix::<f64>::zeros(d, d);
    for (i, row) in x.rows().enumerate() {
        let m = if a.is_treated(i) { m1 } else { m0 };
        for p in 0..d {
            let dp = row[p] - m[p];
            for q in p..d {
                s[(p, q)] += dp * (row[q] - m[q]);
            }
        }
    }
    let dof = x.n().saturating_sub(2).max(1) as f64;
    for p in 0..d {
        for q in p..d {
            let v = s[(p, q)] / dof;
            s[(p, q)] = v;
            s[(q, p)] = v;
        }
    }
    s
}

/// Ridge used when a covariance matrix is singular: `1e-8 * trace / D`
/// (or `1e-8` when the trace is zero).
pub(crate) fn ridge_for(s: &DMatrix<f64>) -> f64 {
    let d = s.nrows() as f64;
    let scale = s.trace() / d;
    RIDGE_FACTOR * if scale > 0.0 { scale } else { 1.0 }
}

/// Cholesky factorization that rejects numerically singular matrices.
fn robust_cholesky(s: &DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let chol = nalgebra::Cholesky::new(s.clone())?;
    let diag = chol.l_dirty().diagonal();
    let max = diag.iter().fold(0.0f64, |m, v| m.max(v * v));
    let min = diag.iter().fold(f64::INFINITY, |m, v| m.min(v * v));
    (max > 0.0 && min / max > SINGULAR_RATIO).then_some(chol)
}

/// Factor of a covariance matrix for `v' S^-1 v`, with a small ridge added
/// to `S` when it is singular.
pub(crate) struct InverseQuadratic {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl InverseQuadratic {
    pub fn new(s: &DMatrix<f64>) -> Self {
        let chol = robust_cholesky(s).unwrap_or_else(|| {
            let mut reg = s.clone();
            let lambda = ridge_for(s);
            for k in 0..reg.nrows() {
                reg[(k, k)] += lambda;
            }
            nalgebra::Cholesky::new(reg).expect("ridge-regularized covariance is positive definite")
        });
        InverseQuadratic { chol }
    }

    pub fn eval(&self, v: &[f64]) -> f64 {
        let rhs = DVector::from_column_slice(v);
        rhs.dot(&self.chol.solve(&rhs)).max(0.0)
    }
}

/// Ordinary least squares with a heteroskedasticity-robust covariance.
pub(crate) struct LeastSquares {
    pub coef: DVector<f64>,
    pub robust_cov: DMatrix<f64>,
}

/// Fits `y ~ Z` by QR. Uses HC2 standard errors. Falls back to a ridge
/// solve of the normal equations (with HC0 errors) when `Z` is rank
/// deficient.
pub(crate) fn least_squares(z: &DMatrix<f64>, y: &DVector<f64>) -> Result<LeastSquares> {
    let (n, p) = z.shape();
    if n < p {
        return ridge_least_squares(z, y);
    }
    let qr = z.clone().qr();
    let r = qr.r();
    let max = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = r.diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(max > 0.0) || min / max < 1e-10 {
        return ridge_least_squares(z, y);
    }
    let q = qr.q();
    let qty = q.transpose() * y;
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::RankDeficient)?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or(Error::RankDeficient)?;
    let bread = &r_inv * r_inv.transpose();
    let resid = y - z * &coef;
    let mut meat = DMatrix::<f64>::zeros(p, p);
    for i in 0..n {
        let lev = q.row(i).norm_squared();
        let denom = if 1.0 - lev > 1e-12 { 1.0 - lev } else { 1.0 };
        let zi = z.row(i).transpose();
        meat += (&zi * zi.transpose()) * (resid[i] * resid[i] / denom);
    }
    let robust_cov = &bread * meat * &bread;
    Ok(LeastSquares { coef, robust_cov })
}

fn ridge_least_squares(z: &DMatrix<f64>, y: &DVector<f64>) -> Result<LeastSquares> {
    let p = z.ncols();
    let mut gram = z.transpose() * z;
    let lambda = ridge_for(&gram);
    for k in 0..p {
        gram[(k, k)] += lambda;
    }
    let chol = nalgebra::Cholesky::new(gram).ok_or(Error::RankDeficient)?;
    let coef = chol.solve(&(z.transpose() * y));
    if coef.iter().any(|v| !v.is_finite()) {
        return Err(Error::RankDeficient);
    }
    let bread = chol.inverse();
    let resid = y - z * &coef;
    let mut meat = DMatrix::<f64>::zeros(p, p);
    for i in 0..z.nrows() {
        let zi = z.row(i).transpose();
        meat += (&zi * zi.transpose()) * (resid[i] * resid[i]);
    }
    let robust_cov = &bread * meat * &bread;
    Ok(LeastSquares { coef, robust_cov })
}
