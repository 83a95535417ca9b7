//! Covariate balance statistics for an assignment.

use serde::{Deserialize, Serialize};

use crate::dataset::{Assignment, CovariateMatrix};
use crate::designs::Bandwidth;
use crate::error::Result;
use crate::graph::{gaussian_gram, minimum_distance_spanning_tree, pairwise_distances, KernelMatrix};
use crate::linalg::{arm_means, pooled_covariance, InverseQuadratic};

/// Every balance statistic for one assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub friedman_rafsky: f64,
    pub mahalanobis: f64,
    pub smd: Vec<f64>,
    pub kernel_imbalance: f64,
    pub group_sizes: (usize, usize),
}

/// Fraction of the pooled minimum spanning tree's edges that join opposite
/// arms. Uses the same tree, with the same tie-breaking, as SoftBlock, so a
/// SoftBlock assignment scores exactly 1.
pub fn friedman_rafsky(x: &CovariateMatrix, a: &Assignment) -> Result<f64> {
    a.require_len(x.n())?;
    a.require_both_arms()?;
    let tree = minimum_distance_spanning_tree(x);
    let crossing = tree.edges().iter().filter(|e| a.arm(e.i) != a.arm(e.j)).count();
    Ok(crossing as f64 / (x.n() - 1) as f64)
}

/// `(m1 - m0)' S^-1 (m1 - m0)` with `S` the pooled within-arm covariance.
pub fn mahalanobis_balance(x: &CovariateMatrix, a: &Assignment) -> Result<f64> {
    a.require_len(x.n())?;
    a.require_both_arms()?;
    let (m1, m0) = arm_means(x, a);
    let s = pooled_covariance(x, a, &m1, &m0);
    let diff: Vec<f64> = m1.iter().zip(&m0).map(|(p, q)| p - q).collect();
    Ok(InverseQuadratic::new(&s).eval(&diff))
}

/// Per-covariate `(m1 - m0) / s` with `s` the pooled within-arm standard
/// deviation; 0 for columns with `s = 0`.
pub fn standardized_mean_diff(x: &CovariateMatrix, a: &Assignment) -> Result<Vec<f64>> {
    a.require_len(x.n())?;
    a.require_both_arms()?;
    let (m1, m0) = arm_means(x, a);
    let s = pooled_covariance(x, a, &m1, &m0);
    Ok((0..x.dim())
        .map(|k| {
            let sd = s[(k, k)].sqrt();
            if sd > 0.0 {
                (m1[k] - m0[k]) / sd
            } else {
                0.0
            }
        })
        .collect())
}

/// `(4 / N^2) u' K u` with `u = 2a - 1`.
pub fn kernel_imbalance(k: &KernelMatrix, a: &Assignment) -> Result<f64> {
    a.require_len(k.n())?;
    let n = k.n() as f64;
    Ok(4.0 / (n * n) * k.quadratic_form(&a.signs()))
}

/// All statistics at once; the kernel term uses a Gaussian Gram matrix.
pub fn balance_report(x: &CovariateMatrix, a: &Assignment, bandwidth: Bandwidth) -> Result<BalanceReport> {
    let h = bandwidth.resolve(x)?;
    let gram = gaussian_gram(&pairwise_distances(x), h)?;
    Ok(BalanceReport {
        friedman_rafsky: friedman_rafsky(x, a)?,
        mahalanobis: mahalanobis_balance(x, a)?,
        smd: standardized_mean_diff(x, a)?,
        kernel_imbalance: kernel_imbalance(&gram, a)?,
        group_sizes: a.group_sizes(),
    })
}
