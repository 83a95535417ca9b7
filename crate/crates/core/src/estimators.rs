//! ATE and ITE estimators, plus the pointwise and cut-based error bounds.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{Assignment, CovariateMatrix, OutcomeVector};
use crate::designs::{Design, Method};
use crate::error::{Error, Result};
use crate::graph::{cut_weight, SimilarityGraph};
use crate::kdtree::NeighborIndex;
use crate::linalg::least_squares;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// Difference in means.
    Dim,
    /// Regression adjustment with treatment-covariate interactions.
    Lin,
    /// Cut-edge neighbor imputation on the design's support graph.
    Design,
    /// k-nearest-neighbor T-learner.
    Knn,
    /// Within-pair differences of a matched-pairs design.
    Pairs,
}

impl Estimator {
    pub const ALL: [Estimator; 5] = [
        Estimator::Dim,
        Estimator::Lin,
        Estimator::Design,
        Estimator::Knn,
        Estimator::Pairs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Dim => "dim",
            Estimator::Lin => "lin",
            Estimator::Design => "design",
            Estimator::Knn => "knn",
            Estimator::Pairs => "pairs",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown estimator {s:?}")))
    }
}

/// Per-unit treatment-effect estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IteVector(Vec<f64>);

impl IteVector {
    pub fn new(tau: Vec<f64>) -> Result<Self> {
        if let Some(i) = tau.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite effect for unit {i}")));
        }
        Ok(IteVector(tau))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }
}

impl std::ops::Index<usize> for IteVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

fn check_outcomes(y: &OutcomeVector, a: &Assignment) -> Result<(usize, usize)> {
    a.require_len(y.len())?;
    a.require_both_arms()
}

/// `mean(y | a = 1) - mean(y | a = 0)`.
pub fn diff_in_means(y: &OutcomeVector, a: &Assignment) -> Result<f64> {
    let (n1, n0) = check_outcomes(y, a)?;
    let (mut s1, mut s0) = (0.0, 0.0);
    for (i, &v) in y.as_slice().iter().enumerate() {
        if a.is_treated(i) {
            s1 += v;
        } else {
            s0 += v;
        }
    }
    Ok(s1 / n1 as f64 - s0 / n0 as f64)
}

/// Point estimate with a robust standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinEstimate {
    pub estimate: f64,
    pub se: f64,
}

/// Least squares of `y` on `[1, a, Xc, a * Xc]` with column-centered `Xc`.
/// Constant columns are dropped. Returns the coefficient on `a` with its
/// HC2 standard error.
pub fn lin_adjusted_ate(y: &OutcomeVector, a: &Assignment, x: &CovariateMatrix) -> Result<LinEstimate> {
    check_outcomes(y, a)?;
    a.require_len(x.n())?;
    let n = x.n();
    let mut centered: Vec<Vec<f64>> = Vec::new();
    for k in 0..x.dim() {
        let col = x.column(k);
        let mean = col.iter().sum::<f64>() / n as f64;
        if col.iter().any(|&v| v != col[0]) {
            centered.push(col.into_iter().map(|v| v - mean).collect());
        }
    }
    let p = 2 + 2 * centered.len();
    let mut z = DMatrix::<f64>::zeros(n, p);
    for i in 0..n {
        let t = f64::from(a.arm(i));
        z[(i, 0)] = 1.0;
        z[(i, 1)] = t;
        for (k, c) in centered.iter().enumerate() {
            z[(i, 2 + k)] = c[i];
            z[(i, 2 + centered.len() + k)] = t * c[i];
        }
    }
    let fit = least_squares(&z, &DVector::from_column_slice(y.as_slice()))?;
    let estimate = fit.coef[1];
    let se = fit.robust_cov[(1, 1)].max(0.0).sqrt();
    if !estimate.is_finite() || !se.is_finite() {
        return Err(Error::RankDeficient);
    }
    Ok(LinEstimate { estimate, se })
}

/// Normalized imputation weights of one unit over its opposite-arm
/// support-graph neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightRow {
    pub neighbors: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Weight rows for every unit from the design's cut edges. A unit whose
/// cross-arm similarities all underflow to zero gets uniform weights.
pub fn weight_rows(design: &Design) -> Result<Vec<WeightRow>> {
    let a = &design.assignment;
    let n = a.len();
    let mut rows = vec![
        WeightRow {
            neighbors: Vec::new(),
            weights: Vec::new(),
        };
        n
    ];
    for e in &design.support {
        if a.arm(e.i) != a.arm(e.j) {
            rows[e.i].neighbors.push(e.j);
            rows[e.i].weights.push(e.weight);
            rows[e.j].neighbors.push(e.i);
            rows[e.j].weights.push(e.weight);
        }
    }
    for (i, row) in rows.iter_mut().enumerate() {
        if row.neighbors.is_empty() {
            return Err(Error::IsolatedUnit(i));
        }
        let total: f64 = row.weights.iter().sum();
        if total > 0.0 {
            row.weights.iter_mut().for_each(|w| *w /= total);
        } else {
            let m = row.weights.len() as f64;
            row.weights.iter_mut().for_each(|w| *w = 1.0 / m);
        }
    }
    Ok(rows)
}

/// `tau_i = (2 a_i - 1) (y_i - sum_j w_ij y_j)` over cut edges.
pub fn design_ite(design: &Design, y: &OutcomeVector) -> Result<IteVector> {
    let a = &design.assignment;
    a.require_len(y.len())?;
    let rows = weight_rows(design)?;
    let tau = rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            // y_i - sum_j w_ij y_j, written as a sum of differences so that
            // equal outcomes give exactly zero
            let gap: f64 = row.neighbors.iter().zip(&row.weights).map(|(&j, w)| w * (y[i] - y[j])).sum();
            let sign = if a.is_treated(i) { 1.0 } else { -1.0 };
            sign * gap
        })
        .collect();
    IteVector::new(tau)
}

/// Mean of [`design_ite`].
pub fn design_ate(design: &Design, y: &OutcomeVector) -> Result<f64> {
    Ok(design_ite(design, y)?.mean())
}

/// T-learner with k-nearest-neighbor regressions per arm; the observed arm
/// uses the unit's own outcome.
pub fn knn_t_learner(x: &CovariateMatrix, y: &OutcomeVector, a: &Assignment, k: usize) -> Result<IteVector> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    a.require_len(x.n())?;
    a.require_len(y.len())?;
    let treated: Vec<usize> = (0..a.len()).filter(|&i| a.is_treated(i)).collect();
    let control: Vec<usize> = (0..a.len()).filter(|&i| !a.is_treated(i)).collect();
    for (arm, members) in [(1u8, &treated), (0u8, &control)] {
        if members.len() < k {
            return Err(Error::ArmTooSmall {
                arm,
                size: members.len(),
                needed: k,
            });
        }
    }
    let idx1 = NeighborIndex::new(x, treated);
    let idx0 = NeighborIndex::new(x, control);
    let tau = (0..a.len())
        .map(|i| {
            let other = if a.is_treated(i) { &idx0 } else { &idx1 };
            let nn = other.nearest(x.row(i), k, None);
            let mu: f64 = nn.iter().map(|&(_, j)| y[j]).sum::<f64>() / k as f64;
            if a.is_treated(i) {
                y[i] - mu
            } else {
                mu - y[i]
            }
        })
        .collect();
    IteVector::new(tau)
}

/// Mean within-pair difference `y_treated - y_control`; an unmatched unit is
/// ignored.
pub fn matched_pair_ate(design: &Design, y: &OutcomeVector) -> Result<f64> {
    let wrong = |found: String| Error::WrongDesignKind {
        expected: Method::MatchedPairs.to_string(),
        found,
    };
    if design.method != Method::MatchedPairs {
        return Err(wrong(design.method.to_string()));
    }
    let a = &design.assignment;
    a.require_len(y.len())?;
    let mut degree = vec![0usize; a.len()];
    for e in &design.support {
        degree[e.i] += 1;
        degree[e.j] += 1;
    }
    if degree.iter().any(|&d| d > 1) {
        return Err(wrong("graph with a unit in several pairs".into()));
    }
    if design.support.is_empty() {
        return Err(wrong("empty matching".into()));
    }
    let mut total = 0.0;
    for e in &design.support {
        let (t, c) = match (a.is_treated(e.i), a.is_treated(e.j)) {
            (true, false) => (e.i, e.j),
            (false, true) => (e.j, e.i),
            _ => return Err(wrong(format!("pair ({}, {}) within one arm", e.i, e.j))),
        };
        total += y[t] - y[c];
    }
    Ok(total / design.support.len() as f64)
}

/// Constants of the pointwise error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Lipschitz constant of the outcome surfaces.
    pub lipschitz: f64,
    /// Bound on the noise magnitude.
    pub noise_bound: f64,
    /// Tail probability.
    pub delta: f64,
}

impl BoundInputs {
    pub fn new(lipschitz: f64, noise_bound: f64, delta: f64) -> Result<Self> {
        if !(lipschitz >= 0.0 && noise_bound >= 0.0 && delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "bound inputs need L >= 0, b >= 0, 0 < delta < 1 (got {lipschitz}, {noise_bound}, {delta})"
            )));
        }
        Ok(BoundInputs {
            lipschitz,
            noise_bound,
            delta,
        })
    }

    /// `C = b sqrt(2 ln(2 / delta))`.
    pub fn c(&self) -> f64 {
        self.noise_bound * (2.0 * (2.0 / self.delta).ln()).sqrt()
    }
}

/// `C ||w||_2 + L sum_i w_i d_i`.
pub fn pointwise_error_bound(weights: &[f64], dists: &[f64], inputs: &BoundInputs) -> Result<f64> {
    if weights.len() != dists.len() {
        return Err(Error::LengthMismatch {
            expected: weights.len(),
            found: dists.len(),
        });
    }
    let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    let bias: f64 = weights.iter().zip(dists).map(|(w, d)| w * d).sum();
    Ok(inputs.c() * norm + inputs.lipschitz * bias)
}

/// `(e_sum - 2 cut) / d_min` with `e_sum` summed over ordered pairs.
pub fn cut_error_bound(e: &SimilarityGraph, a: &Assignment) -> Result<f64> {
    let cut = cut_weight(e, a)?;
    let degrees: Vec<f64> = (0..e.n()).map(|i| e.degree(i)).collect();
    let d_min = degrees.iter().copied().fold(f64::INFINITY, f64::min);
    if !(d_min > 0.0) {
        return Err(Error::ZeroDegreeNode);
    }
    let e_sum: f64 = degrees.iter().sum();
    Ok(((e_sum - 2.0 * cut) / d_min).max(0.0))
}

/// ATE, optional standard error and per-unit effects from any estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub ate: f64,
    pub se: Option<f64>,
    /// ATE-only estimators report the ATE for every unit.
    pub ite: IteVector,
}

/// Runs `estimator` on a design and its revealed outcomes.
pub fn estimate(
    estimator: Estimator,
    design: &Design,
    x: &CovariateMatrix,
    y: &OutcomeVector,
    k: usize,
) -> Result<Estimate> {
    let a = &design.assignment;
    let constant = |ate: f64, se: Option<f64>| -> Result<Estimate> {
        Ok(Estimate {
            ate,
            se,
            ite: IteVector::new(vec![ate; a.len()])?,
        })
    };
    match estimator {
        Estimator::Dim => constant(diff_in_means(y, a)?, None),
        Estimator::Lin => {
            let fit = lin_adjusted_ate(y, a, x)?;
            constant(fit.estimate, Some(fit.se))
        }
        Estimator::Pairs => constant(matched_pair_ate(design, y)?, None),
        Estimator::Design => {
            let ite = design_ite(design, y)?;
            Ok(Estimate {
                ate: ite.mean(),
                se: None,
                ite,
            })
        }
        Estimator::Knn => {
            let ite = knn_t_learner(x, y, a, k)?;
            Ok(Estimate {
                ate: ite.mean(),
                se: None,
                ite,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::{matched_pairs, softblock, Bandwidth, FlipPolicy};
    use crate::graph::Edge;
    use crate::rng::RandomSeed;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn outcomes(v: &[f64]) -> OutcomeVector {
        OutcomeVector::new(v.to_vec()).unwrap()
    }

    fn arms(v: &[u8]) -> Assignment {
        Assignment::new(v.to_vec()).unwrap()
    }

    fn random_matrix(n: usize, d: usize, seed: u64) -> CovariateMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        CovariateMatrix::new(n, d, (0..n * d).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    fn manual_design(a: Assignment, edges: Vec<Edge>) -> Design {
        Design::from_parts(Method::SoftBlock, a, edges).unwrap()
    }

    #[test]
    fn dim_cases() {
        let a = arms(&[1, 0, 1, 0]);
        assert_eq!(diff_in_means(&outcomes(&[1.0, 0.0, 1.0, 0.0]), &a).unwrap(), 1.0);
        assert_eq!(diff_in_means(&outcomes(&[3.0; 4]), &a).unwrap(), 0.0);
        let y = [0.3, -1.2, 2.5, 0.7, 1.1, -0.4, 0.9];
        let a = arms(&[1, 1, 0, 0, 1, 0, 1]);
        let expected = (0.3 - 1.2 + 1.1 + 0.9) / 4.0 - (2.5 + 0.7 - 0.4) / 3.0;
        assert!((diff_in_means(&outcomes(&y), &a).unwrap() - expected).abs() < 1e-15);
        assert_eq!(diff_in_means(&outcomes(&y), &arms(&[0; 7])), Err(Error::EmptyArm));
    }

    #[test]
    fn lin_is_exact_when_correctly_specified() {
        let x = random_matrix(40, 4, 3);
        let beta = [0.3, -1.0, 2.0, 0.5];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let a = Assignment::from_bools((0..40).map(|_| rng.random_bool(0.5)));
        let y: Vec<f64> = (0..40)
            .map(|i| x.row(i).iter().zip(&beta).map(|(v, b)| v * b).sum::<f64>() + f64::from(a.arm(i)))
            .collect();
        let fit = lin_adjusted_ate(&outcomes(&y), &a, &x).unwrap();
        assert!((fit.estimate - 1.0).abs() < 1e-8);
    }

    #[test]
    fn lin_without_covariates_is_dim() {
        let x = CovariateMatrix::from_rows(&vec![vec![2.0, 0.0]; 6]).unwrap();
        let y = outcomes(&[1.0, 4.0, 2.0, 0.5, 3.0, 1.5]);
        let a = arms(&[1, 0, 1, 0, 1, 0]);
        let fit = lin_adjusted_ate(&y, &a, &x).unwrap();
        assert!((fit.estimate - diff_in_means(&y, &a).unwrap()).abs() < 1e-12);
    }

    /// Gaussian elimination with partial pivoting on `Z'Z b = Z'y`.
    fn normal_equations(z: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let p = z[0].len();
        let mut m = vec![vec![0.0; p + 1]; p];
        for (row, &yi) in z.iter().zip(y) {
            for r in 0..p {
                for c in 0..p {
                    m[r][c] += row[r] * row[c];
                }
                m[r][p] += row[r] * yi;
            }
        }
        for col in 0..p {
            let piv = (col..p).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs())).unwrap();
            m.swap(col, piv);
            for r in 0..p {
                if r != col {
                    let f = m[r][col] / m[col][col];
                    for c in col..=p {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
        (0..p).map(|r| m[r][p] / m[r][r]).collect()
    }

    #[test]
    fn lin_matches_normal_equations() {
        let n = 50;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let normal = rand_distr::StandardNormal;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..4).map(|_| rand_distr::Distribution::sample(&normal, &mut rng)).collect())
            .collect();
        let x = CovariateMatrix::from_rows(&rows).unwrap();
        let a = Assignment::from_bools((0..n).map(|i| i % 3 != 0));
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let eps: f64 = rand_distr::Distribution::sample(&normal, &mut rng);
                rows[i].iter().sum::<f64>() * 0.4 + f64::from(a.arm(i)) + eps / 10.0
            })
            .collect();
        let means: Vec<f64> = (0..4).map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n as f64).collect();
        let z: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let t = f64::from(a.arm(i));
                let c: Vec<f64> = (0..4).map(|k| rows[i][k] - means[k]).collect();
                let mut r = vec![1.0, t];
                r.extend(&c);
                r.extend(c.iter().map(|v| t * v));
                r
            })
            .collect();
        let b = normal_equations(&z, &y);
        let fit = lin_adjusted_ate(&outcomes(&y), &a, &x).unwrap();
        assert!((fit.estimate - b[1]).abs() < 1e-10);
        assert!(fit.se > 0.0);
    }

    #[test]
    fn design_ite_single_neighbor() {
        let edges = vec![Edge::new(0, 1, 0.7)];
        let d = manual_design(arms(&[1, 0]), edges.clone());
        let tau = design_ite(&d, &outcomes(&[2.0, 1.0])).unwrap();
        assert_eq!(tau.as_slice(), &[1.0, 1.0]);
        let d = manual_design(arms(&[0, 1]), edges);
        let tau = design_ite(&d, &outcomes(&[1.0, 2.0])).unwrap();
        assert_eq!(tau.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn design_ite_star() {
        let edges = vec![Edge::new(0, 1, 0.5), Edge::new(0, 2, 0.3), Edge::new(0, 3, 0.2)];
        let d = manual_design(arms(&[1, 0, 0, 0]), edges);
        let y = outcomes(&[5.0, 1.0, 2.0, 3.0]);
        let rows = weight_rows(&d).unwrap();
        let counterfactual: f64 = rows[0].neighbors.iter().zip(&rows[0].weights).map(|(&j, w)| w * y[j]).sum();
        assert!((counterfactual - 1.7).abs() < 1e-12);
        assert!((design_ite(&d, &y).unwrap()[0] - (5.0 - 1.7)).abs() < 1e-12);
    }

    #[test]
    fn isolated_unit_is_reported() {
        let d = manual_design(arms(&[1, 1, 0]), vec![Edge::new(0, 1, 1.0), Edge::new(1, 2, 1.0)]);
        assert_eq!(design_ite(&d, &outcomes(&[1.0, 2.0, 3.0])), Err(Error::IsolatedUnit(0)));
    }

    #[test]
    fn design_ate_cases() {
        let d = manual_design(arms(&[0, 1]), vec![Edge::new(0, 1, 1.0)]);
        assert_eq!(design_ate(&d, &outcomes(&[1.5, 4.0])).unwrap(), 2.5);
        let x = random_matrix(30, 2, 4);
        let d = softblock(&x, Bandwidth::Auto, RandomSeed(1), FlipPolicy::Random).unwrap();
        assert_eq!(design_ate(&d, &outcomes(&[2.0; 30])).unwrap(), 0.0);
    }

    #[test]
    fn design_ate_is_near_truth_on_smooth_constant_effect() {
        let x = random_matrix(400, 2, 5);
        let d = softblock(&x, Bandwidth::Auto, RandomSeed(2), FlipPolicy::Random).unwrap();
        let f = |r: &[f64]| r[0] + 0.5 * r[1];
        let y: Vec<f64> = (0..400).map(|i| f(x.row(i)) + f64::from(d.assignment.arm(i))).collect();
        let rows = weight_rows(&d).unwrap();
        // bias bound with L = |(1, 0.5)|
        let l = (1.25f64).sqrt();
        let bound: f64 = rows
            .iter()
            .enumerate()
            .map(|(i, r)| l * r.neighbors.iter().zip(&r.weights).map(|(&j, w)| w * x.dist(i, j)).sum::<f64>())
            .sum::<f64>()
            / 400.0;
        let ate = design_ate(&d, &outcomes(&y)).unwrap();
        assert!((ate - 1.0).abs() <= bound + 1e-12);
    }

    fn brute_knn(x: &CovariateMatrix, y: &OutcomeVector, a: &Assignment, k: usize) -> Vec<f64> {
        (0..a.len())
            .map(|i| {
                let mut other: Vec<(f64, usize)> = (0..a.len())
                    .filter(|&j| a.arm(j) != a.arm(i))
                    .map(|j| (x.sq_dist(i, j), j))
                    .collect();
                other.sort_by(|p, q| p.partial_cmp(q).unwrap());
                let mu = other[..k].iter().map(|&(_, j)| y[j]).sum::<f64>() / k as f64;
                if a.is_treated(i) {
                    y[i] - mu
                } else {
                    mu - y[i]
                }
            })
            .collect()
    }

    #[test]
    fn knn_matches_scan() {
        let x = random_matrix(30, 3, 9);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let y = OutcomeVector::new((0..30).map(|_| rng.random::<f64>()).collect()).unwrap();
        let a = Assignment::from_bools((0..30).map(|i| i % 2 == 0));
        let tau = knn_t_learner(&x, &y, &a, 3).unwrap();
        let oracle = brute_knn(&x, &y, &a, 3);
        for (p, q) in tau.as_slice().iter().zip(&oracle) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn knn_tight_pairs_and_constants() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![(i / 2) as f64 * 10.0 + (i % 2) as f64 * 0.01]).collect();
        let x = CovariateMatrix::from_rows(&rows).unwrap();
        let a = Assignment::from_bools((0..10).map(|i| i % 2 == 0));
        let y: Vec<f64> = (0..10).map(|i| (i / 2) as f64 + f64::from(a.arm(i))).collect();
        let tau = knn_t_learner(&x, &outcomes(&y), &a, 1).unwrap();
        assert!(tau.as_slice().iter().all(|&t| t == 1.0));
        let tau = knn_t_learner(&x, &outcomes(&[4.0; 10]), &a, 2).unwrap();
        assert!(tau.as_slice().iter().all(|&t| t == 0.0));
        assert_eq!(
            knn_t_learner(&x, &outcomes(&[4.0; 10]), &a, 6),
            Err(Error::ArmTooSmall { arm: 1, size: 5, needed: 6 })
        );
    }

    #[test]
    fn pair_cases() {
        let edges = vec![Edge::new(0, 1, 1.0), Edge::new(2, 3, 1.0)];
        let d = Design::from_parts(Method::MatchedPairs, arms(&[1, 0, 0, 1]), edges).unwrap();
        assert_eq!(matched_pair_ate(&d, &outcomes(&[2.0, 1.0, 0.0, 3.0])).unwrap(), 2.0);
        assert_eq!(matched_pair_ate(&d, &outcomes(&[7.0; 4])).unwrap(), 0.0);
        let sb = Design { method: Method::SoftBlock, ..d };
        assert!(matches!(matched_pair_ate(&sb, &outcomes(&[7.0; 4])), Err(Error::WrongDesignKind { .. })));
    }

    #[test]
    fn pairs_agree_with_design_estimator() {
        let x = random_matrix(40, 2, 12);
        let d = matched_pairs(&x, Bandwidth::Auto, RandomSeed(4)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let y = OutcomeVector::new((0..40).map(|_| rng.random::<f64>()).collect()).unwrap();
        let p = matched_pair_ate(&d, &y).unwrap();
        let q = design_ate(&d, &y).unwrap();
        assert!((p - q).abs() < 1e-12);
    }

    #[test]
    fn flipping_pair_arms_negates_ite() {
        let x = random_matrix(20, 2, 13);
        let d = matched_pairs(&x, Bandwidth::Auto, RandomSeed(4)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let y = OutcomeVector::new((0..20).map(|_| rng.random::<f64>()).collect()).unwrap();
        let t = design_ite(&d, &y).unwrap();
        let f = design_ite(&d.flipped(), &y).unwrap();
        for (p, q) in t.as_slice().iter().zip(f.as_slice()) {
            assert!((p + q).abs() < 1e-12);
        }
    }

    #[test]
    fn pointwise_bound_cases() {
        let inputs = BoundInputs::new(2.0, 1.0, 0.05).unwrap();
        let c = inputs.c();
        assert!((c - (2.0 * (40.0f64).ln()).sqrt()).abs() < 1e-15);
        assert!((pointwise_error_bound(&[1.0], &[0.3], &inputs).unwrap() - (c + 2.0 * 0.3)).abs() < 1e-15);
        let m = 4;
        let no_l = BoundInputs::new(0.0, 1.0, 0.05).unwrap();
        let b = pointwise_error_bound(&vec![0.25; m], &[1.0, 2.0, 3.0, 4.0], &no_l).unwrap();
        assert!((b - c / (m as f64).sqrt()).abs() < 1e-15);
        let no_b = BoundInputs::new(2.0, 0.0, 0.05).unwrap();
        let b = pointwise_error_bound(&[0.5, 0.5], &[1.0, 3.0], &no_b).unwrap();
        assert!((b - 4.0).abs() < 1e-15);
        assert!(BoundInputs::new(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn cut_bound_cases() {
        // complete bipartite K_{2,2}: every edge is cut
        let edges = [Edge::new(0, 2, 1.0), Edge::new(0, 3, 1.0), Edge::new(1, 2, 1.0), Edge::new(1, 3, 1.0)];
        let g = SimilarityGraph::from_edges(4, &edges).unwrap();
        assert_eq!(cut_error_bound(&g, &arms(&[1, 1, 0, 0])).unwrap(), 0.0);
        assert_eq!(cut_error_bound(&g, &arms(&[1, 1, 1, 1])).unwrap(), 8.0 / 2.0);
        let g = SimilarityGraph::from_edges(3, &[Edge::new(0, 1, 1.0)]).unwrap();
        assert_eq!(cut_error_bound(&g, &arms(&[1, 0, 1])), Err(Error::ZeroDegreeNode));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn weights_sum_to_one_on_cut_edges(seed in 0u64..100_000, n in 3usize..40) {
            let x = random_matrix(n, 2, seed);
            let d = softblock(&x, Bandwidth::Auto, RandomSeed(seed), FlipPolicy::Random).unwrap();
            for (i, row) in weight_rows(&d).unwrap().iter().enumerate() {
                prop_assert!((row.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for &j in &row.neighbors {
                    prop_assert!(d.assignment.arm(i) != d.assignment.arm(j));
                    prop_assert!(d.support.iter().any(|e| (e.i, e.j) == (i.min(j), i.max(j))));
                }
            }
        }

        #[test]
        fn larger_cut_never_raises_bound(seed in 0u64..100_000, flip in 0usize..8) {
            let n = 8;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let w: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>()).collect();
            let mut sym = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    sym[i * n + j] = w[i.min(j) * n + i.max(j)];
                }
            }
            let g = SimilarityGraph::from_dense(n, sym).unwrap();
            let a = Assignment::from_bools((0..n).map(|_| rng.random_bool(0.5)));
            let mut arms_b = a.arms().to_vec();
            arms_b[flip] = 1 - arms_b[flip];
            let b = Assignment::new(arms_b).unwrap();
            let (ca, cb) = (cut_weight(&g, &a).unwrap(), cut_weight(&g, &b).unwrap());
            let (ba, bb) = (cut_error_bound(&g, &a).unwrap(), cut_error_bound(&g, &b).unwrap());
            if ca <= cb {
                prop_assert!(bb <= ba + 1e-12);
            } else {
                prop_assert!(ba <= bb + 1e-12);
            }
        }
    }
}
