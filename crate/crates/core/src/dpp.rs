//! Spanning trees as a distribution: `p(T)` proportional to
//! `exp(sum of e_ij over T)`, normalized with the matrix-tree theorem.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::{component_labels, Edge, SimilarityGraph, SpanningTree};

/// Largest graph accepted by [`enumerate_spanning_trees`].
pub const ENUMERATION_LIMIT: usize = 8;

/// Exponentiated weights and their normalizer.
///
/// `scaled_weights` holds `exp(e_ij - shift)` for present edges (zero
/// elsewhere), with `shift` the largest edge weight; `log_partition` has the
/// shift already removed.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeDistribution {
    pub n: usize,
    pub shift: f64,
    pub scaled_weights: DMatrix<f64>,
    pub log_partition: f64,
}

fn check_sizes(t: &SpanningTree, e: &SimilarityGraph) -> Result<()> {
    if t.n() != e.n() {
        return Err(Error::LengthMismatch {
            expected: e.n(),
            found: t.n(),
        });
    }
    Ok(())
}

/// Sum of `e_ij` over the edges of `t`.
pub fn tree_log_weight(t: &SpanningTree, e: &SimilarityGraph) -> Result<f64> {
    check_sizes(t, e)?;
    t.edges().iter().try_fold(0.0, |acc, edge| {
        if !e.has_edge(edge.i, edge.j) {
            return Err(Error::EdgeNotInGraph(edge.i, edge.j));
        }
        Ok(acc + e.weight(edge.i, edge.j))
    })
}

/// Builds the [`TreeDistribution`] of `e`.
pub fn tree_distribution(e: &SimilarityGraph) -> Result<TreeDistribution> {
    let n = e.n();
    let edges = e.edges();
    if n == 0 {
        return Err(Error::InvalidData("empty graph".into()));
    }
    if component_labels(n, &edges).iter().any(|&c| c != 0) {
        return Err(Error::DisconnectedGraph);
    }
    let shift = edges.iter().map(|x| x.weight).fold(f64::NEG_INFINITY, f64::max);
    let shift = if shift.is_finite() { shift } else { 0.0 };
    let mut w = DMatrix::<f64>::zeros(n, n);
    for x in &edges {
        let v = (x.weight - shift).exp();
        w[(x.i, x.j)] = v;
        w[(x.j, x.i)] = v;
    }
    if n == 1 {
        return Ok(TreeDistribution {
            n,
            shift,
            scaled_weights: w,
            log_partition: 0.0,
        });
    }
    let m = n - 1;
    let mut lap = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        lap[(i, i)] = w.row(i).sum();
        for j in 0..m {
            if i != j {
                lap[(i, j)] = -w[(i, j)];
            }
        }
    }
    let log_det = match nalgebra::Cholesky::new(lap.clone()) {
        Some(chol) => 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>(),
        None => {
            let lu = lap.lu();
            let u = lu.u();
            let mut sign = 1.0;
            let mut acc = 0.0;
            for v in u.diagonal().iter() {
                if *v == 0.0 {
                    return Err(Error::DisconnectedGraph);
                }
                sign *= v.signum();
                acc += v.abs().ln();
            }
            let perm_sign = lu.p().determinant::<f64>();
            if sign * perm_sign <= 0.0 {
                return Err(Error::DisconnectedGraph);
            }
            acc
        }
    };
    let log_partition = log_det + m as f64 * shift;
    if !log_partition.is_finite() {
        return Err(Error::Overflow);
    }
    Ok(TreeDistribution {
        n,
        shift,
        scaled_weights: w,
        log_partition,
    })
}

/// Log of the sum over spanning trees of `exp(sum of e_ij)`.
pub fn log_partition(e: &SimilarityGraph) -> Result<f64> {
    Ok(tree_distribution(e)?.log_partition)
}

/// `tree_log_weight - log_partition`; never positive.
pub fn tree_log_probability(t: &SpanningTree, e: &SimilarityGraph) -> Result<f64> {
    let w = tree_log_weight(t, e)?;
    Ok((w - log_partition(e)?).min(0.0))
}

/// Every labeled spanning tree of `e`, by backtracking over its edges.
pub fn enumerate_spanning_trees(e: &SimilarityGraph) -> Result<Vec<SpanningTree>> {
    let n = e.n();
    if n > ENUMERATION_LIMIT {
        return Err(Error::TooLarge {
            n,
            limit: ENUMERATION_LIMIT,
        });
    }
    let edges = e.edges();
    let mut out = Vec::new();
    if n <= 1 {
        out.push(SpanningTree::new(n, Vec::new())?);
        return Ok(out);
    }
    let labels: Vec<usize> = (0..n).collect();
    let mut chosen = Vec::with_capacity(n - 1);
    backtrack(n, &edges, 0, &labels, &mut chosen, &mut out)?;
    Ok(out)
}

fn backtrack(
    n: usize,
    edges: &[Edge],
    start: usize,
    labels: &[usize],
    chosen: &mut Vec<Edge>,
    out: &mut Vec<SpanningTree>,
) -> Result<()> {
    if chosen.len() == n - 1 {
        out.push(SpanningTree::new(n, chosen.clone())?);
        return Ok(());
    }
    let needed = n - 1 - chosen.len();
    for k in start..edges.len() {
        if edges.len() - k < needed {
            break;
        }
        let e = edges[k];
        let (li, lj) = (labels[e.i], labels[e.j]);
        if li == lj {
            continue;
        }
        let merged: Vec<usize> = labels.iter().map(|&l| if l == lj { li } else { l }).collect();
        chosen.push(e);
        backtrack(n, edges, k + 1, &merged, chosen, out)?;
        chosen.pop();
    }
    Ok(())
}
