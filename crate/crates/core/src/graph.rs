//! Distance and similarity structures over units.
//!
//! Every construction here is deterministic: whenever two edges compare
//! equal on weight, the lexicographically smaller `(i, j)` pair wins. Under
//! that strict total order on edges the spanning trees below are unique, so
//! Prim, Kruskal and exhaustive enumeration all agree.

use std::path::Path;

use rand::seq::index;
use rand::Rng;

use crate::dataset::{format_number, Assignment, CovariateMatrix};
use crate::error::{Error, Result};
use crate::kdtree::NeighborIndex;
use crate::rng::RandomSeed;

/// Undirected weighted edge, stored with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

impl Edge {
    pub fn new(a: usize, b: usize, weight: f64) -> Self {
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        Edge { i, j, weight }
    }

    pub fn other(&self, v: usize) -> usize {
        if v == self.i {
            self.j
        } else {
            self.i
        }
    }
}

/// Dense symmetric matrix of pairwise Euclidean distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    /// Off-diagonal entries of the upper triangle, row by row.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * (self.n - 1) / 2);
        for i in 0..self.n {
            for j in i + 1..self.n {
                out.push(self.get(i, j));
            }
        }
        out
    }
}

pub fn pairwise_distances(x: &CovariateMatrix) -> DistanceMatrix {
    let n = x.n();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = x.dist(i, j);
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    DistanceMatrix { n, d }
}

fn median_or_fallback(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return 1.0;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len();
    let med = if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    };
    if med > 0.0 {
        return med;
    }
    values.into_iter().find(|&v| v > 0.0).unwrap_or(1.0)
}

/// Median of the off-diagonal distances (mean of the two middle values for
/// an even count). Falls back to the smallest positive distance when the
/// median is zero, and to 1 when every distance is zero.
pub fn median_bandwidth(d: &DistanceMatrix) -> f64 {
    median_or_fallback(d.upper_triangle())
}

/// Number of pairs beyond which [`auto_bandwidth`] switches to a sample.
pub const BANDWIDTH_PAIR_CAP: usize = 20_000;

/// Median-heuristic bandwidth computed straight from covariates.
///
/// Exact when `n(n-1)/2 <= BANDWIDTH_PAIR_CAP`; otherwise the median over a
/// fixed pseudo-random sample of that many distinct pairs, so the cost stays
/// bounded for large `n`.
pub fn auto_bandwidth(x: &CovariateMatrix) -> f64 {
    let n = x.n();
    let pairs = n * (n - 1) / 2;
    if pairs <= BANDWIDTH_PAIR_CAP {
        let mut v = Vec::with_capacity(pairs);
        for i in 0..n {
            for j in i + 1..n {
                v.push(x.dist(i, j));
            }
        }
        return median_or_fallback(v);
    }
    let mut rng = RandomSeed(0x0BAD_5EED).rng();
    let v = index::sample(&mut rng, pairs, BANDWIDTH_PAIR_CAP)
        .into_iter()
        .map(|p| {
            let (i, j) = pair_from_rank(n, p);
            x.dist(i, j)
        })
        .collect();
    median_or_fallback(v)
}

/// Inverse of the row-major ranking of pairs `i < j`.
fn pair_from_rank(n: usize, mut p: usize) -> (usize, usize) {
    let mut i = 0;
    loop {
        let row = n - 1 - i;
        if p < row {
            return (i, i + 1 + p);
        }
        p -= row;
        i += 1;
    }
}

pub fn gaussian_kernel(dist: f64, h: f64) -> f64 {
    (-(dist * dist) / (2.0 * h * h)).exp()
}

pub(crate) fn check_bandwidth(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveBandwidth(h))
    }
}

/// Symmetric nonnegative weights over `n` nodes with an explicit edge set.
///
/// Dense constructions mark every off-diagonal pair as an edge (even if its
/// weight underflowed to zero); sparse ones only the listed pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    n: usize,
    w: Vec<f64>,
    present: Vec<bool>,
}

impl SimilarityGraph {
    /// Complete graph from a dense row-major `n x n` matrix. The diagonal is
    /// ignored and stored as zero.
    pub fn from_dense(n: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != n * n {
            return Err(Error::LengthMismatch {
                expected: n * n,
                found: weights.len(),
            });
        }
        let mut w = weights;
        let mut present = vec![true; n * n];
        for i in 0..n {
            w[i * n + i] = 0.0;
            present[i * n + i] = false;
            for j in i + 1..n {
                let (a, b) = (w[i * n + j], w[j * n + i]);
                if a != b {
                    return Err(Error::InvalidData(format!("asymmetric weight at ({i}, {j})")));
                }
                if !(a >= 0.0) || !a.is_finite() {
                    return Err(Error::InvalidData(format!("weight at ({i}, {j}) is {a}")));
                }
            }
        }
        Ok(SimilarityGraph { n, w, present })
    }

    /// Graph containing only the given edges.
    pub fn from_edges(n: usize, edges: &[Edge]) -> Result<Self> {
        let mut w = vec![0.0; n * n];
        let mut present = vec![false; n * n];
        for e in edges {
            if e.i == e.j || e.j >= n {
                return Err(Error::InvalidData(format!("bad edge ({}, {})", e.i, e.j)));
            }
            if !(e.weight >= 0.0) || !e.weight.is_finite() {
                return Err(Error::InvalidData(format!("edge weight {}", e.weight)));
            }
            for (a, b) in [(e.i, e.j), (e.j, e.i)] {
                w[a * n + b] = e.weight;
                present[a * n + b] = true;
            }
        }
        Ok(SimilarityGraph { n, w, present })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.n + j]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.present[i * self.n + j]
    }

    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.has_edge(i, j) {
                    out.push(Edge::new(i, j, self.weight(i, j)));
                }
            }
        }
        out
    }

    /// `sum_j e_ij`.
    pub fn degree(&self, i: usize) -> f64 {
        self.w[i * self.n..(i + 1) * self.n].iter().sum()
    }

    /// Applies `f` to every edge weight (the edge set is kept).
    pub fn map_weights(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut w = self.w.clone();
        for (k, v) in w.iter_mut().enumerate() {
            if self.present[k] {
                *v = f(*v);
                if !(*v >= 0.0) || !v.is_finite() {
                    return Err(Error::InvalidData(format!("mapped weight {v}")));
                }
            }
        }
        Ok(SimilarityGraph {
            n: self.n,
            w,
            present: self.present.clone(),
        })
    }
}

/// `e_ij = exp(-d_ij^2 / (2 h^2))` off the diagonal.
pub fn gaussian_similarity(d: &DistanceMatrix, h: f64) -> Result<SimilarityGraph> {
    check_bandwidth(h)?;
    let n = d.n();
    let w = d.d.iter().map(|&v| gaussian_kernel(v, h)).collect();
    SimilarityGraph::from_dense(n, w)
}

/// Dense symmetric Gram matrix, diagonal included.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    n: usize,
    k: Vec<f64>,
}

impl KernelMatrix {
    pub fn new(n: usize, k: Vec<f64>) -> Result<Self> {
        if k.len() != n * n {
            return Err(Error::LengthMismatch {
                expected: n * n,
                found: k.len(),
            });
        }
        for i in 0..n {
            for j in i + 1..n {
                if k[i * n + j] != k[j * n + i] {
                    return Err(Error::InvalidData(format!("asymmetric kernel at ({i}, {j})")));
                }
            }
        }
        Ok(KernelMatrix { n, k })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.k[i * self.n + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn quadratic_form(&self, u: &[f64]) -> f64 {
        quad(self.n, &self.k, u)
    }

    /// The graph `G = K` with its diagonal zeroed.
    pub fn off_diagonal(&self) -> Result<SimilarityGraph> {
        SimilarityGraph::from_dense(self.n, self.k.clone())
    }
}

/// Gaussian Gram matrix (unit diagonal).
pub fn gaussian_gram(d: &DistanceMatrix, h: f64) -> Result<KernelMatrix> {
    check_bandwidth(h)?;
    KernelMatrix::new(d.n(), d.d.iter().map(|&v| gaussian_kernel(v, h)).collect())
}

fn quad(n: usize, m: &[f64], u: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..n {
        let row = &m[i * n..(i + 1) * n];
        let inner: f64 = row.iter().zip(u).map(|(a, b)| a * b).sum();
        total += u[i] * inner;
    }
    total
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub(crate) struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut v: usize) -> usize {
        while self.parent[v] != v {
            self.parent[v] = self.parent[self.parent[v]];
            v = self.parent[v];
        }
        v
    }

    /// False if `a` and `b` were already connected.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Component label per node. Components are numbered 0, 1, ... in order of
/// their lowest-index member.
pub fn component_labels(n: usize, edges: &[Edge]) -> Vec<usize> {
    let mut uf = UnionFind::new(n);
    for e in edges {
        uf.union(e.i, e.j);
    }
    let mut label_of_root = vec![usize::MAX; n];
    let mut next = 0;
    let mut labels = vec![0; n];
    for v in 0..n {
        let r = uf.find(v);
        if label_of_root[r] == usize::MAX {
            label_of_root[r] = next;
            next += 1;
        }
        labels[v] = label_of_root[r];
    }
    labels
}

/// True when the edges contain no cycle (parallel edges count as a cycle).
pub fn is_forest(n: usize, edges: &[Edge]) -> bool {
    let mut uf = UnionFind::new(n);
    edges.iter().all(|e| e.i != e.j && e.j < n && uf.union(e.i, e.j))
}

/// `n - 1` edges forming a connected acyclic graph, sorted by `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanningTree {
    n: usize,
    edges: Vec<Edge>,
}

impl SpanningTree {
    pub fn new(n: usize, mut edges: Vec<Edge>) -> Result<Self> {
        if n == 0 || edges.len() != n - 1 {
            return Err(Error::InvalidData(format!(
                "a spanning tree on {n} nodes has {} edges, got {}",
                n.saturating_sub(1),
                edges.len()
            )));
        }
        if !is_forest(n, &edges) {
            return Err(Error::CycleDetected);
        }
        edges.sort_by(|a, b| (a.i, a.j).cmp(&(b.i, b.j)));
        Ok(SpanningTree { n, edges })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn into_edges(self) -> Vec<Edge> {
        self.edges
    }

    /// Sum of edge weights in `(i, j)` order.
    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).sum()
    }

    pub fn edge_pairs(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|e| (e.i, e.j)).collect()
    }
}

/// Is `(wa, a)` strictly preferred to `(wb, b)` when maximizing weight?
fn heavier(wa: f64, a: (usize, usize), wb: f64, b: (usize, usize)) -> bool {
    wa > wb || (wa == wb && a < b)
}

fn ordered(u: usize, v: usize) -> (usize, usize) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Dense Prim over an arbitrary edge-key function, `O(n^2)`.
///
/// `key(u, v)` returns `None` for a missing edge; larger keys are preferred.
fn prim(n: usize, key: impl Fn(usize, usize) -> Option<f64>) -> Result<Vec<(usize, usize, f64)>> {
    let mut in_tree = vec![false; n];
    let mut best: Vec<Option<(f64, usize)>> = vec![None; n];
    let mut out = Vec::with_capacity(n.saturating_sub(1));
    if n == 0 {
        return Ok(out);
    }
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let mut pick: Option<usize> = None;
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            if let Some(k) = key(current, v) {
                let better = match best[v] {
                    None => true,
                    Some((bk, bu)) => heavier(k, ordered(current, v), bk, ordered(bu, v)),
                };
                if better {
                    best[v] = Some((k, current));
                }
            }
            if let Some((k, u)) = best[v] {
                let replace = match pick {
                    None => true,
                    Some(p) => {
                        let (pk, pu) = best[p].unwrap();
                        heavier(k, ordered(u, v), pk, ordered(pu, p))
                    }
                };
                if replace {
                    pick = Some(v);
                }
            }
        }
        let v = pick.ok_or(Error::DisconnectedGraph)?;
        let (k, u) = best[v].unwrap();
        in_tree[v] = true;
        out.push((u, v, k));
        current = v;
    }
    Ok(out)
}

/// Maximum-weight spanning tree over the graph's edges, ties broken by
/// lexicographic `(i, j)`.
pub fn maximum_spanning_tree(e: &SimilarityGraph) -> Result<SpanningTree> {
    let raw = prim(e.n(), |u, v| e.has_edge(u, v).then(|| e.weight(u, v)))?;
    SpanningTree::new(e.n(), raw.into_iter().map(|(u, v, w)| Edge::new(u, v, w)).collect())
}

/// Euclidean minimum spanning tree of the rows of `x`; edge weights are
/// distances. Equal to [`maximum_spanning_tree`] of any strictly decreasing
/// similarity of distance, with the same tie-break.
pub fn minimum_distance_spanning_tree(x: &CovariateMatrix) -> SpanningTree {
    let raw = prim(x.n(), |u, v| Some(-x.sq_dist(u, v))).expect("complete graph is connected");
    let edges = raw
        .into_iter()
        .map(|(u, v, k)| Edge::new(u, v, (-k).sqrt()))
        .collect();
    SpanningTree::new(x.n(), edges).expect("prim returns a tree")
}

/// Undirected one-nearest-neighbor graph.
#[derive(Debug, Clone, PartialEq)]
pub struct NearestNeighborForest {
    n: usize,
    /// Nearest neighbor of each unit (ties to lowest index).
    pub nearest: Vec<usize>,
    /// Deduplicated edges, weights are distances, sorted by `(i, j)`.
    pub edges: Vec<Edge>,
    /// Component label per unit, see [`component_labels`].
    pub components: Vec<usize>,
}

impl NearestNeighborForest {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn component_count(&self) -> usize {
        self.components.iter().max().map_or(0, |m| m + 1)
    }
}

/// Links every unit to its Euclidean nearest neighbor.
///
/// Uses a kd-tree up to [`crate::kdtree::MAX_TREE_DIM`] dimensions and a
/// linear scan beyond. With lowest-index tie-breaking the result is always a
/// forest.
pub fn nearest_neighbor_forest(x: &CovariateMatrix) -> NearestNeighborForest {
    let n = x.n();
    let index = NeighborIndex::over_all(x);
    let nearest: Vec<usize> = (0..n)
        .map(|i| index.nearest(x.row(i), 1, Some(i))[0].1)
        .collect();
    let mut edges: Vec<Edge> = nearest
        .iter()
        .enumerate()
        .map(|(i, &j)| Edge::new(i, j, x.dist(i, j)))
        .collect();
    edges.sort_by(|a, b| (a.i, a.j).cmp(&(b.i, b.j)));
    edges.dedup_by(|a, b| a.i == b.i && a.j == b.j);
    let components = component_labels(n, &edges);
    NearestNeighborForest {
        n,
        nearest,
        edges,
        components,
    }
}

/// `L = D - G`, dense.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphLaplacian {
    n: usize,
    l: Vec<f64>,
}

impl GraphLaplacian {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.n + j]
    }

    pub fn quadratic_form(&self, u: &[f64]) -> f64 {
        quad(self.n, &self.l, u)
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.l[i * self.n..(i + 1) * self.n].iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }
}

pub fn graph_laplacian(e: &SimilarityGraph) -> GraphLaplacian {
    let n = e.n();
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        l[i * n + i] = e.degree(i);
        for j in 0..n {
            if i != j {
                l[i * n + j] = -e.weight(i, j);
            }
        }
    }
    GraphLaplacian { n, l }
}

/// Total weight of unordered pairs whose endpoints are in different arms.
pub fn cut_weight(e: &SimilarityGraph, a: &Assignment) -> Result<f64> {
    a.require_len(e.n())?;
    let n = e.n();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            if a.arm(i) != a.arm(j) {
                total += e.weight(i, j);
            }
        }
    }
    Ok(total)
}

/// Cut weight restricted to an edge list.
pub fn edge_cut_weight(edges: &[Edge], a: &Assignment) -> f64 {
    edges
        .iter()
        .filter(|e| a.arm(e.i) != a.arm(e.j))
        .map(|e| e.weight)
        .sum()
}

/// Writes `i,j,weight` rows with a header, 0-based indices.
pub fn write_edges(path: impl AsRef<Path>, edges: &[Edge]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("i,j,weight\n");
    for e in edges {
        out.push_str(&format!("{},{},{}\n", e.i, e.j, format_number(e.weight)));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads an edge list written by [`write_edges`].
pub fn read_edges(path: impl AsRef<Path>) -> Result<Vec<Edge>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::io(path, e))?;
    let mut edges = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| Error::Malformed {
            row,
            message: e.to_string(),
        })?;
        if rec.len() != 3 {
            return Err(Error::RaggedRows {
                row,
                found: rec.len(),
                expected: 3,
            });
        }
        let i: usize = rec[0].parse().map_err(|_| Error::NonNumericField { row, col: 1 })?;
        let j: usize = rec[1].parse().map_err(|_| Error::NonNumericField { row, col: 2 })?;
        let w: f64 = rec[2].parse().map_err(|_| Error::NonNumericField { row, col: 3 })?;
        if i == j || !w.is_finite() {
            return Err(Error::Malformed {
                row,
                message: "self loop or non-finite weight".into(),
            });
        }
        edges.push(Edge::new(i, j, w));
    }
    Ok(edges)
}

/// Random weighted tree on `n` nodes (uniform random parent among earlier
/// nodes after a random relabeling). Handy for tests and demos.
pub fn random_tree(n: usize, seed: RandomSeed) -> SpanningTree {
    let mut rng = seed.rng();
    let mut order: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    let edges = (1..n)
        .map(|k| {
            let parent = order[rng.random_range(0..k)];
            Edge::new(order[k], parent, rng.random::<f64>())
        })
        .collect();
    SpanningTree::new(n, edges).expect("valid by construction")
}
