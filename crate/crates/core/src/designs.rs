//! Treatment-assignment mechanisms.
//!
//! SoftBlock and GreedyNeighbors solve Maxcut exactly on a sparse graph that
//! is bipartite by construction (the Euclidean minimum spanning tree and the
//! one-nearest-neighbor forest). Two-coloring such a graph cuts every edge,
//! which is the maximum possible cut. The remaining designs are the usual
//! baselines.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::balance::mahalanobis_balance;
use crate::dataset::{Assignment, CovariateMatrix};
use crate::error::{Error, Result};
use crate::graph::{
    auto_bandwidth, check_bandwidth, component_labels, gaussian_kernel, is_forest,
    minimum_distance_spanning_tree, nearest_neighbor_forest, Edge,
};
use crate::rng::RandomSeed;

/// Upper bound on draws (pilot included) for [`rerandomize`].
pub const MAX_RERANDOMIZATION_DRAWS: usize = 1_000_000;
/// Default number of pilot draws used to set the acceptance threshold.
pub const DEFAULT_PILOT: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[serde(rename = "softblock")]
    SoftBlock,
    #[serde(rename = "greedy")]
    GreedyNeighbors,
    Bernoulli,
    Complete,
    Rerandomize,
    #[serde(rename = "matchedpairs")]
    MatchedPairs,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::SoftBlock,
        Method::GreedyNeighbors,
        Method::Bernoulli,
        Method::Complete,
        Method::Rerandomize,
        Method::MatchedPairs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::SoftBlock => "softblock",
            Method::GreedyNeighbors => "greedy",
            Method::Bernoulli => "bernoulli",
            Method::Complete => "complete",
            Method::Rerandomize => "rerandomize",
            Method::MatchedPairs => "matchedpairs",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method {s:?}")))
    }
}

/// Kernel bandwidth: the median heuristic or a fixed value.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Bandwidth {
    #[default]
    Auto,
    Fixed(f64),
}

impl Bandwidth {
    pub fn resolve(self, x: &CovariateMatrix) -> Result<f64> {
        match self {
            Bandwidth::Auto => Ok(auto_bandwidth(x)),
            Bandwidth::Fixed(h) => {
                check_bandwidth(h)?;
                Ok(h)
            }
        }
    }
}

impl FromStr for Bandwidth {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Bandwidth::Auto);
        }
        let h: f64 = s
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bandwidth {s:?} is neither auto nor a number")))?;
        check_bandwidth(h)?;
        Ok(Bandwidth::Fixed(h))
    }
}

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bandwidth::Auto => f.write_str("auto"),
            Bandwidth::Fixed(h) => write!(f, "{h}"),
        }
    }
}

impl Serialize for Bandwidth {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Bandwidth::Auto => s.serialize_str("auto"),
            Bandwidth::Fixed(h) => s.serialize_f64(*h),
        }
    }
}

impl<'de> Deserialize<'de> for Bandwidth {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(h) => {
                check_bandwidth(h).map_err(serde::de::Error::custom)?;
                Ok(Bandwidth::Fixed(h))
            }
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// How each connected component's two-coloring is oriented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlipPolicy {
    /// Fair coin per component.
    #[default]
    Random,
    /// The lowest-index unit of each component is treated.
    Fixed,
}

/// An assignment together with the graph it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub assignment: Assignment,
    /// Support graph; weights are Gaussian similarities. Empty for designs
    /// without one.
    pub support: Vec<Edge>,
    pub method: Method,
    pub seed: RandomSeed,
    /// Bandwidth used for the support weights, if any.
    pub bandwidth: Option<f64>,
    /// Component label of every unit in the support graph.
    pub components: Vec<usize>,
    /// Matched-pairs only: the unit left out when `n` is odd.
    pub unmatched: Option<usize>,
}

impl Design {
    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn group_sizes(&self) -> (usize, usize) {
        self.assignment.group_sizes()
    }

    pub fn support_weight(&self) -> f64 {
        self.support.iter().map(|e| e.weight).sum()
    }

    pub fn component_count(&self) -> usize {
        self.components.iter().max().map_or(0, |m| m + 1)
    }

    /// True when every support edge joins opposite arms.
    pub fn all_edges_cut(&self) -> bool {
        self.support
            .iter()
            .all(|e| self.assignment.arm(e.i) != self.assignment.arm(e.j))
    }

    /// Same design with every arm flipped.
    pub fn flipped(&self) -> Design {
        Design {
            assignment: self.assignment.flipped(),
            ..self.clone()
        }
    }

    /// Design from a stored assignment and support graph (for estimation
    /// from files).
    pub fn from_parts(method: Method, assignment: Assignment, support: Vec<Edge>) -> Result<Design> {
        let n = assignment.len();
        if let Some(e) = support.iter().find(|e| e.j >= n) {
            return Err(Error::InvalidData(format!(
                "edge ({}, {}) references a unit beyond {n}",
                e.i, e.j
            )));
        }
        let components = component_labels(n, &support);
        Ok(Design {
            assignment,
            support,
            method,
            seed: RandomSeed(0),
            bandwidth: None,
            components,
            unmatched: None,
        })
    }
}

/// Result of two-coloring a forest.
#[derive(Debug, Clone, PartialEq)]
pub struct Coloring {
    pub assignment: Assignment,
    pub components: Vec<usize>,
}

/// Exact Maxcut of a forest: adjacent nodes always get opposite arms.
///
/// Components are visited in order of their lowest-index node, which is the
/// root of a breadth-first walk; with [`FlipPolicy::Random`] one fair coin per
/// component, drawn in that order, orients the root.
pub fn two_color_forest<R: Rng + ?Sized>(
    n: usize,
    edges: &[Edge],
    flip: FlipPolicy,
    rng: &mut R,
) -> Result<Coloring> {
    if !is_forest(n, edges) {
        return Err(Error::CycleDetected);
    }
    let mut adj = vec![Vec::new(); n];
    for e in edges {
        adj[e.i].push(e.j);
        adj[e.j].push(e.i);
    }
    adj.iter_mut().for_each(|v| v.sort_unstable());
    let components = component_labels(n, edges);
    let mut arm = vec![u8::MAX; n];
    let mut queue = VecDeque::new();
    for root in 0..n {
        if arm[root] != u8::MAX {
            continue;
        }
        arm[root] = match flip {
            FlipPolicy::Random => u8::from(rng.random_bool(0.5)),
            FlipPolicy::Fixed => 1,
        };
        queue.push_back(root);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if arm[w] == u8::MAX {
                    arm[w] = 1 - arm[v];
                    queue.push_back(w);
                }
            }
        }
    }
    Ok(Coloring {
        assignment: Assignment::new(arm)?,
        components,
    })
}

/// [`two_color_forest`] with a fresh generator from `seed`.
pub fn two_color_tree(n: usize, edges: &[Edge], seed: RandomSeed) -> Result<Coloring> {
    two_color_forest(n, edges, FlipPolicy::Random, &mut seed.rng())
}

fn require_units(n: usize, min: usize) -> Result<()> {
    if n < min {
        return Err(Error::InvalidParameter(format!("need at least {min} units, got {n}")));
    }
    Ok(())
}

fn with_similarity(edges: Vec<Edge>, h: f64) -> Vec<Edge> {
    edges
        .into_iter()
        .map(|e| Edge {
            weight: gaussian_kernel(e.weight, h),
            ..e
        })
        .collect()
}

/// SoftBlock: two-color the maximum spanning tree of Gaussian similarities.
///
/// The tree is computed as the Euclidean minimum spanning tree, which is the
/// same tree for every bandwidth; the bandwidth only sets the support
/// weights. Exactly two assignments are reachable (the global flip).
pub fn softblock(x: &CovariateMatrix, bandwidth: Bandwidth, seed: RandomSeed, flip: FlipPolicy) -> Result<Design> {
    let h = bandwidth.resolve(x)?;
    let tree = minimum_distance_spanning_tree(x);
    let support = with_similarity(tree.into_edges(), h);
    let coloring = two_color_forest(x.n(), &support, flip, &mut seed.rng())?;
    Ok(Design {
        assignment: coloring.assignment,
        support,
        method: Method::SoftBlock,
        seed,
        bandwidth: Some(h),
        components: coloring.components,
        unmatched: None,
    })
}

/// GreedyNeighbors: two-color the one-nearest-neighbor forest, one coin per
/// component, so `2^M` assignments are reachable for `M` components.
pub fn greedy_neighbors(x: &CovariateMatrix, bandwidth: Bandwidth, seed: RandomSeed) -> Result<Design> {
    let h = bandwidth.resolve(x)?;
    let forest = nearest_neighbor_forest(x);
    let support = with_similarity(forest.edges, h);
    let coloring = two_color_forest(x.n(), &support, FlipPolicy::Random, &mut seed.rng())?;
    Ok(Design {
        assignment: coloring.assignment,
        support,
        method: Method::GreedyNeighbors,
        seed,
        bandwidth: Some(h),
        components: coloring.components,
        unmatched: None,
    })
}

/// Independent fair coin per unit. Either arm may come out empty.
pub fn bernoulli(n: usize, seed: RandomSeed) -> Result<Assignment> {
    require_units(n, 1)?;
    let mut rng = seed.rng();
    Ok(Assignment::from_bools((0..n).map(|_| rng.random_bool(0.5))))
}

fn complete_draw<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Assignment {
    let mut arms = vec![0u8; n];
    for i in index::sample(rng, n, n / 2) {
        arms[i] = 1;
    }
    Assignment::new(arms).expect("0/1 arms")
}

/// Exactly `floor(n / 2)` treated units, uniformly at random.
pub fn complete_randomization(n: usize, seed: RandomSeed) -> Result<Assignment> {
    require_units(n, 2)?;
    Ok(complete_draw(n, &mut seed.rng()))
}

/// Outcome of [`rerandomize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Rerandomized {
    pub assignment: Assignment,
    /// Acceptance threshold on the Mahalanobis balance.
    pub threshold: f64,
    /// Balance of the accepted assignment.
    pub balance: f64,
    /// Draws consumed, pilot included.
    pub draws: usize,
}

/// Rerandomization on Mahalanobis balance.
///
/// `pilot` complete randomizations set the threshold at their empirical
/// `accept_frac` quantile (the `ceil(accept_frac * pilot)`-th smallest
/// balance); further draws from the same stream are taken until one falls
/// at or below it. `accept_frac = 1` accepts the first draw, which is then
/// identical to [`complete_randomization`] with the same seed.
pub fn rerandomize(x: &CovariateMatrix, accept_frac: f64, pilot: usize, seed: RandomSeed) -> Result<Rerandomized> {
    if !(accept_frac > 0.0 && accept_frac <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "accept_frac must be in (0, 1], got {accept_frac}"
        )));
    }
    let n = x.n();
    require_units(n, 2)?;
    let mut rng = seed.rng();
    if accept_frac == 1.0 {
        let assignment = complete_draw(n, &mut rng);
        let balance = mahalanobis_balance(x, &assignment)?;
        return Ok(Rerandomized {
            assignment,
            threshold: f64::INFINITY,
            balance,
            draws: 1,
        });
    }
    if pilot == 0 {
        return Err(Error::InvalidParameter("pilot must be positive".into()));
    }
    let mut scores = Vec::with_capacity(pilot);
    for _ in 0..pilot {
        scores.push(mahalanobis_balance(x, &complete_draw(n, &mut rng))?);
    }
    scores.sort_by(f64::total_cmp);
    let rank = ((accept_frac * pilot as f64).ceil() as usize).clamp(1, pilot);
    let threshold = scores[rank - 1];
    let mut draws = pilot;
    while draws < MAX_RERANDOMIZATION_DRAWS {
        draws += 1;
        let assignment = complete_draw(n, &mut rng);
        let balance = mahalanobis_balance(x, &assignment)?;
        if balance <= threshold {
            return Ok(Rerandomized {
                assignment,
                threshold,
                balance,
                draws,
            });
        }
    }
    Err(Error::MaxDrawsExceeded(MAX_RERANDOMIZATION_DRAWS))
}

/// Greedy matching on similarity: pairs are taken in order of increasing
/// distance (ties by `(i, j)`) whenever both endpoints are still free.
/// Returns pairs `(i, j)` with `i < j` in acceptance order.
pub fn greedy_matching(x: &CovariateMatrix, units: &[usize]) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(f64, u32, u32)> = Vec::with_capacity(units.len() * units.len().saturating_sub(1) / 2);
    for (p, &i) in units.iter().enumerate() {
        for &j in &units[p + 1..] {
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            pairs.push((x.sq_dist(a, b), a as u32, b as u32));
        }
    }
    pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut free = vec![false; x.n()];
    units.iter().for_each(|&i| free[i] = true);
    let mut out = Vec::with_capacity(units.len() / 2);
    for (_, a, b) in pairs {
        let (a, b) = (a as usize, b as usize);
        if free[a] && free[b] {
            free[a] = false;
            free[b] = false;
            out.push((a, b));
        }
    }
    out
}

/// Matched pairs from a greedy (1/2-approximate) maximum-weight matching; a
/// fair coin per pair picks the treated unit.
///
/// For odd `n` the unit with the largest nearest-neighbor distance is left
/// out of the matching, assigned by its own coin and reported in
/// [`Design::unmatched`].
pub fn matched_pairs(x: &CovariateMatrix, bandwidth: Bandwidth, seed: RandomSeed) -> Result<Design> {
    let n = x.n();
    let h = bandwidth.resolve(x)?;
    let unmatched = if n % 2 == 1 {
        let forest = nearest_neighbor_forest(x);
        let mut worst = 0;
        let mut worst_d = f64::NEG_INFINITY;
        for i in 0..n {
            let d = x.sq_dist(i, forest.nearest[i]);
            if d > worst_d {
                worst_d = d;
                worst = i;
            }
        }
        Some(worst)
    } else {
        None
    };
    let units: Vec<usize> = (0..n).filter(|&i| Some(i) != unmatched).collect();
    let mut pairs = greedy_matching(x, &units);
    pairs.sort_unstable();
    let mut rng = seed.rng();
    let mut arms = vec![0u8; n];
    let mut support = Vec::with_capacity(pairs.len());
    for &(i, j) in &pairs {
        let first_treated = rng.random_bool(0.5);
        arms[i] = u8::from(first_treated);
        arms[j] = u8::from(!first_treated);
        support.push(Edge::new(i, j, gaussian_kernel(x.dist(i, j), h)));
    }
    if let Some(u) = unmatched {
        arms[u] = u8::from(rng.random_bool(0.5));
    }
    let components = component_labels(n, &support);
    Ok(Design {
        assignment: Assignment::new(arms)?,
        support,
        method: Method::MatchedPairs,
        seed,
        bandwidth: Some(h),
        components,
        unmatched,
    })
}

/// Knobs shared by all designs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignOptions {
    pub bandwidth: Bandwidth,
    pub accept_frac: f64,
    pub pilot: usize,
    pub flip: FlipPolicy,
}

impl Default for DesignOptions {
    fn default() -> Self {
        DesignOptions {
            bandwidth: Bandwidth::Auto,
            accept_frac: 0.01,
            pilot: DEFAULT_PILOT,
            flip: FlipPolicy::Random,
        }
    }
}

fn graphless(method: Method, assignment: Assignment, seed: RandomSeed) -> Design {
    let n = assignment.len();
    Design {
        assignment,
        support: Vec::new(),
        method,
        seed,
        bandwidth: None,
        components: (0..n).collect(),
        unmatched: None,
    }
}

/// Runs the named design.
pub fn make_design(method: Method, x: &CovariateMatrix, opts: &DesignOptions, seed: RandomSeed) -> Result<Design> {
    match method {
        Method::SoftBlock => softblock(x, opts.bandwidth, seed, opts.flip),
        Method::GreedyNeighbors => greedy_neighbors(x, opts.bandwidth, seed),
        Method::MatchedPairs => matched_pairs(x, opts.bandwidth, seed),
        Method::Bernoulli => Ok(graphless(method, bernoulli(x.n(), seed)?, seed)),
        Method::Complete => Ok(graphless(method, complete_randomization(x.n(), seed)?, seed)),
        Method::Rerandomize => {
            let r = rerandomize(x, opts.accept_frac, opts.pilot, seed)?;
            Ok(graphless(method, r.assignment, seed))
        }
    }
}

/// Writes `unit_index,arm,component_id` rows with a header.
pub fn write_assignment(path: impl AsRef<Path>, a: &Assignment, components: &[usize]) -> Result<()> {
    let path = path.as_ref();
    a.require_len(components.len())?;
    let mut out = String::from("unit_index,arm,component_id\n");
    for (i, (&arm, &c)) in a.arms().iter().zip(components).enumerate() {
        out.push_str(&format!("{i},{arm},{c}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a file written by [`write_assignment`]. Rows may come in any order
/// but every unit index `0..n` must appear exactly once.
pub fn read_assignment(path: impl AsRef<Path>) -> Result<(Assignment, Vec<usize>)> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| Error::Malformed {
            row,
            message: e.to_string(),
        })?;
        if rec.len() < 2 {
            return Err(Error::RaggedRows {
                row,
                found: rec.len(),
                expected: 3,
            });
        }
        let unit: usize = rec[0].parse().map_err(|_| Error::NonNumericField { row, col: 1 })?;
        let arm: u8 = rec[1].parse().map_err(|_| Error::NonNumericField { row, col: 2 })?;
        let comp: usize = match rec.get(2) {
            Some(s) => s.parse().map_err(|_| Error::NonNumericField { row, col: 3 })?,
            None => unit,
        };
        rows.push((unit, arm, comp));
    }
    let n = rows.len();
    let mut arms = vec![u8::MAX; n];
    let mut comps = vec![0; n];
    for (unit, arm, comp) in rows {
        if unit >= n || arms[unit] != u8::MAX {
            return Err(Error::InvalidData(format!("unit index {unit} out of range or repeated")));
        }
        arms[unit] = arm;
        comps[unit] = comp;
    }
    Ok((Assignment::new(arms)?, comps))
}
