//! Exact k-nearest-neighbor queries over a subset of rows of a covariate
//! matrix. Ties are broken by lowest unit index, so results are fully
//! determined by the input.

use crate::dataset::{sq_dist, CovariateMatrix};

/// Beyond this dimension a kd-tree prunes too little to beat a linear scan.
pub const MAX_TREE_DIM: usize = 16;
const LEAF_SIZE: usize = 8;

enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

pub struct NeighborIndex<'a> {
    x: &'a CovariateMatrix,
    idx: Vec<usize>,
    nodes: Vec<Node>,
    brute: bool,
}

/// Sorted candidate list keyed by `(squared distance, index)`.
struct Best {
    k: usize,
    items: Vec<(f64, usize)>,
}

impl Best {
    fn worst(&self) -> f64 {
        if self.items.len() < self.k {
            f64::INFINITY
        } else {
            self.items[self.k - 1].0
        }
    }

    fn offer(&mut self, d2: f64, i: usize) {
        let key = (d2, i);
        if self.items.len() == self.k {
            let last = self.items[self.k - 1];
            if !less(key, last) {
                return;
            }
            self.items.pop();
        }
        let pos = self.items.partition_point(|&it| less(it, key));
        self.items.insert(pos, key);
    }
}

fn less(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

impl<'a> NeighborIndex<'a> {
    /// Index over the rows listed in `subset`.
    pub fn new(x: &'a CovariateMatrix, subset: Vec<usize>) -> Self {
        let brute = x.dim() > MAX_TREE_DIM;
        let mut tree = NeighborIndex {
            x,
            idx: subset,
            nodes: Vec::new(),
            brute,
        };
        if !brute && !tree.idx.is_empty() {
            let len = tree.idx.len();
            tree.build(0, len);
        }
        tree
    }

    pub fn over_all(x: &'a CovariateMatrix) -> Self {
        Self::new(x, (0..x.n()).collect())
    }

    pub fn len(&self) -> usize {
        self.idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idx.is_empty()
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let d = self.x.dim();
        let mut best_dim = 0;
        let mut best_spread = -1.0;
        for k in 0..d {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in &self.idx[start..end] {
                let v = self.x.get(i, k);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi - lo > best_spread {
                best_spread = hi - lo;
                best_dim = k;
            }
        }
        let mid = start + (end - start) / 2;
        let x = self.x;
        self.idx[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            x.get(a, best_dim).total_cmp(&x.get(b, best_dim)).then(a.cmp(&b))
        });
        let value = x.get(self.idx[mid], best_dim);
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            dim: best_dim,
            value,
            left,
            right,
        };
        id
    }

    /// The `k` nearest indexed units to `query`, nearest first, as
    /// `(squared distance, unit index)`. `exclude` is skipped if present.
    pub fn nearest(&self, query: &[f64], k: usize, exclude: Option<usize>) -> Vec<(f64, usize)> {
        let mut best = Best {
            k,
            items: Vec::with_capacity(k + 1),
        };
        if k == 0 || self.idx.is_empty() {
            return best.items;
        }
        if self.brute {
            for &i in &self.idx {
                if Some(i) != exclude {
                    best.offer(sq_dist(query, self.x.row(i)), i);
                }
            }
        } else {
            self.search(0, query, exclude, &mut best);
        }
        best.items
    }

    fn search(&self, node: usize, q: &[f64], exclude: Option<usize>, best: &mut Best) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.idx[start..end] {
                    if Some(i) != exclude {
                        best.offer(sq_dist(q, self.x.row(i)), i);
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, exclude, best);
                // `<=` keeps equidistant points on the far side reachable, which
                // the index tie-break needs.
                if diff * diff <= best.worst() {
                    self.search(far, q, exclude, best);
                }
            }
        }
    }
}
