//! Static KD-tree for exact k-nearest-neighbor queries.
//!
//! Built once over a fixed point set (RBF centers, cluster centers) and
//! queried many times. Queries return exactly `k` distinct point indices
//! ordered by `(squared distance, index)` ascending; ties on distance always
//! resolve to the lowest index, and the tree never prunes a subtree that
//! could contain an equal-distance candidate, so results match a brute-force
//! scan bit for bit.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct Node {
    axis: u8,
    split: f64,
    point: u32,
    left: i32,  // -1 = none
    right: i32, // -1 = none
}

#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    pts: Vec<f64>,
    nodes: Vec<Node>,
    root: i32,
}

/// Squared Euclidean distance, accumulated in axis order. The brute-force
/// reference in the tests uses the same expression, so equality is exact.
#[inline]
pub fn dist2(dim: usize, a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for d in 0..dim {
        let diff = a[d] - b[d];
        acc += diff * diff;
    }
    acc
}

impl KdTree {
    /// Builds over `n = pts.len() / dim` points in their given order.
    pub fn new(dim: usize, pts: &[f64]) -> Result<Self> {
        if dim == 0 || pts.is_empty() || pts.len() % dim != 0 {
            return Err(Error::config(format!(
                "kd-tree needs a non-empty multiple of dim={dim}, got {} values",
                pts.len()
            )));
        }
        if pts.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("kd-tree points must be finite"));
        }
        let n = pts.len() / dim;
        let mut idx: Vec<u32> = (0..n as u32).collect();
        let mut tree = KdTree {
            dim,
            pts: pts.to_vec(),
            nodes: Vec::with_capacity(n),
            root: -1,
        };
        tree.root = tree.build(&mut idx);
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn coord(&self, point: u32, axis: usize) -> f64 {
        self.pts[point as usize * self.dim + axis]
    }

    fn build(&mut self, idx: &mut [u32]) -> i32 {
        if idx.is_empty() {
            return -1;
        }
        // Split on the widest axis of the current subset.
        let mut axis = 0usize;
        let mut widest = -1.0f64;
        for d in 0..self.dim {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &i in idx.iter() {
                let v = self.coord(i, d);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi - lo > widest {
                widest = hi - lo;
                axis = d;
            }
        }
        let mid = idx.len() / 2;
        // Total order (coordinate, index) keeps the build deterministic for
        // duplicated coordinates.
        idx.select_nth_unstable_by(mid, |&a, &b| {
            self.coord(a, axis)
                .total_cmp(&self.coord(b, axis))
                .then(a.cmp(&b))
        });
        let point = idx[mid];
        let split = self.coord(point, axis);
        let node_slot = self.nodes.len();
        self.nodes.push(Node {
            axis: axis as u8,
            split,
            point,
            left: -1,
            right: -1,
        });
        let (lo, rest) = idx.split_at_mut(mid);
        let hi = &mut rest[1..];
        let left = self.build(lo);
        let right = self.build(hi);
        self.nodes[node_slot].left = left;
        self.nodes[node_slot].right = right;
        node_slot as i32
    }

    /// The `k` nearest points to `q`, ordered by `(dist2, index)` ascending.
    pub fn knn(&self, q: &[f64], k: usize) -> Vec<(f64, u32)> {
        let mut best = Vec::with_capacity(k);
        self.knn_into(q, k, &mut best);
        best
    }

    /// Allocation-free variant for hot loops: `best` is cleared and refilled.
    pub fn knn_into(&self, q: &[f64], k: usize, best: &mut Vec<(f64, u32)>) {
        assert_eq!(q.len(), self.dim, "query dimension mismatch");
        assert!(
            k >= 1 && k <= self.len(),
            "k = {k} outside 1..={}",
            self.len()
        );
        best.clear();
        best.reserve(k);
        self.search(self.root, q, k, best);
    }

    /// Nearest single point: `(dist2, index)`.
    pub fn nearest(&self, q: &[f64]) -> (f64, u32) {
        self.knn(q, 1)[0]
    }

    fn search(&self, node: i32, q: &[f64], k: usize, best: &mut Vec<(f64, u32)>) {
        if node < 0 {
            return;
        }
        let n = &self.nodes[node as usize];
        let base = n.point as usize * self.dim;
        let d2 = dist2(self.dim, q, &self.pts[base..base + self.dim]);
        Self::consider(best, k, d2, n.point);

        let delta = q[n.axis as usize] - n.split;
        let (near, far) = if delta <= 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.search(near, q, k, best);
        // Descend the far side unless it provably cannot improve the result;
        // equality is not pruned because an equal-distance, lower-index point
        // may live there.
        if best.len() < k || delta * delta <= best[best.len() - 1].0 {
            self.search(far, q, k, best);
        }
    }

    #[inline]
    fn consider(best: &mut Vec<(f64, u32)>, k: usize, d2: f64, idx: u32) {
        let full = best.len() == k;
        if full {
            let worst = best[k - 1];
            if (d2, idx) >= worst {
                return;
            }
            best.pop();
        }
        let pos = best.partition_point(|&(bd, bi)| (bd, bi) < (d2, idx));
        best.insert(pos, (d2, idx));
    }
}
