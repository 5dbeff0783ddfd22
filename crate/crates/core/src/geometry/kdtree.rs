//! Static kd-tree over a flat coordinate buffer.
//!
//! All distance comparisons are done on squared Euclidean distances, and
//! candidates are ordered by `(squared distance, index)` so that ties are
//! resolved toward the lower index.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const LEAF_SIZE: usize = 8;

#[derive(Clone, Debug)]
enum KdNode {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug)]
pub(crate) struct KdTree {
    dim: usize,
    // coordinates permuted into tree order
    pts: Vec<f64>,
    ids: Vec<usize>,
    nodes: Vec<KdNode>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Neighbor {
    pub dist2: f64,
    pub index: usize,
}

impl Eq for Neighbor {}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2.total_cmp(&other.dist2).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[inline]
pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl KdTree {
    pub fn new(dim: usize, coords: &[f64]) -> Self {
        let n = coords.len().checked_div(dim).unwrap_or(0);
        let mut ids: Vec<usize> = (0..n).collect();
        let mut nodes = Vec::new();
        if n > 0 {
            build(dim, coords, &mut ids, 0, n, &mut nodes);
        }
        let mut pts = Vec::with_capacity(coords.len());
        for &i in &ids {
            pts.extend_from_slice(&coords[i * dim..(i + 1) * dim]);
        }
        KdTree { dim, pts, ids, nodes }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    /// The `k` nearest points, ascending by `(dist2, index)`.
    pub fn knn(&self, q: &[f64], k: usize) -> Vec<Neighbor> {
        let k = k.min(self.len());
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(0, q, k, &mut heap);
        heap.into_sorted_vec()
    }

    fn knn_rec(&self, node: usize, q: &[f64], k: usize, heap: &mut BinaryHeap<Neighbor>) {
        match self.nodes[node] {
            KdNode::Leaf { start, end } => {
                for p in start..end {
                    let cand = Neighbor {
                        dist2: dist2(q, &self.pts[p * self.dim..(p + 1) * self.dim]),
                        index: self.ids[p],
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            KdNode::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.knn_rec(near, q, k, heap);
                // equal plane distance may still hide a lower-index tie
                if heap.len() < k || diff * diff <= heap.peek().unwrap().dist2 {
                    self.knn_rec(far, q, k, heap);
                }
            }
        }
    }

    /// All points with squared distance `<= r2`, ascending by `(dist2, index)`.
    pub fn within(&self, q: &[f64], r2: f64) -> Vec<Neighbor> {
        let mut out = Vec::new();
        if !self.nodes.is_empty() {
            self.within_rec(0, q, r2, &mut out);
        }
        out.sort_unstable();
        out
    }

    fn within_rec(&self, node: usize, q: &[f64], r2: f64, out: &mut Vec<Neighbor>) {
        match self.nodes[node] {
            KdNode::Leaf { start, end } => {
                for p in start..end {
                    let d2 = dist2(q, &self.pts[p * self.dim..(p + 1) * self.dim]);
                    if d2 <= r2 {
                        out.push(Neighbor {
                            dist2: d2,
                            index: self.ids[p],
                        });
                    }
                }
            }
            KdNode::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.within_rec(near, q, r2, out);
                if diff * diff <= r2 {
                    self.within_rec(far, q, r2, out);
                }
            }
        }
    }
}

fn build(dim: usize, coords: &[f64], ids: &mut [usize], start: usize, end: usize, nodes: &mut Vec<KdNode>) -> usize {
    let slot = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(KdNode::Leaf { start, end });
        return slot;
    }
    // split along the axis of largest spread
    let mut axis = 0;
    let mut best = f64::NEG_INFINITY;
    for a in 0..dim {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &i in &ids[start..end] {
            let c = coords[i * dim + a];
            lo = lo.min(c);
            hi = hi.max(c);
        }
        if hi - lo > best {
            best = hi - lo;
            axis = a;
        }
    }
    let mid = start + (end - start) / 2;
    ids[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        coords[a * dim + axis].total_cmp(&coords[b * dim + axis])
    });
    let value = coords[ids[mid] * dim + axis];
    nodes.push(KdNode::Leaf { start, end });
    let left = build(dim, coords, ids, start, mid, nodes);
    let right = build(dim, coords, ids, mid, end, nodes);
    nodes[slot] = KdNode::Split {
        axis,
        value,
        left,
        right,
    };
    slot
}
