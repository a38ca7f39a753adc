use crate::points::{squared_distance, PointMatrix};

use super::heap::{Candidate, TopK};

const LEAF_SIZE: usize = 16;

// Pruning bounds are summed in a different order than `squared_distance`;
// shrinking them by this factor keeps pruning conservative.
const BOUND_SLACK: f64 = 1.0 - 1e-9;

#[derive(Clone, Debug)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Balanced kd-tree with median splits on the widest coordinate.
///
/// Every point in a left subtree has `x[dim] <= value` and every point in a
/// right subtree has `x[dim] >= value`.
#[derive(Clone, Debug)]
pub struct KdTree {
    nodes: Vec<Node>,
    /// Local point indices in leaf order.
    order: Vec<usize>,
    dim: usize,
}

impl KdTree {
    pub fn build(points: &PointMatrix) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        let n = order.len();
        build_node(points, &mut order, 0, n, &mut nodes);
        KdTree {
            nodes,
            order,
            dim: points.dim(),
        }
    }

    pub(crate) fn search(&self, points: &PointMatrix, query: &[f64], k: usize) -> Vec<Candidate> {
        let mut top = TopK::new(k);
        let mut offsets = vec![0.0; self.dim];
        self.visit(0, points, query, &mut top, &mut offsets);
        top.into_sorted()
    }

    fn visit(&self, node: usize, points: &PointMatrix, query: &[f64], top: &mut TopK, offsets: &mut [f64]) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = squared_distance(points.row(i), query);
                    if d <= top.worst() {
                        top.offer(Candidate { dist_sq: d, index: i });
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = query[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.visit(near, points, query, top, offsets);
                let old = offsets[dim];
                let gap = diff.abs();
                // The far box is at least `gap` away along `dim`.
                if gap > old {
                    offsets[dim] = gap;
                }
                let bound: f64 = offsets.iter().map(|o| o * o).sum();
                if bound * BOUND_SLACK <= top.worst() {
                    self.visit(far, points, query, top, offsets);
                }
                offsets[dim] = old;
            }
        }
    }
}

fn build_node(points: &PointMatrix, order: &mut [usize], start: usize, end: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    let slice = &mut order[start..end];
    if slice.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let dim = widest_dim(points, slice);
    if dim.is_none() {
        // All points identical.
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let dim = dim.unwrap();
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| {
        points.row(a)[dim]
            .total_cmp(&points.row(b)[dim])
            .then(a.cmp(&b))
    });
    let value = points.row(slice[mid])[dim];
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let left = build_node(points, order, start, start + mid, nodes);
    let right = build_node(points, order, start + mid, end, nodes);
    nodes[id] = Node::Split {
        dim,
        value,
        left,
        right,
    };
    id
}

fn widest_dim(points: &PointMatrix, idx: &[usize]) -> Option<usize> {
    let dim = points.dim();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for &i in idx {
        for (j, &x) in points.row(i).iter().enumerate() {
            lo[j] = lo[j].min(x);
            hi[j] = hi[j].max(x);
        }
    }
    let (best, spread) = (0..dim)
        .map(|j| (j, hi[j] - lo[j]))
        .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    (spread > 0.0).then_some(best)
}
