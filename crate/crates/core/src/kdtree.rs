//! Minimal static kd-tree for exact nearest-neighbor queries on 3-D points.
//!
//! Built once over an immutable point set; queries prune subtrees by the
//! splitting-plane distance, so results are exact (identical to brute force
//! up to ties in the distance value).

use nalgebra::Vector3;

const NONE: u32 = u32::MAX;

struct Node {
    point: u32,
    axis: u8,
    left: u32,
    right: u32,
}

pub struct KdTree {
    points: Vec<Vector3<f64>>,
    nodes: Vec<Node>,
    root: u32,
}

impl KdTree {
    pub fn build(points: &[Vector3<f64>]) -> Self {
        let mut idx: Vec<u32> = (0..points.len() as u32).collect();
        let mut tree = KdTree {
            points: points.to_vec(),
            nodes: Vec::with_capacity(points.len()),
            root: NONE,
        };
        tree.root = tree.build_rec(&mut idx, 0);
        tree
    }

    fn build_rec(&mut self, idx: &mut [u32], depth: usize) -> u32 {
        if idx.is_empty() {
            return NONE;
        }
        let axis = (depth % 3) as u8;
        let mid = idx.len() / 2;
        idx.select_nth_unstable_by(mid, |&a, &b| {
            self.points[a as usize][axis as usize]
                .total_cmp(&self.points[b as usize][axis as usize])
        });
        let point = idx[mid];
        let node_id = self.nodes.len() as u32;
        self.nodes.push(Node {
            point,
            axis,
            left: NONE,
            right: NONE,
        });
        let (lo, rest) = idx.split_at_mut(mid);
        let hi = &mut rest[1..];
        let left = self.build_rec(lo, depth + 1);
        let right = self.build_rec(hi, depth + 1);
        self.nodes[node_id as usize].left = left;
        self.nodes[node_id as usize].right = right;
        node_id
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of and squared distance to the nearest stored point.
    ///
    /// Panics if the tree is empty.
    pub fn nearest(&self, query: &Vector3<f64>) -> (usize, f64) {
        assert!(!self.is_empty(), "nearest() on an empty kd-tree");
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_rec(self.root, query, &mut best);
        best
    }

    fn nearest_rec(&self, node_id: u32, query: &Vector3<f64>, best: &mut (usize, f64)) {
        if node_id == NONE {
            return;
        }
        let node = &self.nodes[node_id as usize];
        let p = &self.points[node.point as usize];
        let d2 = (p - query).norm_squared();
        if d2 < best.1 {
            *best = (node.point as usize, d2);
        }
        let delta = query[node.axis as usize] - p[node.axis as usize];
        let (near, far) = if delta < 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        self.nearest_rec(near, query, best);
        if delta * delta < best.1 {
            self.nearest_rec(far, query, best);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nearest_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let points: Vec<Vector3<f64>> = (0..300)
            .map(|_| Vector3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let tree = KdTree::build(&points);
        for _ in 0..200 {
            let q = Vector3::new(
                rng.random::<f64>() * 2.0 - 0.5,
                rng.random::<f64>() * 2.0 - 0.5,
                rng.random::<f64>() * 2.0 - 0.5,
            );
            let (_, d2) = tree.nearest(&q);
            let brute = points
                .iter()
                .map(|p| (p - q).norm_squared())
                .fold(f64::INFINITY, f64::min);
            assert_eq!(d2, brute);
        }
    }

    #[test]
    fn single_point_tree() {
        let tree = KdTree::build(&[Vector3::new(1.0, 2.0, 3.0)]);
        let (i, d2) = tree.nearest(&Vector3::new(1.0, 2.0, 4.0));
        assert_eq!(i, 0);
        assert_eq!(d2, 1.0);
    }
}
