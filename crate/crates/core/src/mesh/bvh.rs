//! Bounding-volume hierarchy over mesh triangles.
//!
//! Median-split build over triangle centroids; supports exact closest-point
//! queries (branch-and-bound on box distance) and ray queries (first hit or
//! all hits). Acceleration never changes which triangle wins a query, so
//! results match exhaustive search bit for bit.

use nalgebra::Vector3;

use super::geom::{self, RayHit};
use super::TriangleMesh;

const LEAF_SIZE: usize = 8;
const NONE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug)]
struct Aabb {
    min: Vector3<f64>,
    max: Vector3<f64>,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            min: Vector3::repeat(f64::INFINITY),
            max: Vector3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vector3<f64>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    /// Squared distance from `p` to the box (zero inside).
    fn dist_sq(&self, p: &Vector3<f64>) -> f64 {
        let mut d2 = 0.0;
        for a in 0..3 {
            let c = p[a].clamp(self.min[a], self.max[a]);
            d2 += (p[a] - c) * (p[a] - c);
        }
        d2
    }

    /// Entry parameter of the ray into the box, or `None` when it misses.
    /// The returned value may be negative when the origin is inside.
    fn ray_enter(&self, origin: &Vector3<f64>, inv_dir: &Vector3<f64>) -> Option<f64> {
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        for a in 0..3 {
            let t1 = (self.min[a] - origin[a]) * inv_dir[a];
            let t2 = (self.max[a] - origin[a]) * inv_dir[a];
            // f64::min/max drop the NaN produced by 0 * inf at slab-aligned
            // origins, which keeps the test conservative.
            t_near = t_near.max(t1.min(t2));
            t_far = t_far.min(t1.max(t2));
        }
        if t_near <= t_far && t_far >= 0.0 {
            Some(t_near)
        } else {
            None
        }
    }
}

struct Node {
    aabb: Aabb,
    left: u32,
    right: u32,
    start: u32,
    count: u32,
}

impl Node {
    fn is_leaf(&self) -> bool {
        self.count > 0
    }
}

/// A triangle hit by a ray query, with the original mesh triangle index.
#[derive(Clone, Copy, Debug)]
pub struct TriHit {
    pub tri: usize,
    pub hit: RayHit,
}

pub struct Bvh {
    tris: Vec<[Vector3<f64>; 3]>,
    /// Maps internal triangle order back to mesh triangle indices.
    ids: Vec<u32>,
    nodes: Vec<Node>,
    root: u32,
}

impl Bvh {
    pub fn build(mesh: &TriangleMesh) -> Self {
        let n = mesh.triangle_count();
        let tris: Vec<[Vector3<f64>; 3]> = (0..n).map(|t| mesh.triangle_vertices(t)).collect();
        let mut ids: Vec<u32> = (0..n as u32).collect();
        let mut bvh = Bvh {
            tris,
            ids: Vec::new(),
            nodes: Vec::new(),
            root: NONE,
        };
        let centroids: Vec<Vector3<f64>> = bvh
            .tris
            .iter()
            .map(|t| (t[0] + t[1] + t[2]) / 3.0)
            .collect();
        bvh.root = bvh.build_rec(&mut ids, 0, &centroids);
        // Reorder triangle storage to match the leaf layout.
        let tris = ids
            .iter()
            .map(|&i| bvh.tris[i as usize])
            .collect::<Vec<_>>();
        bvh.tris = tris;
        bvh.ids = ids;
        bvh
    }

    fn build_rec(&mut self, ids: &mut [u32], offset: usize, centroids: &[Vector3<f64>]) -> u32 {
        if ids.is_empty() {
            return NONE;
        }
        let mut aabb = Aabb::empty();
        for &id in ids.iter() {
            for v in &self.tris[id as usize] {
                aabb.grow(v);
            }
        }
        let node_id = self.nodes.len() as u32;
        self.nodes.push(Node {
            aabb,
            left: NONE,
            right: NONE,
            start: offset as u32,
            count: 0,
        });
        if ids.len() <= LEAF_SIZE {
            self.nodes[node_id as usize].count = ids.len() as u32;
            return node_id;
        }
        let mut cb = Aabb::empty();
        for &id in ids.iter() {
            cb.grow(&centroids[id as usize]);
        }
        let extent = cb.max - cb.min;
        let axis = if extent.x >= extent.y && extent.x >= extent.z {
            0
        } else if extent.y >= extent.z {
            1
        } else {
            2
        };
        let mid = ids.len() / 2;
        ids.select_nth_unstable_by(mid, |&a, &b| {
            centroids[a as usize][axis].total_cmp(&centroids[b as usize][axis])
        });
        let (lo, hi) = ids.split_at_mut(mid);
        let left = self.build_rec(lo, offset, centroids);
        let right = self.build_rec(hi, offset + mid, centroids);
        self.nodes[node_id as usize].left = left;
        self.nodes[node_id as usize].right = right;
        node_id
    }

    /// Squared distance from `p` to the closest point on the mesh surface.
    ///
    /// Panics if the mesh had no triangles (callers validate).
    pub fn closest_dist_sq(&self, p: &Vector3<f64>) -> f64 {
        assert!(!self.tris.is_empty(), "closest_dist_sq() on an empty BVH");
        let mut best = f64::INFINITY;
        self.closest_rec(self.root, p, &mut best);
        best
    }

    fn closest_rec(&self, node_id: u32, p: &Vector3<f64>, best: &mut f64) {
        let node = &self.nodes[node_id as usize];
        if node.aabb.dist_sq(p) >= *best {
            return;
        }
        if node.is_leaf() {
            let start = node.start as usize;
            for i in start..start + node.count as usize {
                let [a, b, c] = &self.tris[i];
                let q = geom::closest_point_on_triangle(p, a, b, c);
                let d2 = (p - q).norm_squared();
                if d2 < *best {
                    *best = d2;
                }
            }
            return;
        }
        // Visit the nearer child first to tighten the bound early.
        let l = node.left;
        let r = node.right;
        let dl = self.nodes[l as usize].aabb.dist_sq(p);
        let dr = self.nodes[r as usize].aabb.dist_sq(p);
        let (first, second) = if dl <= dr { (l, r) } else { (r, l) };
        self.closest_rec(first, p, best);
        self.closest_rec(second, p, best);
    }

    /// All ray/triangle intersections with `t > t_min`, unordered.
    pub fn all_hits(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, t_min: f64) -> Vec<TriHit> {
        let mut hits = Vec::new();
        if self.tris.is_empty() {
            return hits;
        }
        let inv = Vector3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut stack = vec![self.root];
        while let Some(node_id) = stack.pop() {
            let node = &self.nodes[node_id as usize];
            if node.aabb.ray_enter(origin, &inv).is_none() {
                continue;
            }
            if node.is_leaf() {
                let start = node.start as usize;
                for i in start..start + node.count as usize {
                    let [a, b, c] = &self.tris[i];
                    if let Some(hit) = geom::ray_triangle(origin, dir, a, b, c) {
                        if hit.t > t_min {
                            hits.push(TriHit {
                                tri: self.ids[i] as usize,
                                hit,
                            });
                        }
                    }
                }
            } else {
                stack.push(node.left);
                stack.push(node.right);
            }
        }
        hits
    }

    /// Nearest intersection with `t > t_min`, if any.
    pub fn first_hit(
        &self,
        origin: &Vector3<f64>,
        dir: &Vector3<f64>,
        t_min: f64,
    ) -> Option<TriHit> {
        if self.tris.is_empty() {
            return None;
        }
        let inv = Vector3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<TriHit> = None;
        let mut stack = vec![self.root];
        while let Some(node_id) = stack.pop() {
            let node = &self.nodes[node_id as usize];
            match node.aabb.ray_enter(origin, &inv) {
                None => continue,
                Some(enter) => {
                    if let Some(b) = &best {
                        if enter > b.hit.t {
                            continue;
                        }
                    }
                }
            }
            if node.is_leaf() {
                let start = node.start as usize;
                for i in start..start + node.count as usize {
                    let [a, b, c] = &self.tris[i];
                    if let Some(hit) = geom::ray_triangle(origin, dir, a, b, c) {
                        if hit.t > t_min && best.as_ref().is_none_or(|b| hit.t < b.hit.t) {
                            best = Some(TriHit {
                                tri: self.ids[i] as usize,
                                hit,
                            });
                        }
                    }
                }
            } else {
                stack.push(node.left);
                stack.push(node.right);
            }
        }
        best
    }
}
