//! Visibility carving: keep only surface that can be seen from outside.
//!
//! Meshes assembled from fused or generated geometry often contain interior
//! shells that no exterior viewpoint can observe. Carving subdivides every
//! triangle until its longest edge is at most `4 * epsilon` (midpoint
//! bisection, which avoids skinny triangles), then shoots rays from a
//! bounding sphere toward stratified random points inside it and keeps the
//! triangles that receive at least one *first* hit. Interior geometry is
//! occluded by construction and never survives.

use std::collections::HashMap;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::bvh::Bvh;
use super::TriangleMesh;
use crate::sampling::fibonacci_directions;
use crate::{Error, Result};

/// Splits every triangle until no edge exceeds `max_edge`. Midpoints are
/// cached per undirected edge so neighbors subdividing the same edge share
/// the new vertex.
fn subdivide_to_edge_length(mesh: &TriangleMesh, max_edge: f64) -> TriangleMesh {
    let mut vertices = mesh.vertices().to_vec();
    let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
    let mut out: Vec<[u32; 3]> = Vec::with_capacity(mesh.triangle_count());
    let mut stack: Vec<[u32; 3]> = mesh.triangles().to_vec();
    // Process as a stack (LIFO): order of the output triangles is
    // deterministic because the input order and split rule are.
    while let Some(tri) = stack.pop() {
        let p = [
            vertices[tri[0] as usize],
            vertices[tri[1] as usize],
            vertices[tri[2] as usize],
        ];
        let lengths = [
            (p[1] - p[0]).norm(),
            (p[2] - p[1]).norm(),
            (p[0] - p[2]).norm(),
        ];
        let (longest, &len) = lengths
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        if len <= max_edge {
            out.push(tri);
            continue;
        }
        let a = tri[longest];
        let b = tri[(longest + 1) % 3];
        let c = tri[(longest + 2) % 3];
        let key = (a.min(b), a.max(b));
        let m = *midpoints.entry(key).or_insert_with(|| {
            vertices.push((vertices[a as usize] + vertices[b as usize]) / 2.0);
            (vertices.len() - 1) as u32
        });
        stack.push([a, m, c]);
        stack.push([m, b, c]);
    }
    TriangleMesh::new(vertices, out).expect("subdivision preserves validity")
}

/// Removes surface that cannot be reached by any exterior ray.
///
/// `epsilon` sets the subdivision granularity (longest edge at most
/// `4 * epsilon`); `n_rays` rays are shot from the mesh bounding sphere
/// toward stratified random interior target points, and every triangle hit
/// first by at least one ray is kept. Returns the carved mesh with compacted
/// vertices, or an error when nothing is visible.
pub fn carve_visible(
    mesh: &TriangleMesh,
    epsilon: f64,
    n_rays: usize,
    seed: u64,
) -> Result<TriangleMesh> {
    if mesh.is_empty() {
        return Err(Error::InvalidInput("cannot carve an empty mesh".into()));
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidInput(format!(
            "epsilon must be finite and positive, got {epsilon}"
        )));
    }
    if n_rays == 0 {
        return Err(Error::InvalidInput("need at least one carving ray".into()));
    }

    let fine = subdivide_to_edge_length(mesh, 4.0 * epsilon);
    let bvh = Bvh::build(&fine);

    let (lo, hi) = fine.bounding_box().expect("non-empty mesh has a bbox");
    let center = (lo + hi) / 2.0;
    let radius = fine
        .vertices()
        .iter()
        .map(|v| (v - center).norm())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE)
        * 1.001;

    // Ray origins: a quasi-uniform set on the bounding sphere. Targets:
    // random directions with radii stratified over the ray index so the
    // interior is probed at every depth.
    let origins = fibonacci_directions(n_rays);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rays: Vec<(Vector3<f64>, Vector3<f64>)> = origins
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let origin = center + o * radius;
            let u = (i as f64 + rng.random::<f64>()) / n_rays as f64;
            let target_radius = radius * u.cbrt();
            let z = rng.random::<f64>() * 2.0 - 1.0;
            let phi = rng.random::<f64>() * std::f64::consts::TAU;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let target = center + Vector3::new(r * phi.cos(), r * phi.sin(), z) * target_radius;
            let dir = target - origin;
            let norm = dir.norm();
            (origin, if norm > 0.0 { dir / norm } else { -o })
        })
        .collect();

    let hit_flags: Vec<bool> = {
        let mut flags = vec![false; fine.triangle_count()];
        let hits: Vec<usize> = rays
            .par_iter()
            .filter_map(|(origin, dir)| bvh.first_hit(origin, dir, 1e-12).map(|h| h.tri))
            .collect();
        for t in hits {
            flags[t] = true;
        }
        flags
    };

    let mut remap: Vec<u32> = vec![u32::MAX; fine.vertex_count()];
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (t, tri) in fine.triangles().iter().enumerate() {
        if !hit_flags[t] {
            continue;
        }
        let mut mapped = [0u32; 3];
        for (slot, &v) in mapped.iter_mut().zip(tri) {
            if remap[v as usize] == u32::MAX {
                remap[v as usize] = vertices.len() as u32;
                vertices.push(fine.vertices()[v as usize]);
            }
            *slot = remap[v as usize];
        }
        triangles.push(mapped);
    }
    if triangles.is_empty() {
        return Err(Error::Degenerate(
            "no triangle is visible from the bounding sphere; carving would erase the mesh".into(),
        ));
    }
    TriangleMesh::new(vertices, triangles)
}
