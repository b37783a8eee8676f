//! Triangle meshes and the distance/visibility machinery built on them.
//!
//! The submodules provide:
//! * OBJ / binary-PLY loading and saving ([`load_obj`], [`save_ply`], ...),
//! * BVH-accelerated unsigned distance and ray-parity sign queries
//!   ([`unsigned_distance`], [`sign_by_parity`], [`mesh_sdf_grid`]),
//! * near-surface training-sample generation ([`sample_near_surface`]),
//! * visibility carving that removes unreachable interior geometry
//!   ([`carve_visible`]), and
//! * a few exactly-known test shapes ([`shapes`]).

mod carve;
pub(crate) mod bvh;
pub(crate) mod geom;
mod io;
mod sdf;
pub mod shapes;

pub use carve::carve_visible;
pub use io::{load_obj, load_ply, save_obj, save_ply, LoadedMesh};
pub use sdf::{mesh_sdf_grid, sample_near_surface, sign_by_parity, unsigned_distance, SignResult};

use nalgebra::Vector3;

use crate::{Error, Result};

/// Indexed triangle mesh.
///
/// Construction validates that every index refers to an existing vertex and
/// that all coordinates are finite. Zero-area triangles are allowed here —
/// file loaders drop them and report how many (see [`LoadedMesh`]) — and all
/// geometric queries treat them as measure-zero surface.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vector3<f64>>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        if let Some(bad) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "vertex {bad} has non-finite coordinates"
            )));
        }
        let n = vertices.len() as u32;
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::InvalidInput(format!(
                    "triangle {t} references vertex {:?} but only {n} vertices exist",
                    tri
                )));
            }
        }
        Ok(Self {
            vertices,
            triangles,
        })
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// The three corner positions of triangle `t`.
    #[inline]
    pub fn triangle_vertices(&self, t: usize) -> [Vector3<f64>; 3] {
        let [a, b, c] = self.triangles[t];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_vertices(t);
        geom::triangle_area(&a, &b, &c)
    }

    /// Unit normal from the counter-clockwise winding; zero for degenerate
    /// triangles.
    pub fn triangle_normal(&self, t: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangle_vertices(t);
        geom::triangle_normal(&a, &b, &c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangle_count()).map(|t| self.triangle_area(t)).sum()
    }

    /// Axis-aligned bounding box over all vertices; `None` for empty meshes.
    pub fn bounding_box(&self) -> Option<(Vector3<f64>, Vector3<f64>)> {
        if self.vertices.is_empty() {
            return None;
        }
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        Some((lo, hi))
    }

    /// Removes zero-area triangles in place; returns how many were dropped.
    /// Vertices are left untouched.
    pub fn drop_degenerate_triangles(&mut self) -> usize {
        let before = self.triangles.len();
        let vertices = &self.vertices;
        self.triangles.retain(|tri| {
            let a = vertices[tri[0] as usize];
            let b = vertices[tri[1] as usize];
            let c = vertices[tri[2] as usize];
            geom::triangle_area(&a, &b, &c) > 0.0
        });
        before - self.triangles.len()
    }
}

/// Points sampled near (or on) a surface together with their reference
/// signed distances.
///
/// `signed` records whether the `gt_sdf` values carry a meaningful sign; it
/// is cleared for open scan-style geometry where inside/outside is undefined
/// and only magnitudes should be compared.
#[derive(Clone, Debug)]
pub struct SurfaceSamples {
    pub points: Vec<Vector3<f64>>,
    pub gt_sdf: Vec<f64>,
    pub signed: bool,
}

impl SurfaceSamples {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
