//! Depth-map rendering: first-hit ray casting from a pinhole camera.

use rayon::prelude::*;

use crate::camera::{Camera, DepthMap};
use crate::mesh::bvh::Bvh;
use crate::mesh::TriangleMesh;
use crate::{Error, Result};

/// Hits closer than this along the ray are treated as self-intersections at
/// the camera center and ignored.
const T_MIN: f64 = 1e-12;

/// Renders the depth of the first surface along the ray through every pixel
/// center. Depth is the camera-frame z of the hit point (not the ray
/// parameter); pixels whose ray misses the mesh hold `0`.
pub fn render_depth(mesh: &TriangleMesh, camera: &Camera) -> Result<DepthMap> {
    if mesh.is_empty() {
        return Err(Error::InvalidInput(
            "cannot render depth for an empty mesh".into(),
        ));
    }
    let bvh = Bvh::build(mesh);
    let width = camera.width;
    let depths: Vec<f64> = (0..width * camera.height)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx % width, idx / width);
            let (origin, dir) = camera.pixel_ray(i, j);
            match bvh.first_hit(&origin, &dir, T_MIN) {
                Some(hit) => {
                    let z = camera.z_cam(&(origin + dir * hit.hit.t));
                    if z > 0.0 {
                        z
                    } else {
                        0.0
                    }
                }
                None => 0.0,
            }
        })
        .collect();
    DepthMap::new(camera.clone(), depths)
}
