//! Pinhole cameras, depth maps, and their on-disk formats.
//!
//! The camera frame is +x right, +y down, +z forward (looking direction).
//! Pixel `(i, j)` covers the unit square `[i, i+1) x [j, j+1)` on the image
//! plane; rays are cast through pixel centers `(i + 0.5, j + 0.5)` and
//! points project to the pixel containing `(u, v) = (fx*x/z + cx, fy*y/z + cy)`.
//!
//! Depth rasters are stored as flat little-endian `f32` scanlines (row-major,
//! `j * width + i`) next to a JSON sidecar carrying the intrinsics and the
//! row-major 4x4 world-to-camera transform. A depth of `0` means "no hit".

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::sampling::fibonacci_directions;
use crate::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-6;

/// A validated pinhole camera: intrinsics in pixel units plus a rigid
/// world-to-camera transform.
///
/// Construction goes through [`Camera::new`] (or the [`Camera::look_at`] /
/// [`orbit_cameras`] helpers), which enforce positive focal lengths, a
/// principal point inside the image, and an orthonormal rotation block.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    /// Image width in pixels.
    pub width: usize,
    /// Image height in pixels.
    pub height: usize,
    /// Focal length in pixels along x.
    pub fx: f64,
    /// Focal length in pixels along y.
    pub fy: f64,
    /// Principal point x, in `[0, width)`.
    pub cx: f64,
    /// Principal point y, in `[0, height)`.
    pub cy: f64,
    world_to_cam: Matrix4<f64>,
}

impl Camera {
    /// Builds a camera and checks every invariant: positive finite focal
    /// lengths, principal point inside the image, and a rigid
    /// `world_to_cam` (orthonormal rotation block with determinant +1,
    /// bottom row `0 0 0 1`).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        width: usize,
        height: usize,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        world_to_cam: Matrix4<f64>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        for (name, v) in [("fx", fx), ("fy", fy)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        if !(cx.is_finite() && (0.0..width as f64).contains(&cx)) {
            return Err(Error::InvalidInput(format!(
                "cx must lie in [0, {width}), got {cx}"
            )));
        }
        if !(cy.is_finite() && (0.0..height as f64).contains(&cy)) {
            return Err(Error::InvalidInput(format!(
                "cy must lie in [0, {height}), got {cy}"
            )));
        }
        if world_to_cam.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "world_to_cam contains non-finite entries".into(),
            ));
        }
        let bottom = world_to_cam.row(3);
        if (bottom[0], bottom[1], bottom[2]) != (0.0, 0.0, 0.0) || (bottom[3] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(
                "world_to_cam bottom row must be 0 0 0 1".into(),
            ));
        }
        let r = world_to_cam.fixed_view::<3, 3>(0, 0).into_owned();
        let gram = r.transpose() * r;
        let drift = (gram - Matrix3::identity()).amax();
        if drift > ORTHONORMAL_TOL {
            return Err(Error::InvalidInput(format!(
                "world_to_cam rotation block is not orthonormal (max deviation {drift:.2e})"
            )));
        }
        if r.determinant() < 0.0 {
            return Err(Error::InvalidInput(
                "world_to_cam rotation block is a reflection, not a rotation".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            fx,
            fy,
            cx,
            cy,
            world_to_cam,
        })
    }

    /// Camera at `eye` looking toward `target`, with image up chosen so the
    /// world +z axis points up in the image (falling back to world +y when
    /// the view direction is vertical). Intrinsics default to
    /// `fx = fy = width`, principal point at the image center.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let forward = target - eye;
        let norm = forward.norm();
        if !(norm.is_finite() && norm > 1e-12) {
            return Err(Error::InvalidInput(
                "look_at eye and target coincide".into(),
            ));
        }
        let z_cam = forward / norm;
        let mut up = Vector3::new(0.0, 0.0, 1.0);
        if z_cam.cross(&up).norm() < 1e-9 {
            up = Vector3::new(0.0, 1.0, 0.0);
        }
        // +x right, +y down: (x, y, z) stays right-handed.
        let x_cam = z_cam.cross(&up).normalize();
        let y_cam = z_cam.cross(&x_cam);
        let mut m = Matrix4::identity();
        for (row, axis) in [x_cam, y_cam, z_cam].iter().enumerate() {
            m[(row, 0)] = axis.x;
            m[(row, 1)] = axis.y;
            m[(row, 2)] = axis.z;
            m[(row, 3)] = -axis.dot(&eye);
        }
        Self::new(
            width,
            height,
            width as f64,
            width as f64,
            width as f64 / 2.0,
            height as f64 / 2.0,
            m,
        )
    }

    /// Read-only access to the rigid world-to-camera transform.
    pub fn world_to_cam(&self) -> &Matrix4<f64> {
        &self.world_to_cam
    }

    /// Camera center in world coordinates.
    pub fn position(&self) -> Vector3<f64> {
        let r = self.world_to_cam.fixed_view::<3, 3>(0, 0);
        let t = self.world_to_cam.fixed_view::<3, 1>(0, 3);
        -(r.transpose() * t)
    }

    /// Maps a world point into the camera frame.
    pub fn to_camera(&self, point: &Vector3<f64>) -> Vector3<f64> {
        let r = self.world_to_cam.fixed_view::<3, 3>(0, 0);
        let t = self.world_to_cam.fixed_view::<3, 1>(0, 3);
        r * point + t
    }

    /// Depth (camera-frame z) of a world point.
    pub fn z_cam(&self, point: &Vector3<f64>) -> f64 {
        self.to_camera(point).z
    }

    /// Projects a world point to the pixel containing it, returning
    /// `(i, j, z_cam)`. `None` when the point is behind the camera
    /// (`z <= 0`) or falls outside the image.
    pub fn project(&self, point: &Vector3<f64>) -> Option<(usize, usize, f64)> {
        let p = self.to_camera(point);
        if p.z <= 0.0 {
            return None;
        }
        let u = (self.fx * p.x / p.z + self.cx).floor();
        let v = (self.fy * p.y / p.z + self.cy).floor();
        if u < 0.0 || v < 0.0 || u >= self.width as f64 || v >= self.height as f64 {
            return None;
        }
        Some((u as usize, v as usize, p.z))
    }

    /// World-space ray through the center of pixel `(i, j)`: returns the
    /// origin (camera center) and a unit direction.
    pub fn pixel_ray(&self, i: usize, j: usize) -> (Vector3<f64>, Vector3<f64>) {
        debug_assert!(i < self.width && j < self.height);
        let dir_cam = Vector3::new(
            (i as f64 + 0.5 - self.cx) / self.fx,
            (j as f64 + 0.5 - self.cy) / self.fy,
            1.0,
        );
        let r = self.world_to_cam.fixed_view::<3, 3>(0, 0);
        let dir_world = (r.transpose() * dir_cam).normalize();
        (self.position(), dir_world)
    }

    /// Conversion factor from a ray parameter `t` (along the unit ray of
    /// pixel `(i, j)`) to camera-frame depth.
    pub fn ray_depth_scale(&self, i: usize, j: usize) -> f64 {
        let dir_cam = Vector3::new(
            (i as f64 + 0.5 - self.cx) / self.fx,
            (j as f64 + 0.5 - self.cy) / self.fy,
            1.0,
        );
        1.0 / dir_cam.norm()
    }
}

/// `n` cameras on a quasi-uniform sphere of the given radius around
/// `center`, all looking at `center`, with [`Camera::look_at`] intrinsics.
pub fn orbit_cameras(
    n: usize,
    radius: f64,
    center: Vector3<f64>,
    width: usize,
    height: usize,
) -> Result<Vec<Camera>> {
    if n == 0 {
        return Err(Error::InvalidInput("need at least one camera".into()));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidInput(format!(
            "orbit radius must be finite and positive, got {radius}"
        )));
    }
    fibonacci_directions(n)
        .iter()
        .map(|dir| Camera::look_at(center + dir * radius, center, width, height))
        .collect()
}

/// A per-pixel depth raster tied to the camera that produced it. Depth is
/// the camera-frame z of the first surface along each pixel ray; `0` marks
/// pixels with no hit.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    /// The producing camera; raster dimensions always match it.
    pub camera: Camera,
    depths: Vec<f64>,
}

impl DepthMap {
    /// Wraps a raster, checking its length and that every depth is finite
    /// and non-negative.
    pub fn new(camera: Camera, depths: Vec<f64>) -> Result<Self> {
        if depths.len() != camera.width * camera.height {
            return Err(Error::InvalidInput(format!(
                "depth raster has {} samples, camera needs {}x{}",
                depths.len(),
                camera.width,
                camera.height
            )));
        }
        if let Some(bad) = depths.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "depths must be finite and non-negative, found {bad}"
            )));
        }
        Ok(Self { camera, depths })
    }

    /// All-zero (nothing observed) raster for the camera.
    pub fn empty(camera: Camera) -> Self {
        let depths = vec![0.0; camera.width * camera.height];
        Self { camera, depths }
    }

    /// Depth at pixel `(i, j)`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.depths[j * self.camera.width + i]
    }

    /// Overwrites the depth at pixel `(i, j)`.
    pub fn set(&mut self, i: usize, j: usize, depth: f64) {
        assert!(
            depth.is_finite() && depth >= 0.0,
            "depth must be finite and non-negative, got {depth}"
        );
        self.depths[j * self.camera.width + i] = depth;
    }

    /// The raw raster in scanline order (`j * width + i`).
    pub fn depths(&self) -> &[f64] {
        &self.depths
    }

    /// Number of pixels with a hit (depth > 0).
    pub fn hit_count(&self) -> usize {
        self.depths.iter().filter(|d| **d > 0.0).count()
    }
}

/// Serialization mirror of [`Camera`]: the JSON sidecar schema, with the
/// world-to-camera transform flattened to 16 row-major floats.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraJson {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub world_to_cam: [f64; 16],
}

impl From<&Camera> for CameraJson {
    fn from(camera: &Camera) -> Self {
        let mut flat = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                flat[r * 4 + c] = camera.world_to_cam[(r, c)];
            }
        }
        Self {
            width: camera.width,
            height: camera.height,
            fx: camera.fx,
            fy: camera.fy,
            cx: camera.cx,
            cy: camera.cy,
            world_to_cam: flat,
        }
    }
}

impl TryFrom<&CameraJson> for Camera {
    type Error = Error;

    fn try_from(json: &CameraJson) -> Result<Camera> {
        let m = Matrix4::from_fn(|r, c| json.world_to_cam[r * 4 + c]);
        Camera::new(json.width, json.height, json.fx, json.fy, json.cx, json.cy, m)
    }
}

/// Reads a camera from its JSON sidecar representation.
pub fn load_camera_json(path: &Path) -> Result<Camera> {
    let file = File::open(path)?;
    let json: CameraJson = serde_json::from_reader(BufReader::new(file)).map_err(|e| {
        Error::Format {
            format: "camera JSON",
            detail: e.to_string(),
        }
    })?;
    Camera::try_from(&json)
}

/// Writes a camera as its JSON sidecar representation.
pub fn save_camera_json(camera: &Camera, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, &CameraJson::from(camera)).map_err(|e| {
        Error::Format {
            format: "camera JSON",
            detail: e.to_string(),
        }
    })?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

/// Writes a depth map as a flat little-endian `f32` raster plus its camera
/// sidecar JSON.
pub fn save_depth(depth: &DepthMap, raster_path: &Path, json_path: &Path) -> Result<()> {
    let file = File::create(raster_path)?;
    let mut writer = BufWriter::new(file);
    for d in &depth.depths {
        writer.write_all(&(*d as f32).to_le_bytes())?;
    }
    writer.flush()?;
    save_camera_json(&depth.camera, json_path)
}

/// Reads a depth map written by [`save_depth`]. The raster must contain
/// exactly `width * height` little-endian `f32` values.
pub fn load_depth(raster_path: &Path, json_path: &Path) -> Result<DepthMap> {
    let camera = load_camera_json(json_path)?;
    let mut bytes = Vec::new();
    File::open(raster_path)?.read_to_end(&mut bytes)?;
    let expected = camera.width * camera.height * 4;
    if bytes.len() != expected {
        return Err(Error::Format {
            format: "depth raster",
            detail: format!(
                "expected {expected} bytes for {}x{} f32 pixels, found {}",
                camera.width,
                camera.height,
                bytes.len()
            ),
        });
    }
    let depths = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    DepthMap::new(camera, depths)
}
