//! Dense voxel grids and the field operators defined on them.
//!
//! A grid stores one scalar (or vector, or boolean) per voxel center. Voxel
//! `(i, j, k)` sits at `origin + voxel_size * (i, j, k)` in world space and
//! the backing storage is row-major with `k` varying fastest:
//! `index = (i * dims[1] + j) * dims[2] + k`.
//!
//! Two boolean masks recur throughout the crate:
//!
//! * a *validity* mask marking voxels whose value is trustworthy (e.g. voxels
//!   observed by at least one depth map during fusion), and
//! * a *smoothness* mask produced by [`build_eikonal_mask`], which pools the
//!   gradient-norm field over a Chebyshev neighborhood and keeps voxels whose
//!   pooled value stays at or below a threshold. Sign flips and other local
//!   defects inflate the one-sided differences around them and are excluded
//!   together with their neighborhood.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::{Error, Result};

/// Slack, in voxel-index units, accepted when deciding whether a sample point
/// lies inside the grid; absorbs round-off from world-coordinate arithmetic.
const INDEX_EPS: f64 = 1e-9;

/// Geometry of a dense voxel grid: axis dimensions, world position of the
/// voxel `(0, 0, 0)` center, and the (cubic) voxel edge length.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub dims: [usize; 3],
    pub origin: Vector3<f64>,
    pub voxel_size: f64,
}

impl GridSpec {
    pub fn new(dims: [usize; 3], origin: Vector3<f64>, voxel_size: f64) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidInput(format!(
                "grid dims must be nonzero, got {dims:?}"
            )));
        }
        if !(voxel_size.is_finite() && voxel_size > 0.0) {
            return Err(Error::InvalidInput(format!(
                "voxel size must be finite and positive, got {voxel_size}"
            )));
        }
        if !origin.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidInput("grid origin must be finite".into()));
        }
        Ok(Self {
            dims,
            origin,
            voxel_size,
        })
    }

    /// Spec whose voxels tile the box `[vmin, vmax]` with `dims[a]` cells per
    /// axis; voxel centers sit at cell midpoints, half a voxel inside the box.
    ///
    /// The box must be sized so a single cubic voxel size fits all three axes.
    pub fn cell_centered(dims: [usize; 3], vmin: Vector3<f64>, vmax: Vector3<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidInput(format!(
                "grid dims must be nonzero, got {dims:?}"
            )));
        }
        let sizes = [
            (vmax.x - vmin.x) / dims[0] as f64,
            (vmax.y - vmin.y) / dims[1] as f64,
            (vmax.z - vmin.z) / dims[2] as f64,
        ];
        let eps = sizes[0];
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::InvalidInput(format!(
                "degenerate volume bounds {vmin:?}..{vmax:?}"
            )));
        }
        for &s in &sizes[1..] {
            if ((s - eps) / eps).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "volume bounds require non-cubic voxels ({sizes:?})"
                )));
            }
        }
        let half = eps / 2.0;
        GridSpec::new(dims, vmin + Vector3::repeat(half), eps)
    }

    /// Total voxel count.
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat storage index of voxel `(i, j, k)`; `k` varies fastest.
    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.dims[0] && j < self.dims[1] && k < self.dims[2]);
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    /// Inverse of [`GridSpec::index`].
    #[inline]
    pub fn unindex(&self, idx: usize) -> (usize, usize, usize) {
        let k = idx % self.dims[2];
        let j = (idx / self.dims[2]) % self.dims[1];
        let i = idx / (self.dims[1] * self.dims[2]);
        (i, j, k)
    }

    /// World position of the voxel `(i, j, k)` center.
    #[inline]
    pub fn center(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.origin
            + Vector3::new(
                i as f64 * self.voxel_size,
                j as f64 * self.voxel_size,
                k as f64 * self.voxel_size,
            )
    }

    /// World position of the last voxel center (the sampling region corner).
    pub fn max_center(&self) -> Vector3<f64> {
        self.center(self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1)
    }

    /// Layout equality with a relative tolerance on origin and voxel size,
    /// tolerant of the 32-bit rounding introduced by on-disk headers.
    pub fn approx_eq(&self, other: &GridSpec, rel_tol: f64) -> bool {
        let scale = self.voxel_size.abs().max(1e-30);
        self.dims == other.dims
            && ((self.voxel_size - other.voxel_size) / scale).abs() <= rel_tol
            && (self.origin - other.origin).amax() <= rel_tol * scale.max(self.origin.amax())
    }
}

/// Dense scalar field sampled at voxel centers.
#[derive(Clone, Debug)]
pub struct VoxelGrid {
    pub spec: GridSpec,
    values: Vec<f64>,
}

impl VoxelGrid {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::InvalidInput(format!(
                "value buffer holds {} entries but the spec needs {}",
                values.len(),
                spec.len()
            )));
        }
        Ok(Self { spec, values })
    }

    pub fn constant(spec: GridSpec, value: f64) -> Self {
        let n = spec.len();
        Self {
            spec,
            values: vec![value; n],
        }
    }

    /// Evaluates `f` at every voxel center in parallel.
    pub fn from_fn(spec: GridSpec, f: impl Fn(Vector3<f64>) -> f64 + Sync) -> Self {
        let values = (0..spec.len())
            .into_par_iter()
            .map(|idx| {
                let (i, j, k) = spec.unindex(idx);
                f(spec.center(i, j, k))
            })
            .collect();
        Self { spec, values }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.spec.index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let idx = self.spec.index(i, j, k);
        self.values[idx] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Dense boolean field sampled at voxel centers.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskGrid {
    pub spec: GridSpec,
    bits: Vec<bool>,
}

impl MaskGrid {
    pub fn new(spec: GridSpec, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != spec.len() {
            return Err(Error::InvalidInput(format!(
                "mask buffer holds {} entries but the spec needs {}",
                bits.len(),
                spec.len()
            )));
        }
        Ok(Self { spec, bits })
    }

    pub fn filled(spec: GridSpec, value: bool) -> Self {
        let n = spec.len();
        Self {
            spec,
            bits: vec![value; n],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.bits[self.spec.index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: bool) {
        let idx = self.spec.index(i, j, k);
        self.bits[idx] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count_true(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Voxel-wise AND of two masks over the same layout.
    pub fn intersect(&self, other: &MaskGrid) -> Result<MaskGrid> {
        if !self.spec.approx_eq(&other.spec, 1e-9) {
            return Err(Error::SpecMismatch(
                "mask intersection requires identical grid layouts".into(),
            ));
        }
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(&a, &b)| a && b)
            .collect();
        Ok(MaskGrid {
            spec: self.spec,
            bits,
        })
    }
}

/// Dense 3-vector field sampled at voxel centers (e.g. a gradient field).
#[derive(Clone, Debug)]
pub struct VectorGrid {
    pub spec: GridSpec,
    vectors: Vec<Vector3<f64>>,
}

impl VectorGrid {
    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.vectors[self.spec.index(i, j, k)]
    }

    pub fn vectors(&self) -> &[Vector3<f64>] {
        &self.vectors
    }
}

/// One-axis finite difference: central in the interior, one-sided on the two
/// boundary planes. Exact for fields that are affine along the axis.
#[inline]
fn axis_derivative(values: &[f64], spec: &GridSpec, idx: usize, axis: usize) -> f64 {
    let coords = spec.unindex(idx);
    let coord = [coords.0, coords.1, coords.2][axis];
    let n = spec.dims[axis];
    let stride = match axis {
        0 => spec.dims[1] * spec.dims[2],
        1 => spec.dims[2],
        _ => 1,
    };
    let eps = spec.voxel_size;
    if coord == 0 {
        (values[idx + stride] - values[idx]) / eps
    } else if coord == n - 1 {
        (values[idx] - values[idx - stride]) / eps
    } else {
        (values[idx + stride] - values[idx - stride]) / (2.0 * eps)
    }
}

/// Finite-difference gradient of a scalar grid.
///
/// Central differences in the interior and one-sided differences on the grid
/// boundary; both are exact for affine fields. Every axis must have at least
/// two voxels.
pub fn finite_diff_gradient(grid: &VoxelGrid) -> Result<VectorGrid> {
    let spec = grid.spec;
    if spec.dims.iter().any(|&d| d < 2) {
        return Err(Error::InvalidInput(format!(
            "gradient needs at least 2 voxels per axis, got {:?}",
            spec.dims
        )));
    }
    let values = grid.values();
    let vectors = (0..spec.len())
        .into_par_iter()
        .map(|idx| {
            Vector3::new(
                axis_derivative(values, &spec, idx, 0),
                axis_derivative(values, &spec, idx, 1),
                axis_derivative(values, &spec, idx, 2),
            )
        })
        .collect();
    Ok(VectorGrid { spec, vectors })
}

/// Euclidean norm of the finite-difference gradient at every voxel.
///
/// For a clean signed-distance field this is close to one everywhere away
/// from the medial axis; defects show up as localized spikes.
pub fn gradient_norm(grid: &VoxelGrid) -> Result<VoxelGrid> {
    let grad = finite_diff_gradient(grid)?;
    let values = grad.vectors().par_iter().map(|g| g.norm()).collect();
    VoxelGrid::new(grid.spec, values)
}

/// 1-D sliding max along `axis` with radius `r`; windows are clipped at the
/// grid boundary (no padding values are invented).
fn max_pool_axis(values: &mut Vec<f64>, spec: &GridSpec, axis: usize, r: usize) {
    if r == 0 {
        return;
    }
    let n = spec.dims[axis];
    let stride = match axis {
        0 => spec.dims[1] * spec.dims[2],
        1 => spec.dims[2],
        _ => 1,
    };
    let src = values.clone();
    values
        .par_iter_mut()
        .enumerate()
        .for_each(|(idx, out)| {
            let coords = spec.unindex(idx);
            let coord = [coords.0, coords.1, coords.2][axis];
            let lo = coord.saturating_sub(r);
            let hi = (coord + r).min(n - 1);
            let base = idx - coord * stride;
            let mut m = f64::NEG_INFINITY;
            for c in lo..=hi {
                m = m.max(src[base + c * stride]);
            }
            *out = m;
        });
}

/// Builds a local-smoothness mask from a scalar grid.
///
/// The gradient-norm field is max-pooled over a Chebyshev neighborhood of
/// `pool_kernel` voxels per axis (kernel 5 looks two voxels out in every
/// direction; windows clip at the grid boundary) and a voxel is kept when the
/// pooled value is at or below `threshold`. Because a box max separates per
/// axis, the pool runs as three 1-D passes.
///
/// `pool_kernel` must be odd and at least 1; all grid values must be finite.
pub fn build_eikonal_mask(
    grid: &VoxelGrid,
    pool_kernel: usize,
    threshold: f64,
) -> Result<MaskGrid> {
    if pool_kernel == 0 || pool_kernel % 2 == 0 {
        return Err(Error::InvalidInput(format!(
            "pool kernel must be odd and >= 1, got {pool_kernel}"
        )));
    }
    if !threshold.is_finite() {
        return Err(Error::InvalidInput(format!(
            "threshold must be finite, got {threshold}"
        )));
    }
    if !grid.is_finite() {
        return Err(Error::InvalidInput(
            "grid contains non-finite values; mask construction needs finite inputs".into(),
        ));
    }
    let residual = gradient_norm(grid)?;
    let spec = grid.spec;
    let mut pooled = residual.values().to_vec();
    let r = pool_kernel / 2;
    for axis in 0..3 {
        max_pool_axis(&mut pooled, &spec, axis, r);
    }
    let bits = pooled.par_iter().map(|&p| p <= threshold).collect();
    MaskGrid::new(spec, bits)
}

/// Trilinear interpolation of the grid at arbitrary world points.
///
/// Points must lie inside the box spanned by the outermost voxel centers;
/// with `clamp` set, outside points are instead pulled to the nearest point
/// of that box. Without it, the first offending point is reported.
pub fn trilinear_sample(
    grid: &VoxelGrid,
    points: &[Vector3<f64>],
    clamp: bool,
) -> Result<Vec<f64>> {
    let spec = grid.spec;
    let values = grid.values();
    let mut out = Vec::with_capacity(points.len());
    for (pi, p) in points.iter().enumerate() {
        let mut base = [0usize; 3];
        let mut frac = [0f64; 3];
        for a in 0..3 {
            let n = spec.dims[a];
            let mut g = (p[a] - spec.origin[a]) / spec.voxel_size;
            if !clamp && !(-INDEX_EPS..=(n - 1) as f64 + INDEX_EPS).contains(&g) {
                return Err(Error::OutOfBounds {
                    index: pi,
                    point: [p.x, p.y, p.z],
                });
            }
            g = g.clamp(0.0, (n - 1) as f64);
            let b = (g.floor() as usize).min(n.saturating_sub(2));
            base[a] = b;
            frac[a] = g - b as f64;
        }
        let mut acc = 0.0;
        for corner in 0..8usize {
            let mut w = 1.0;
            let mut idx = [0usize; 3];
            for a in 0..3 {
                let hi = (corner >> a) & 1 == 1;
                idx[a] = base[a] + usize::from(hi && spec.dims[a] > 1);
                w *= if hi { frac[a] } else { 1.0 - frac[a] };
            }
            if w != 0.0 {
                acc += w * values[spec.index(idx[0], idx[1], idx[2])];
            }
        }
        out.push(acc);
    }
    Ok(out)
}
