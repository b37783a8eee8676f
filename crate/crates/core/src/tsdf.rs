//! Projective TSDF fusion of depth maps with observation-validity tracking.
//!
//! Every depth observation contributes the *projective* distance
//! `p = d - z_cam(x)`: the depth difference along the camera ray, not the
//! Euclidean distance to the surface. Off surface-normal rays this
//! overestimates the true distance, which is exactly the bias fused
//! supervision grids inherit; fused values are kept raw (no redistancing)
//! so that bias stays measurable.
//!
//! Fusion runs on a grid refined `oversample`-fold per axis and is sampled
//! back to the requested resolution with weight-aware trilinear
//! interpolation. Voxels never observed by any view keep weight 0 and are
//! reported invalid in the observation mask.

use rayon::prelude::*;

use crate::camera::DepthMap;
use crate::grid::{GridSpec, MaskGrid, VoxelGrid};
use crate::numeric::pairwise_sum;
use crate::{Error, Result};

/// Default truncation: four voxels, keeping several samples across the band.
pub fn default_truncation(spec: &GridSpec) -> f64 {
    4.0 * spec.voxel_size
}

/// Default refinement factor for the internal fusion grid.
pub const DEFAULT_OVERSAMPLE: usize = 2;

/// A fused truncated-signed-distance volume: per-voxel truncated projective
/// distance plus the accumulated observation weight (0 = never observed).
///
/// Wherever `weight > 0`, `|tsdf| <= truncation` holds exactly; unobserved
/// voxels carry the free-space placeholder `+truncation`.
#[derive(Debug, Clone)]
pub struct TsdfState {
    spec: GridSpec,
    truncation: f64,
    tsdf: Vec<f64>,
    weight: Vec<f64>,
}

impl TsdfState {
    /// Integrates every depth map into a fresh volume on `spec`.
    ///
    /// Per voxel center `x` and view: project `x` into the image; where the
    /// projection lands inside and the pixel saw a surface (`d > 0`), the
    /// observation `p = d - z_cam(x)` is kept if `p >= -truncation`
    /// (observations far behind the surface are occluded, not free space)
    /// and clamped to `min(p, truncation)`. All kept observations have
    /// weight 1, so the fused value is their mean.
    ///
    /// The per-voxel observations are sorted before summation, which makes
    /// the result bit-identical under any permutation of `depths`.
    pub fn fuse(depths: &[DepthMap], spec: GridSpec, truncation: f64) -> Result<Self> {
        if depths.is_empty() {
            return Err(Error::InvalidInput(
                "fusion needs at least one depth map".into(),
            ));
        }
        if !(truncation.is_finite() && truncation >= spec.voxel_size) {
            return Err(Error::InvalidInput(format!(
                "truncation must be at least one voxel ({}), got {truncation}",
                spec.voxel_size
            )));
        }
        let mut tsdf = vec![truncation; spec.len()];
        let mut weight = vec![0.0; spec.len()];
        tsdf.par_iter_mut()
            .zip(weight.par_iter_mut())
            .enumerate()
            .for_each(|(idx, (value, w))| {
                let (i, j, k) = spec.unindex(idx);
                let center = spec.center(i, j, k);
                let mut observations: Vec<f64> = Vec::with_capacity(depths.len());
                for view in depths {
                    let Some((i, j, z)) = view.camera.project(&center) else {
                        continue;
                    };
                    let d = view.get(i, j);
                    if d <= 0.0 {
                        continue;
                    }
                    let p = d - z;
                    if p >= -truncation {
                        observations.push(p.min(truncation));
                    }
                }
                if observations.is_empty() {
                    return;
                }
                observations.sort_unstable_by(|a, b| a.total_cmp(b));
                *w = observations.len() as f64;
                // The mean of values in [-tau, tau] can exceed the band by a
                // rounding ulp; clamp to keep the invariant exact.
                *value = (pairwise_sum(&observations) / *w).clamp(-truncation, truncation);
            });
        Ok(Self {
            spec,
            truncation,
            tsdf,
            weight,
        })
    }

    /// Grid layout of the fused volume.
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    /// Truncation band half-width in world units.
    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    /// Fused values in grid layout order.
    pub fn tsdf(&self) -> &[f64] {
        &self.tsdf
    }

    /// Accumulated observation weights in grid layout order.
    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    /// Resamples the fused volume onto `target` with weight-aware trilinear
    /// interpolation: each output voxel is the weight-weighted average of
    /// the fused values at the eight enclosing corners, and is marked
    /// observed iff any corner with nonzero interpolation weight was
    /// observed. Sample points outside the volume are clamped to it.
    pub fn sample_to(&self, target: &GridSpec) -> (VoxelGrid, MaskGrid) {
        let mut values = vec![self.truncation; target.len()];
        let mut observed = vec![false; target.len()];
        values
            .par_iter_mut()
            .zip(observed.par_iter_mut())
            .enumerate()
            .for_each(|(idx, (value, obs))| {
                let (ti, tj, tk) = target.unindex(idx);
                let p = target.center(ti, tj, tk);
                let mut num = 0.0;
                let mut den = 0.0;
                let mut frac = [0.0; 3];
                let mut base = [0usize; 3];
                for a in 0..3 {
                    let u = ((p[a] - self.spec.origin[a]) / self.spec.voxel_size)
                        .clamp(0.0, (self.spec.dims[a] - 1) as f64);
                    let i0 = (u.floor() as usize).min(self.spec.dims[a].saturating_sub(2));
                    base[a] = i0;
                    frac[a] = if self.spec.dims[a] == 1 {
                        0.0
                    } else {
                        u - i0 as f64
                    };
                }
                for corner in 0..8 {
                    let mut w = 1.0;
                    let mut ijk = [0usize; 3];
                    for a in 0..3 {
                        let hi = (corner >> a) & 1;
                        ijk[a] = (base[a] + hi).min(self.spec.dims[a] - 1);
                        w *= if hi == 1 { frac[a] } else { 1.0 - frac[a] };
                    }
                    if w == 0.0 {
                        continue;
                    }
                    let ci = self.spec.index(ijk[0], ijk[1], ijk[2]);
                    let cw = w * self.weight[ci];
                    num += cw * self.tsdf[ci];
                    den += cw;
                }
                if den > 0.0 {
                    *value = num / den;
                    *obs = true;
                }
            });
        (
            VoxelGrid::new(*target, values).expect("sampled values match the target layout"),
            MaskGrid::new(*target, observed).expect("mask matches the target layout"),
        )
    }
}

/// Grid refined `oversample`-fold per axis, cell-centered inside the same
/// extent: each coarse voxel cell is tiled by `oversample^3` fine cells, and
/// the coarse center is the mean of its fine centers.
fn refined_spec(spec: &GridSpec, oversample: usize) -> Result<GridSpec> {
    let fine_eps = spec.voxel_size / oversample as f64;
    let half_shift = (spec.voxel_size - fine_eps) / 2.0;
    GridSpec::new(
        [
            spec.dims[0] * oversample,
            spec.dims[1] * oversample,
            spec.dims[2] * oversample,
        ],
        spec.origin - nalgebra::Vector3::repeat(half_shift),
        fine_eps,
    )
}

/// Fuses depth maps into a truncated projective distance grid on `spec`,
/// together with the observation-validity mask.
///
/// Integration runs on a grid refined `oversample`-fold per axis and is
/// trilinearly sampled back (see [`TsdfState::sample_to`]). Depth maps that
/// observe nothing yield an all-invalid grid, not an error. The result is
/// bit-identical under permutations of `depths`.
pub fn fuse_tsdf(
    depths: &[DepthMap],
    spec: &GridSpec,
    truncation: f64,
    oversample: usize,
) -> Result<(VoxelGrid, MaskGrid)> {
    if oversample == 0 {
        return Err(Error::InvalidInput("oversample must be at least 1".into()));
    }
    let fine = refined_spec(spec, oversample)?;
    if !(truncation.is_finite() && truncation >= spec.voxel_size) {
        return Err(Error::InvalidInput(format!(
            "truncation must be at least one voxel ({}), got {truncation}",
            spec.voxel_size
        )));
    }
    let state = TsdfState::fuse(depths, fine, truncation)?;
    Ok(state.sample_to(spec))
}
