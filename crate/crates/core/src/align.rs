//! 7-DoF similarity alignment: closed-form least-squares registration of
//! corresponding point sets, refined by rigid (scale-frozen) ICP.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kdtree::KdTree;
use crate::{Error, Result};

const ROTATION_TOL: f64 = 1e-6;

/// `p -> scale * rotation * p + translation` with a proper rotation and a
/// positive scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    /// Uniform scale factor (> 0).
    pub scale: f64,
    /// Orthonormal rotation with determinant +1.
    pub rotation: Matrix3<f64>,
    /// Translation applied after rotation and scaling.
    pub translation: Vector3<f64>,
}

impl SimilarityTransform {
    /// Builds and validates a transform: finite entries, positive scale,
    /// rotation orthonormal (within 1e-6) with positive determinant.
    pub fn new(scale: f64, rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidInput(format!(
                "scale must be finite and positive, got {scale}"
            )));
        }
        if rotation.iter().any(|v| !v.is_finite())
            || translation.iter().any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput(
                "transform contains non-finite entries".into(),
            ));
        }
        let drift = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if drift > ROTATION_TOL {
            return Err(Error::InvalidInput(format!(
                "rotation block is not orthonormal (max deviation {drift:.2e})"
            )));
        }
        if rotation.determinant() < 0.0 {
            return Err(Error::InvalidInput(
                "rotation block is a reflection".into(),
            ));
        }
        Ok(Self {
            scale,
            rotation,
            translation,
        })
    }

    /// The identity transform.
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Applies the transform to a point.
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * p) + self.translation
    }

    /// Applies the transform to every point.
    pub fn apply_points(&self, points: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        points.iter().map(|p| self.apply(p)).collect()
    }

    /// `self` after `inner`: the transform mapping `p` to
    /// `self(inner(p))`.
    pub fn compose(&self, inner: &Self) -> Self {
        Self {
            scale: self.scale * inner.scale,
            rotation: self.rotation * inner.rotation,
            translation: self.scale * (self.rotation * inner.translation) + self.translation,
        }
    }

    /// The inverse transform.
    pub fn inverse(&self) -> Self {
        let rotation = self.rotation.transpose();
        Self {
            scale: 1.0 / self.scale,
            rotation,
            translation: -(rotation * self.translation) / self.scale,
        }
    }
}

/// Serialization mirror of [`SimilarityTransform`]: scale, nine row-major
/// rotation entries, three translation entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimilarityJson {
    pub scale: f64,
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl From<&SimilarityTransform> for SimilarityJson {
    fn from(t: &SimilarityTransform) -> Self {
        let mut rotation = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                rotation[r * 3 + c] = t.rotation[(r, c)];
            }
        }
        Self {
            scale: t.scale,
            rotation,
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl TryFrom<&SimilarityJson> for SimilarityTransform {
    type Error = Error;

    fn try_from(json: &SimilarityJson) -> Result<SimilarityTransform> {
        SimilarityTransform::new(
            json.scale,
            Matrix3::from_fn(|r, c| json.rotation[r * 3 + c]),
            Vector3::from_column_slice(&json.translation),
        )
    }
}

/// Proper rotation closest (in the least-squares sense) to mapping the
/// centered `src` onto the centered `dst` directions, from the SVD of their
/// cross-covariance. Returns the rotation together with the singular values
/// and the applied sign vector, for reuse by the scale estimate.
fn covariance_rotation(cov: &Matrix3<f64>) -> Result<(Matrix3<f64>, Vector3<f64>, Vector3<f64>)> {
    let svd = nalgebra::linalg::SVD::new(*cov, true, true);
    let u = svd.u.ok_or_else(|| Error::Degenerate("SVD failed".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::Degenerate("SVD failed".into()))?;
    let d = svd.singular_values;
    let mut signs = Vector3::new(1.0, 1.0, 1.0);
    if u.determinant() * v_t.determinant() < 0.0 {
        // Reflection case: flip the axis of the smallest singular value
        // (cheapest correction, the standard choice).
        let argmin = (0..3).min_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap();
        signs[argmin] = -1.0;
    }
    let rotation = u * Matrix3::from_diagonal(&signs) * v_t;
    Ok((rotation, d, signs))
}

/// Closed-form least-squares similarity registration of index-matched point
/// sets: finds `scale, rotation, translation` minimizing
/// `sum_i ||scale * rotation * src_i + translation - dst_i||^2`.
///
/// Needs at least three correspondences spanning a plane; collinear or
/// coincident configurations are rejected as degenerate.
pub fn umeyama_align(
    src: &[Vector3<f64>],
    dst: &[Vector3<f64>],
) -> Result<SimilarityTransform> {
    if src.len() != dst.len() {
        return Err(Error::InvalidInput(format!(
            "correspondence counts differ: {} vs {}",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "similarity estimation needs at least 3 correspondences, got {}",
            src.len()
        )));
    }
    let n = src.len() as f64;
    let mu_src: Vector3<f64> = src.iter().sum::<Vector3<f64>>() / n;
    let mu_dst: Vector3<f64> = dst.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    let mut var_src = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let cs = s - mu_src;
        cov += (d - mu_dst) * cs.transpose();
        var_src += cs.norm_squared();
    }
    cov /= n;
    var_src /= n;

    let (rotation, d, signs) = covariance_rotation(&cov)?;
    let d_max = d.max();
    let mut sorted = [d[0], d[1], d[2]];
    sorted.sort_unstable_by(f64::total_cmp);
    if var_src == 0.0 || sorted[1] <= 1e-12 * d_max.max(1e-300) {
        return Err(Error::Degenerate(
            "correspondences are collinear or coincident; the similarity is not unique".into(),
        ));
    }
    let scale = d.dot(&signs) / var_src;
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Degenerate(format!(
            "estimated scale {scale} is not positive"
        )));
    }
    let translation = mu_dst - scale * (rotation * mu_src);
    SimilarityTransform::new(scale, rotation, translation)
}

/// Outcome of ICP refinement.
#[derive(Debug, Clone)]
pub struct IcpResult {
    /// Best transform found (lowest correspondence RMS).
    pub transform: SimilarityTransform,
    /// Inlier RMS before the first update and after each accepted update;
    /// non-increasing by construction.
    pub rms_history: Vec<f64>,
    /// True when an iteration found no correspondence within the outlier
    /// radius; the best-so-far transform is still returned.
    pub diverged: bool,
}

fn inlier_rms(pairs: &[(Vector3<f64>, Vector3<f64>)]) -> f64 {
    let sq: Vec<f64> = pairs.iter().map(|(a, b)| (a - b).norm_squared()).collect();
    crate::numeric::pairwise_mean(&sq).sqrt()
}

/// Rigid (rotation + translation) least-squares fit of paired points.
fn rigid_fit(pairs: &[(Vector3<f64>, Vector3<f64>)]) -> Result<(Matrix3<f64>, Vector3<f64>)> {
    let n = pairs.len() as f64;
    let mu_src: Vector3<f64> = pairs.iter().map(|p| p.0).sum::<Vector3<f64>>() / n;
    let mu_dst: Vector3<f64> = pairs.iter().map(|p| p.1).sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for (s, d) in pairs {
        cov += (d - mu_dst) * (s - mu_src).transpose();
    }
    if cov.amax() == 0.0 {
        // Coincident or single-point correspondence: translation only.
        return Ok((Matrix3::identity(), mu_dst - mu_src));
    }
    let (rotation, _, _) = covariance_rotation(&cov)?;
    Ok((rotation, mu_dst - rotation * mu_src))
}

/// Refines `init` by iterated nearest-neighbor rigid alignment of `src`
/// onto `dst`; the similarity scale stays frozen at `init.scale`.
///
/// Correspondences farther than 10x the median nearest-neighbor distance of
/// the initial alignment are treated as outliers (the radius is unbounded
/// when the clouds already coincide). Iteration stops at `max_iters`, when
/// the RMS improvement drops below `tol`, or when an update stops helping;
/// the lowest-RMS transform seen is returned, so `rms_history` is
/// non-increasing.
pub fn icp_refine(
    src: &[Vector3<f64>],
    dst: &[Vector3<f64>],
    init: &SimilarityTransform,
    max_iters: usize,
    tol: f64,
) -> Result<IcpResult> {
    if src.is_empty() || dst.is_empty() {
        return Err(Error::InvalidInput(
            "ICP needs two non-empty point clouds".into(),
        ));
    }
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "tolerance must be finite and non-negative, got {tol}"
        )));
    }
    SimilarityTransform::new(init.scale, init.rotation, init.translation)?;
    let tree = KdTree::build(dst);

    let correspondences = |t: &SimilarityTransform,
                           radius: f64|
     -> Vec<(Vector3<f64>, Vector3<f64>)> {
        src.par_iter()
            .filter_map(|p| {
                let moved = t.apply(p);
                let (j, d_sq) = tree.nearest(&moved);
                (d_sq.sqrt() <= radius).then(|| (moved, dst[j]))
            })
            .collect()
    };

    // Outlier radius from the initial alignment's median match distance.
    let mut init_dists: Vec<f64> = src
        .par_iter()
        .map(|p| tree.nearest(&init.apply(p)).1.sqrt())
        .collect();
    init_dists.sort_unstable_by(f64::total_cmp);
    let median = init_dists[init_dists.len() / 2];
    let radius = if median == 0.0 { f64::INFINITY } else { 10.0 * median };

    let pairs = correspondences(init, radius);
    if pairs.is_empty() {
        return Ok(IcpResult {
            transform: *init,
            rms_history: vec![f64::INFINITY],
            diverged: true,
        });
    }
    let mut best = *init;
    let mut best_rms = inlier_rms(&pairs);
    let mut history = vec![best_rms];
    let mut diverged = false;

    for _ in 0..max_iters {
        let pairs = correspondences(&best, radius);
        if pairs.is_empty() {
            diverged = true;
            break;
        }
        let Ok((rot, trans)) = rigid_fit(&pairs) else {
            diverged = true;
            break;
        };
        let delta = SimilarityTransform {
            scale: 1.0,
            rotation: rot,
            translation: trans,
        };
        let candidate = delta.compose(&best);
        let cand_pairs = correspondences(&candidate, radius);
        if cand_pairs.is_empty() {
            diverged = true;
            break;
        }
        let rms = inlier_rms(&cand_pairs);
        if rms >= best_rms {
            break; // no further progress; keep the best transform
        }
        let improvement = best_rms - rms;
        best = candidate;
        best_rms = rms;
        history.push(rms);
        if improvement < tol {
            break;
        }
    }
    Ok(IcpResult {
        transform: best,
        rms_history: history,
        diverged,
    })
}
