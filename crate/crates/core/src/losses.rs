//! Masked SDF supervision losses.
//!
//! All terms are means over an evaluation set restricted to the observation
//! mask `M_V`; the reliability mask `M_E` switches individual samples
//! between signed and degraded behavior:
//!
//! * SDF loss: `|pred - gt|` inside `M_E`, `||pred| - |gt||` (unsigned
//!   fallback) outside.
//! * Gradient loss: `||grad pred - grad gt||_2` inside `M_E`, a hard 0
//!   outside (unreliable gradients are excluded but still count toward the
//!   mean's denominator).
//! * Eikonal term: `(||grad pred||_2 - 1)^2`, over all of `M_V`.
//!
//! Sums use a fixed-tree pairwise reduction in grid order, so a given input
//! always produces bit-identical results.

use serde::{Deserialize, Serialize};

use crate::grid::{finite_diff_gradient, MaskGrid, VoxelGrid};
use crate::mesh::SurfaceSamples;
use crate::numeric::pairwise_sum;
use crate::{Error, Result};

/// Term weights for [`total_loss`]. All four default to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    /// Weight of the near-surface sample SDF term.
    pub lambda_s: f64,
    /// Weight of the full-grid SDF term.
    pub lambda_c: f64,
    /// Weight of the gradient-matching term.
    pub lambda_g: f64,
    /// Weight of the Eikonal regularizer.
    pub lambda_e: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_s: 1.0,
            lambda_c: 1.0,
            lambda_g: 1.0,
            lambda_e: 1.0,
        }
    }
}

impl LossWeights {
    /// Checks that every weight is finite and non-negative.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_s", self.lambda_s),
            ("lambda_c", self.lambda_c),
            ("lambda_g", self.lambda_g),
            ("lambda_e", self.lambda_e),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// How many samples/voxels entered each term's mean denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossCounts {
    pub surface: usize,
    pub grid: usize,
    pub grad: usize,
    pub eikonal: usize,
}

/// The decomposed objective. `total` is the weighted sum of the four terms;
/// a camera-pose regression term has no slot here because this toolkit does
/// no pose regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    /// Mean SDF error over near-surface samples.
    pub l_sdf_surface: f64,
    /// Mean SDF error over observed grid voxels.
    pub l_sdf_grid: f64,
    /// Mean masked gradient mismatch over observed grid voxels.
    pub l_grad: f64,
    /// Mean Eikonal residual over observed grid voxels.
    pub l_eik: f64,
    /// `lambda_s * l_sdf_surface + lambda_c * l_sdf_grid + lambda_g * l_grad + lambda_e * l_eik`.
    pub total: f64,
    pub counts: LossCounts,
}

/// Mean absolute SDF error with per-sample unsigned fallback: samples with
/// `in_me` compare signed values, the rest compare magnitudes. Inputs are
/// assumed to be restricted to the observation set already. Empty input
/// yields `(0, 0)`.
pub fn loss_sdf(pred: &[f64], gt: &[f64], in_me: &[bool]) -> Result<(f64, usize)> {
    if pred.len() != gt.len() || pred.len() != in_me.len() {
        return Err(Error::InvalidInput(format!(
            "loss_sdf inputs disagree in length: {} predictions, {} targets, {} mask bits",
            pred.len(),
            gt.len(),
            in_me.len()
        )));
    }
    if pred.is_empty() {
        return Ok((0.0, 0));
    }
    let residuals: Vec<f64> = pred
        .iter()
        .zip(gt)
        .zip(in_me)
        .map(|((p, g), reliable)| {
            if *reliable {
                (p - g).abs()
            } else {
                (p.abs() - g.abs()).abs()
            }
        })
        .collect();
    Ok((pairwise_sum(&residuals) / residuals.len() as f64, residuals.len()))
}

fn check_specs(a: &VoxelGrid, masks: &[&MaskGrid], others: &[&VoxelGrid]) -> Result<()> {
    for m in masks {
        if !a.spec.approx_eq(&m.spec, 1e-9) {
            return Err(Error::SpecMismatch(
                "mask grid layout differs from the value grid".into(),
            ));
        }
    }
    for o in others {
        if !a.spec.approx_eq(&o.spec, 1e-9) {
            return Err(Error::SpecMismatch(
                "value grid layouts differ".into(),
            ));
        }
    }
    Ok(())
}

/// Mean over `mv` voxels of the gradient mismatch `||grad pred - grad gt||`,
/// where voxels outside `me` contribute 0 (but still count). Returns the
/// mean and the count of `mv` voxels.
pub fn loss_grad(
    pred: &VoxelGrid,
    gt: &VoxelGrid,
    mv: &MaskGrid,
    me: &MaskGrid,
) -> Result<(f64, usize)> {
    check_specs(pred, &[mv, me], &[gt])?;
    let grad_pred = finite_diff_gradient(pred)?;
    let grad_gt = finite_diff_gradient(gt)?;
    let mut residuals = Vec::new();
    for idx in 0..pred.spec.len() {
        let (i, j, k) = pred.spec.unindex(idx);
        if !mv.get(i, j, k) {
            continue;
        }
        residuals.push(if me.get(i, j, k) {
            (grad_pred.get(i, j, k) - grad_gt.get(i, j, k)).norm()
        } else {
            0.0
        });
    }
    if residuals.is_empty() {
        return Ok((0.0, 0));
    }
    Ok((pairwise_sum(&residuals) / residuals.len() as f64, residuals.len()))
}

/// Mean over `mv` voxels of the Eikonal residual `(||grad pred|| - 1)^2`.
pub fn loss_eikonal(pred: &VoxelGrid, mv: &MaskGrid) -> Result<(f64, usize)> {
    check_specs(pred, &[mv], &[])?;
    let grad = finite_diff_gradient(pred)?;
    let mut residuals = Vec::new();
    for idx in 0..pred.spec.len() {
        let (i, j, k) = pred.spec.unindex(idx);
        if !mv.get(i, j, k) {
            continue;
        }
        let r = grad.get(i, j, k).norm() - 1.0;
        residuals.push(r * r);
    }
    if residuals.is_empty() {
        return Ok((0.0, 0));
    }
    Ok((pairwise_sum(&residuals) / residuals.len() as f64, residuals.len()))
}

/// Assembles the full objective.
///
/// The grid SDF term runs over `mv` voxels with per-voxel signedness from
/// `me`; the surface term compares `pred_at_surface` against the sample
/// ground truth, signed unless the sample set was generated unsigned
/// (`surface.signed == false`, which behaves like an empty reliability
/// mask).
pub fn total_loss(
    pred: &VoxelGrid,
    gt: &VoxelGrid,
    mv: &MaskGrid,
    me: &MaskGrid,
    surface: &SurfaceSamples,
    pred_at_surface: &[f64],
    weights: &LossWeights,
) -> Result<LossReport> {
    weights.validate()?;
    check_specs(pred, &[mv, me], &[gt])?;
    if pred_at_surface.len() != surface.len() {
        return Err(Error::InvalidInput(format!(
            "{} surface predictions for {} samples",
            pred_at_surface.len(),
            surface.len()
        )));
    }

    let surface_me = vec![surface.signed; surface.len()];
    let (l_sdf_surface, n_surface) = loss_sdf(pred_at_surface, &surface.gt_sdf, &surface_me)?;

    let mut grid_pred = Vec::new();
    let mut grid_gt = Vec::new();
    let mut grid_me = Vec::new();
    for idx in 0..pred.spec.len() {
        let (i, j, k) = pred.spec.unindex(idx);
        if !mv.get(i, j, k) {
            continue;
        }
        grid_pred.push(pred.get(i, j, k));
        grid_gt.push(gt.get(i, j, k));
        grid_me.push(me.get(i, j, k));
    }
    let (l_sdf_grid, n_grid) = loss_sdf(&grid_pred, &grid_gt, &grid_me)?;
    let (l_grad, n_grad) = loss_grad(pred, gt, mv, me)?;
    let (l_eik, n_eik) = loss_eikonal(pred, mv)?;

    let total = weights.lambda_s * l_sdf_surface
        + weights.lambda_c * l_sdf_grid
        + weights.lambda_g * l_grad
        + weights.lambda_e * l_eik;
    Ok(LossReport {
        l_sdf_surface,
        l_sdf_grid,
        l_grad,
        l_eik,
        total,
        counts: LossCounts {
            surface: n_surface,
            grid: n_grid,
            grad: n_grad,
            eikonal: n_eik,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use nalgebra::Vector3;
    use proptest::prelude::*;

    fn spec(n: usize) -> GridSpec {
        GridSpec::cell_centered([n, n, n], Vector3::repeat(-0.5), Vector3::repeat(0.5)).unwrap()
    }

    fn plane_sdf(n: usize) -> VoxelGrid {
        // f(x) = x.x + 0.1: exact unit gradient everywhere, borders included.
        VoxelGrid::from_fn(spec(n), |p| p.x + 0.1)
    }

    #[test]
    fn identical_inputs_have_zero_sdf_loss() {
        let gt = [0.5, -0.25, 0.0, 3.0];
        let (v, n) = loss_sdf(&gt, &gt, &[true, false, true, false]).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(n, 4);
    }

    #[test]
    fn unsigned_fallback_ignores_sign_flips() {
        let gt = [1.0, -2.0, 0.5];
        let pred: Vec<f64> = gt.iter().map(|g| -g).collect();
        let (v, _) = loss_sdf(&pred, &gt, &[false, false, false]).unwrap();
        assert_eq!(v, 0.0);
        // The signed branch sees the full 2|gt| error.
        let (v, n) = loss_sdf(&[-1.0], &[1.0], &[true]).unwrap();
        assert_eq!(v, 2.0);
        assert_eq!(n, 1);
    }

    #[test]
    fn sdf_loss_is_symmetric_and_validates_lengths() {
        let a = [0.3, -1.2, 4.0, -0.7];
        let b = [0.1, 2.0, -4.0, 0.0];
        let me = [true, false, true, false];
        assert_eq!(loss_sdf(&a, &b, &me).unwrap(), loss_sdf(&b, &a, &me).unwrap());
        assert!(loss_sdf(&a, &b[..3], &me).is_err());
        assert!(loss_sdf(&a, &b, &me[..3]).is_err());
        assert_eq!(loss_sdf(&[], &[], &[]).unwrap(), (0.0, 0));
    }

    #[test]
    fn gradient_loss_sees_an_affine_perturbation_exactly() {
        let n = 8;
        let gt = plane_sdf(n);
        let pred = VoxelGrid::from_fn(spec(n), |p| p.x + 0.1 + 0.1 * p.y);
        let all = MaskGrid::filled(spec(n), true);
        let (v, count) = loss_grad(&pred, &gt, &all, &all).unwrap();
        // Finite differences recover affine gradients exactly, so every
        // voxel contributes exactly 0.1.
        approx::assert_relative_eq!(v, 0.1, epsilon = 1e-12);
        assert_eq!(count, n * n * n);
    }

    #[test]
    fn gradient_loss_zeroes_unreliable_voxels_but_keeps_them_in_the_mean() {
        let n = 4;
        let gt = plane_sdf(n);
        let pred = VoxelGrid::from_fn(spec(n), |p| p.x + 0.1 + 0.1 * p.y);
        let all = MaskGrid::filled(spec(n), true);
        let none = MaskGrid::filled(spec(n), false);
        let (v, count) = loss_grad(&pred, &gt, &all, &none).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(count, n * n * n);
        // Half reliable: the 0.1 residual is averaged over all voxels.
        let mut half = MaskGrid::filled(spec(n), false);
        for idx in 0..spec(n).len() / 2 {
            let (i, j, k) = spec(n).unindex(idx);
            half.set(i, j, k, true);
        }
        let (v, _) = loss_grad(&pred, &gt, &all, &half).unwrap();
        approx::assert_relative_eq!(v, 0.05, epsilon = 1e-12);
    }

    #[test]
    fn eikonal_residual_is_zero_for_unit_slopes_and_one_for_constants() {
        let n = 6;
        let all = MaskGrid::filled(spec(n), true);
        let (v, _) = loss_eikonal(&plane_sdf(n), &all).unwrap();
        approx::assert_relative_eq!(v, 0.0, epsilon = 1e-24);
        let flat = VoxelGrid::constant(spec(n), 0.7);
        let (v, count) = loss_eikonal(&flat, &all).unwrap();
        assert_eq!(v, 1.0);
        assert_eq!(count, n * n * n);
    }

    #[test]
    fn eikonal_residual_is_small_on_a_masked_sphere_sdf() {
        let n = 32;
        let s = spec(n);
        let sphere = VoxelGrid::from_fn(s, |p| p.norm() - 0.3);
        let eps = s.voxel_size;
        let mut mask = MaskGrid::filled(s, false);
        for idx in 0..s.len() {
            let (i, j, k) = s.unindex(idx);
            let interior = [i, j, k]
                .iter()
                .zip(s.dims)
                .all(|(&a, d)| a > 0 && a + 1 < d);
            if interior && s.center(i, j, k).norm() > 3.0 * eps {
                mask.set(i, j, k, true);
            }
        }
        let (v, count) = loss_eikonal(&sphere, &mask).unwrap();
        assert!(count > 1000);
        assert!(v <= 0.01, "masked Eikonal residual {v} too large");
    }

    fn sphere_fixture(n: usize) -> (VoxelGrid, MaskGrid, MaskGrid) {
        let s = spec(n);
        let sphere = VoxelGrid::from_fn(s, |p| p.norm() - 0.3);
        let all = MaskGrid::filled(s, true);
        let mut me = MaskGrid::filled(s, false);
        let eps = s.voxel_size;
        for idx in 0..s.len() {
            let (i, j, k) = s.unindex(idx);
            let interior = [i, j, k]
                .iter()
                .zip(s.dims)
                .all(|(&a, d)| a > 0 && a + 1 < d);
            if interior && s.center(i, j, k).norm() > 3.0 * eps {
                me.set(i, j, k, true);
            }
        }
        (sphere, all, me)
    }

    #[test]
    fn perfect_prediction_reduces_to_the_eikonal_residual() {
        let (sphere, all, _) = sphere_fixture(16);
        let surface = SurfaceSamples {
            points: vec![Vector3::new(0.3, 0.0, 0.0)],
            gt_sdf: vec![0.0],
            signed: true,
        };
        let report = total_loss(
            &sphere,
            &sphere,
            &all,
            &all,
            &surface,
            &[0.0],
            &LossWeights::default(),
        )
        .unwrap();
        assert_eq!(report.l_sdf_surface, 0.0);
        assert_eq!(report.l_sdf_grid, 0.0);
        assert_eq!(report.l_grad, 0.0);
        assert_eq!(report.total, report.l_eik);
        assert!(report.l_eik <= 0.05); // unmasked: border/center residuals included
        assert_eq!(report.counts.grid, 16 * 16 * 16);
        assert_eq!(report.counts.surface, 1);
    }

    #[test]
    fn zero_weights_zero_the_total() {
        let (sphere, all, me) = sphere_fixture(8);
        let noisy = VoxelGrid::from_fn(sphere.spec, |p| p.norm() - 0.2);
        let surface = SurfaceSamples {
            points: vec![Vector3::new(0.3, 0.0, 0.0)],
            gt_sdf: vec![0.0],
            signed: true,
        };
        let zero = LossWeights {
            lambda_s: 0.0,
            lambda_c: 0.0,
            lambda_g: 0.0,
            lambda_e: 0.0,
        };
        let report = total_loss(&noisy, &sphere, &all, &me, &surface, &[0.1], &zero).unwrap();
        assert_eq!(report.total, 0.0);
        assert!(report.l_sdf_grid > 0.0, "terms themselves stay reported");
    }

    #[test]
    fn unsigned_sample_sets_force_the_fallback_surface_term() {
        let (sphere, all, me) = sphere_fixture(8);
        let gt_sdf = vec![0.2, -0.3];
        let pred = vec![-0.2, 0.3]; // sign-flipped
        let points = vec![Vector3::zeros(), Vector3::zeros()];
        let signed = SurfaceSamples {
            points: points.clone(),
            gt_sdf: gt_sdf.clone(),
            signed: true,
        };
        let unsigned = SurfaceSamples {
            points,
            gt_sdf,
            signed: false,
        };
        let w = LossWeights::default();
        let with_sign =
            total_loss(&sphere, &sphere, &all, &me, &signed, &pred, &w).unwrap();
        let without =
            total_loss(&sphere, &sphere, &all, &me, &unsigned, &pred, &w).unwrap();
        assert!(with_sign.l_sdf_surface > 0.0);
        assert_eq!(without.l_sdf_surface, 0.0);
    }

    #[test]
    fn grid_terms_ignore_a_common_offset() {
        let (sphere, all, me) = sphere_fixture(8);
        let shifted_pred = VoxelGrid::from_fn(sphere.spec, |p| p.norm() - 0.3 + 5.0);
        let shifted_gt = shifted_pred.clone();
        let (g0, _) = loss_grad(&sphere, &sphere, &all, &me).unwrap();
        let (g1, _) = loss_grad(&shifted_pred, &shifted_gt, &all, &me).unwrap();
        approx::assert_relative_eq!(g0, g1, epsilon = 1e-12);
        let (e0, _) = loss_eikonal(&sphere, &all).unwrap();
        let (e1, _) = loss_eikonal(&shifted_pred, &all).unwrap();
        approx::assert_relative_eq!(e0, e1, epsilon = 1e-9);
    }

    #[test]
    fn mismatched_layouts_are_rejected() {
        let a = plane_sdf(4);
        let b = plane_sdf(5);
        let all4 = MaskGrid::filled(spec(4), true);
        let all5 = MaskGrid::filled(spec(5), true);
        assert!(loss_grad(&a, &b, &all4, &all4).is_err());
        assert!(loss_grad(&a, &a, &all5, &all4).is_err());
        assert!(loss_eikonal(&a, &all5).is_err());
    }

    #[test]
    fn reruns_are_bit_identical() {
        let (sphere, all, me) = sphere_fixture(12);
        let noisy = VoxelGrid::from_fn(sphere.spec, |p| (p.norm() - 0.3) * 1.02 + 0.003);
        let surface = SurfaceSamples {
            points: vec![Vector3::new(0.3, 0.0, 0.0), Vector3::new(0.0, 0.31, 0.0)],
            gt_sdf: vec![0.0, 0.01],
            signed: true,
        };
        let w = LossWeights::default();
        let run = || {
            total_loss(&noisy, &sphere, &all, &me, &surface, &[0.002, 0.008], &w).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.total.to_bits(), b.total.to_bits());
        assert_eq!(a.l_grad.to_bits(), b.l_grad.to_bits());
        assert_eq!(a.l_eik.to_bits(), b.l_eik.to_bits());
    }

    proptest! {
        #[test]
        fn sdf_loss_doubles_exactly_when_inputs_double(
            values in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3, any::<bool>()), 1..40)
        ) {
            let pred: Vec<f64> = values.iter().map(|v| v.0).collect();
            let gt: Vec<f64> = values.iter().map(|v| v.1).collect();
            let me: Vec<bool> = values.iter().map(|v| v.2).collect();
            let pred2: Vec<f64> = pred.iter().map(|v| v * 2.0).collect();
            let gt2: Vec<f64> = gt.iter().map(|v| v * 2.0).collect();
            let (base, _) = loss_sdf(&pred, &gt, &me).unwrap();
            let (doubled, _) = loss_sdf(&pred2, &gt2, &me).unwrap();
            // Scaling by a power of two is exact in binary floating point.
            prop_assert_eq!(doubled.to_bits(), (base * 2.0).to_bits());
        }

        #[test]
        fn sdf_loss_is_permutation_invariant(
            values in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3, any::<bool>()), 2..40),
            rotation in 0usize..40,
        ) {
            let n = values.len();
            let rot = rotation % n;
            let perm: Vec<(f64, f64, bool)> = (0..n).map(|i| values[(i + rot) % n]).collect();
            let unpack = |vs: &[(f64, f64, bool)]| {
                (
                    vs.iter().map(|v| v.0).collect::<Vec<_>>(),
                    vs.iter().map(|v| v.1).collect::<Vec<_>>(),
                    vs.iter().map(|v| v.2).collect::<Vec<_>>(),
                )
            };
            let (p0, g0, m0) = unpack(&values);
            let (p1, g1, m1) = unpack(&perm);
            let (a, _) = loss_sdf(&p0, &g0, &m0).unwrap();
            let (b, _) = loss_sdf(&p1, &g1, &m1).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }
}
