//! Geometry evaluation metrics: chamfer distance, F-score, masked SDF mean
//! absolute error, and exact earth mover's distance at desk scale.
//!
//! Point-cloud metrics use exact nearest neighbors (kd-tree accelerated,
//! equal to brute force); EMD solves the assignment problem exactly and is
//! therefore capped at 4096 points per set.

mod assignment;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::{MaskGrid, VoxelGrid};
use crate::kdtree::KdTree;
use crate::mesh::TriangleMesh;
use crate::numeric::pairwise_mean;
use crate::{Error, Result};

/// Largest point-set size accepted by [`emd`]; the exact solver is cubic.
pub const EMD_MAX_POINTS: usize = 4096;

/// Chamfer distance decomposed into its two directed terms
/// (`cd = (d_gt2p + d_p2gt) / 2`), all in world units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChamferReport {
    /// Mean of the two directed distances.
    pub cd: f64,
    /// Mean distance from each ground-truth point to its nearest prediction.
    pub d_gt2p: f64,
    /// Mean distance from each predicted point to its nearest ground truth.
    pub d_p2gt: f64,
}

fn validate_cloud(name: &str, points: &[Vector3<f64>]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{name} point set must be non-empty"
        )));
    }
    if points.iter().any(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite())) {
        return Err(Error::InvalidInput(format!(
            "{name} point set contains non-finite coordinates"
        )));
    }
    Ok(())
}

/// Draws `count` points uniformly by area from the mesh surface,
/// deterministically under `seed`.
pub fn sample_surface_points(
    mesh: &TriangleMesh,
    count: usize,
    seed: u64,
) -> Result<Vec<Vector3<f64>>> {
    if mesh.is_empty() {
        return Err(Error::InvalidInput(
            "cannot sample points from an empty mesh".into(),
        ));
    }
    let mut cumulative = Vec::with_capacity(mesh.triangle_count());
    let mut acc = 0.0;
    for t in 0..mesh.triangle_count() {
        acc += mesh.triangle_area(t);
        cumulative.push(acc);
    }
    if !(acc.is_finite() && acc > 0.0) {
        return Err(Error::Degenerate(
            "mesh has zero surface area; uniform sampling is undefined".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let pick = rng.random::<f64>() * acc;
        let t = cumulative.partition_point(|&c| c < pick).min(cumulative.len() - 1);
        let [a, b, c] = mesh.triangle_vertices(t);
        // sqrt trick: uniform over the triangle.
        let r1 = rng.random::<f64>().sqrt();
        let r2 = rng.random::<f64>();
        points.push(a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2));
    }
    Ok(points)
}

fn directed_mean(from: &[Vector3<f64>], to_tree: &KdTree) -> f64 {
    let dists: Vec<f64> = from
        .par_iter()
        .map(|p| to_tree.nearest(p).1.sqrt())
        .collect();
    pairwise_mean(&dists)
}

/// Symmetric chamfer distance between two point sets with exact nearest
/// neighbors.
pub fn chamfer(gt: &[Vector3<f64>], pred: &[Vector3<f64>]) -> Result<ChamferReport> {
    validate_cloud("ground-truth", gt)?;
    validate_cloud("predicted", pred)?;
    let gt_tree = KdTree::build(gt);
    let pred_tree = KdTree::build(pred);
    let d_gt2p = directed_mean(gt, &pred_tree);
    let d_p2gt = directed_mean(pred, &gt_tree);
    Ok(ChamferReport {
        cd: (d_gt2p + d_p2gt) / 2.0,
        d_gt2p,
        d_p2gt,
    })
}

/// F-score at threshold `tau`: harmonic mean of precision (fraction of
/// predictions within `tau` of the ground truth, inclusive) and recall
/// (fraction of ground truth covered by predictions). 0 when both vanish.
pub fn f_score(gt: &[Vector3<f64>], pred: &[Vector3<f64>], tau: f64) -> Result<f64> {
    validate_cloud("ground-truth", gt)?;
    validate_cloud("predicted", pred)?;
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidInput(format!(
            "f-score threshold must be finite and positive, got {tau}"
        )));
    }
    let tau_sq = tau * tau;
    let covered = |from: &[Vector3<f64>], tree: &KdTree| -> f64 {
        let hits = from
            .par_iter()
            .filter(|p| tree.nearest(p).1 <= tau_sq)
            .count();
        hits as f64 / from.len() as f64
    };
    let precision = covered(pred, &KdTree::build(gt));
    let recall = covered(gt, &KdTree::build(pred));
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Mean absolute difference between two grids over the observed voxels.
/// Returns the mean and the number of contributing voxels; an empty mask
/// yields `(0, 0)`.
pub fn sdf_mae(pred: &VoxelGrid, gt: &VoxelGrid, mv: &MaskGrid) -> Result<(f64, usize)> {
    if !pred.spec.approx_eq(&gt.spec, 1e-9) || !pred.spec.approx_eq(&mv.spec, 1e-9) {
        return Err(Error::SpecMismatch(
            "grids and mask must share one layout".into(),
        ));
    }
    let residuals: Vec<f64> = pred
        .values()
        .iter()
        .zip(gt.values())
        .zip(mv.bits())
        .filter(|(_, m)| **m)
        .map(|((p, g), _)| (p - g).abs())
        .collect();
    if residuals.is_empty() {
        return Ok((0.0, 0));
    }
    Ok((pairwise_mean(&residuals), residuals.len()))
}

/// Exact earth mover's distance between equal-size point sets: the minimum
/// over perfect matchings of the mean pairwise Euclidean distance.
///
/// The assignment solver is cubic and materializes the n x n cost matrix,
/// so sets are capped at [`EMD_MAX_POINTS`].
pub fn emd(gt: &[Vector3<f64>], pred: &[Vector3<f64>]) -> Result<f64> {
    validate_cloud("ground-truth", gt)?;
    validate_cloud("predicted", pred)?;
    if gt.len() != pred.len() {
        return Err(Error::InvalidInput(format!(
            "earth mover's distance needs equal-size sets, got {} vs {}",
            gt.len(),
            pred.len()
        )));
    }
    if gt.len() > EMD_MAX_POINTS {
        return Err(Error::InvalidInput(format!(
            "{} points exceed the exact-solver cap of {EMD_MAX_POINTS}",
            gt.len()
        )));
    }
    let cost: Vec<Vec<f64>> = gt
        .par_iter()
        .map(|g| pred.iter().map(|p| (g - p).norm()).collect())
        .collect();
    let sigma = assignment::min_cost_assignment(&cost);
    // Plain row-order accumulation: the reported value is exactly the cost
    // of the returned matching.
    let mut total = 0.0;
    for (i, &j) in sigma.iter().enumerate() {
        total += cost[i][j];
    }
    Ok(total / gt.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;
    use nalgebra::{Rotation3, Vector3};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(n: usize, seed: u64) -> Vec<Vector3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Vector3::new(
                    rng.random::<f64>() * 2.0 - 1.0,
                    rng.random::<f64>() * 2.0 - 1.0,
                    rng.random::<f64>() * 2.0 - 1.0,
                )
            })
            .collect()
    }

    #[test]
    fn chamfer_of_a_cloud_with_itself_is_zero() {
        let cloud = random_cloud(64, 3);
        let report = chamfer(&cloud, &cloud).unwrap();
        assert_eq!(report.cd, 0.0);
        assert_eq!(report.d_gt2p, 0.0);
        assert_eq!(report.d_p2gt, 0.0);
    }

    #[test]
    fn chamfer_of_two_singletons_is_their_distance() {
        let a = vec![Vector3::zeros()];
        let b = vec![Vector3::new(1.0, 0.0, 0.0)];
        let report = chamfer(&a, &b).unwrap();
        assert_eq!(report.cd, 1.0);
        assert_eq!(report.d_gt2p, 1.0);
        assert_eq!(report.d_p2gt, 1.0);
    }

    #[test]
    fn chamfer_matches_the_quadratic_oracle() {
        let gt = random_cloud(512, 10);
        let pred = random_cloud(512, 11);
        let report = chamfer(&gt, &pred).unwrap();
        let directed = |from: &[Vector3<f64>], to: &[Vector3<f64>]| {
            let dists: Vec<f64> = from
                .iter()
                .map(|p| {
                    to.iter()
                        .map(|q| (p - q).norm_squared())
                        .fold(f64::INFINITY, f64::min)
                        .sqrt()
                })
                .collect();
            crate::numeric::pairwise_mean(&dists)
        };
        let d_gt2p = directed(&gt, &pred);
        let d_p2gt = directed(&pred, &gt);
        approx::assert_relative_eq!(report.d_gt2p, d_gt2p, max_relative = 1e-12);
        approx::assert_relative_eq!(report.d_p2gt, d_p2gt, max_relative = 1e-12);
        approx::assert_relative_eq!(report.cd, (d_gt2p + d_p2gt) / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn chamfer_and_f_score_are_rigid_invariant() {
        let gt = random_cloud(128, 20);
        let pred = random_cloud(128, 21);
        let rot = Rotation3::from_euler_angles(0.3, -1.1, 2.0);
        let shift = Vector3::new(5.0, -2.0, 0.7);
        let move_all =
            |pts: &[Vector3<f64>]| pts.iter().map(|p| rot * p + shift).collect::<Vec<_>>();
        let a = chamfer(&gt, &pred).unwrap();
        let b = chamfer(&move_all(&gt), &move_all(&pred)).unwrap();
        approx::assert_relative_eq!(a.cd, b.cd, max_relative = 1e-9);
        let fa = f_score(&gt, &pred, 0.25).unwrap();
        let fb = f_score(&move_all(&gt), &move_all(&pred), 0.25).unwrap();
        approx::assert_relative_eq!(fa, fb, max_relative = 1e-9);
    }

    #[test]
    fn f_score_handles_the_canonical_cases() {
        let cloud = random_cloud(32, 5);
        assert_eq!(f_score(&cloud, &cloud, 0.1).unwrap(), 1.0);
        let far: Vec<Vector3<f64>> =
            cloud.iter().map(|p| p + Vector3::new(100.0, 0.0, 0.0)).collect();
        assert_eq!(f_score(&cloud, &far, 0.1).unwrap(), 0.0);
        // Half the predictions hit, all ground truth covered.
        let gt = vec![Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0)];
        let pred = vec![
            Vector3::zeros(),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(50.0, 0.0, 0.0),
            Vector3::new(60.0, 0.0, 0.0),
        ];
        approx::assert_relative_eq!(
            f_score(&gt, &pred, 0.1).unwrap(),
            2.0 / 3.0,
            max_relative = 1e-12
        );
        // The threshold is inclusive.
        let at_tau = vec![Vector3::new(0.1, 0.0, 0.0)];
        let origin = vec![Vector3::zeros()];
        assert_eq!(f_score(&origin, &at_tau, 0.1).unwrap(), 1.0);
    }

    #[test]
    fn sdf_mae_masks_and_averages() {
        let spec = crate::grid::GridSpec::new([4, 4, 4], Vector3::zeros(), 0.1).unwrap();
        let gt = VoxelGrid::from_fn(spec, |p| p.x);
        let same = gt.clone();
        let all = MaskGrid::filled(spec, true);
        assert_eq!(sdf_mae(&same, &gt, &all).unwrap(), (0.0, 64));
        let off = VoxelGrid::from_fn(spec, |p| p.x + 0.004);
        let (mae, n) = sdf_mae(&off, &gt, &all).unwrap();
        approx::assert_relative_eq!(mae, 0.004, max_relative = 1e-9);
        assert_eq!(n, 64);
        // Deviation only where the mask excludes it: masked mean ignores it.
        let mut half = MaskGrid::filled(spec, true);
        let mut biased = gt.clone();
        for idx in 0..spec.len() {
            let (i, j, k) = spec.unindex(idx);
            if i >= 2 {
                half.set(i, j, k, false);
                biased.set(i, j, k, biased.get(i, j, k) + 7.0);
            }
        }
        assert_eq!(sdf_mae(&biased, &gt, &half).unwrap(), (0.0, 32));
        let empty = MaskGrid::filled(spec, false);
        assert_eq!(sdf_mae(&biased, &gt, &empty).unwrap(), (0.0, 0));
    }

    #[test]
    fn emd_of_identical_sets_is_zero_and_shifts_match_hand_values() {
        let cloud = random_cloud(16, 40);
        assert_eq!(emd(&cloud, &cloud).unwrap(), 0.0);
        let gt = vec![Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0)];
        let pred = vec![
            Vector3::new(0.1, 0.0, 0.0),
            Vector3::new(1.1, 0.0, 0.0),
        ];
        approx::assert_relative_eq!(emd(&gt, &pred).unwrap(), 0.1, max_relative = 1e-12);
    }

    #[test]
    fn emd_matches_factorial_enumeration_bitwise() {
        for seed in [1u64, 2, 3] {
            let gt = random_cloud(8, seed * 100);
            let pred = random_cloud(8, seed * 100 + 1);
            let solved = emd(&gt, &pred).unwrap();
            // Enumerate all 8! matchings; accumulate each candidate in row
            // order exactly like the solver's final pass.
            let cost: Vec<Vec<f64>> = gt
                .iter()
                .map(|g| pred.iter().map(|p| (g - p).norm()).collect())
                .collect();
            let mut perm: Vec<usize> = (0..8).collect();
            let mut best = f64::INFINITY;
            permute(&mut perm, 0, &mut |p: &[usize]| {
                let mut total = 0.0;
                for (i, &j) in p.iter().enumerate() {
                    total += cost[i][j];
                }
                if total < best {
                    best = total;
                }
            });
            let oracle = best / 8.0;
            assert_eq!(
                solved.to_bits(),
                oracle.to_bits(),
                "solver {solved} vs enumeration {oracle}"
            );
        }
    }

    fn permute(perm: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
        if k == perm.len() {
            visit(perm);
            return;
        }
        for i in k..perm.len() {
            perm.swap(k, i);
            permute(perm, k + 1, visit);
            perm.swap(k, i);
        }
    }

    #[test]
    fn emd_validates_sizes() {
        let a = random_cloud(4, 1);
        let b = random_cloud(5, 2);
        assert!(emd(&a, &b).is_err());
        assert!(emd(&[], &[]).is_err());
        let big = random_cloud(EMD_MAX_POINTS + 1, 3);
        assert!(matches!(emd(&big, &big), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn surface_samples_stay_on_the_surface_and_respect_area_weights() {
        // Two parallel quads with area ratio 1:3, distinguishable by z.
        let small = 0.5_f64; // half-extent -> area 1
        let large = small * 3.0_f64.sqrt(); // area 3
        let mesh = TriangleMesh::new(
            vec![
                Vector3::new(-small, -small, 0.0),
                Vector3::new(small, -small, 0.0),
                Vector3::new(small, small, 0.0),
                Vector3::new(-small, small, 0.0),
                Vector3::new(-large, -large, 1.0),
                Vector3::new(large, -large, 1.0),
                Vector3::new(large, large, 1.0),
                Vector3::new(-large, large, 1.0),
            ],
            vec![[0, 1, 2], [0, 2, 3], [4, 5, 6], [4, 6, 7]],
        )
        .unwrap();
        let n = 10_000;
        let points = sample_surface_points(&mesh, n, 7).unwrap();
        assert_eq!(points.len(), n);
        let mut upper = 0usize;
        for p in &points {
            // Barycentric combinations re-sum the plane coordinate, so allow
            // one ulp of slack around z = 0 and z = 1.
            let on_lower = p.z.abs() <= 1e-12;
            let on_upper = (p.z - 1.0).abs() <= 1e-12;
            assert!(on_lower || on_upper, "sample off the quads: {p:?}");
            let half = if on_lower { small } else { large };
            assert!(p.x.abs() <= half + 1e-12 && p.y.abs() <= half + 1e-12);
            if on_upper {
                upper += 1;
            }
        }
        // Expect 3/4 of samples on the large quad; 7500 +- 5 sigma (~217).
        assert!(
            (upper as f64 - 7500.0).abs() < 220.0,
            "area weighting off: {upper}/10000 on the large quad"
        );
    }

    #[test]
    fn surface_sampling_is_deterministic_and_validates() {
        let mesh = shapes::icosphere(0.3, 1);
        let a = sample_surface_points(&mesh, 50, 9).unwrap();
        let b = sample_surface_points(&mesh, 50, 9).unwrap();
        assert_eq!(a, b);
        let c = sample_surface_points(&mesh, 50, 10).unwrap();
        assert_ne!(a, c);
        assert!(sample_surface_points(&mesh, 0, 1).unwrap().is_empty());
        let empty = TriangleMesh::new(vec![], vec![]).unwrap();
        assert!(sample_surface_points(&empty, 5, 1).is_err());
        // Degenerate-only mesh: zero total area.
        let line = TriangleMesh::new(
            vec![
                Vector3::zeros(),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(2.0, 0.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!(matches!(
            sample_surface_points(&line, 5, 1),
            Err(Error::Degenerate(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn f_score_is_monotone_in_tau(seed in 0u64..1000, t1 in 0.01f64..1.0, t2 in 0.01f64..1.0) {
            let gt = random_cloud(24, seed);
            let pred = random_cloud(24, seed + 5000);
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let f_lo = f_score(&gt, &pred, lo).unwrap();
            let f_hi = f_score(&gt, &pred, hi).unwrap();
            prop_assert!(f_lo <= f_hi + 1e-12);
        }

        #[test]
        fn emd_satisfies_the_triangle_inequality(seed in 0u64..500, n in 2usize..10) {
            let p = random_cloud(n, seed * 3 + 1);
            let q = random_cloud(n, seed * 3 + 2);
            let r = random_cloud(n, seed * 3 + 3);
            let pq = emd(&p, &q).unwrap();
            let qr = emd(&q, &r).unwrap();
            let pr = emd(&p, &r).unwrap();
            prop_assert!(pr <= pq + qr + 1e-9);
        }
    }
}
