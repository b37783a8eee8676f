//! Acceptance gate: one test per shipping criterion, each printing a single
//! `criterion N (...): PASS` / `FAIL` line. Tolerances are pinned here and
//! checked against independent oracles (analytic geometry, exhaustive
//! search, factorial enumeration) rather than against the library itself.

use std::time::Instant;

use nalgebra::{Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fus3d_core::align::{icp_refine, umeyama_align, SimilarityTransform};
use fus3d_core::camera::orbit_cameras;
use fus3d_core::grid::{build_eikonal_mask, finite_diff_gradient, GridSpec, MaskGrid, VoxelGrid};
use fus3d_core::lift::{canonical_embedding, decode_sdf, extract, LatentVolume, LiftConfig, TokenSet};
use fus3d_core::losses::{loss_sdf, total_loss, LossWeights};
use fus3d_core::mesh::{
    mesh_sdf_grid, sample_near_surface, shapes, sign_by_parity, unsigned_distance, SurfaceSamples,
    TriangleMesh,
};
use fus3d_core::metrics::{chamfer, emd, f_score, sample_surface_points};
use fus3d_core::render::render_depth;
use fus3d_core::surface::marching_cubes;
use fus3d_core::tsdf::{default_truncation, fuse_tsdf};

fn check(n: usize, label: &str, body: impl FnOnce() -> Result<(), String>) {
    match body() {
        Ok(()) => println!("criterion {n} ({label}): PASS"),
        Err(msg) => {
            println!("criterion {n} ({label}): FAIL - {msg}");
            panic!("criterion {n} ({label}) failed: {msg}");
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !($cond) {
            return Err(format!($($arg)+));
        }
    };
}

fn fail(e: fus3d_core::Error) -> String {
    e.to_string()
}

fn unit_box_spec(dims: usize) -> GridSpec {
    GridSpec::cell_centered([dims; 3], Vector3::repeat(-0.5), Vector3::repeat(0.5)).unwrap()
}

fn uniform_cloud(n: usize, seed: u64) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
        })
        .collect()
}

#[test]
fn criterion_1_mesh_distance_oracle() {
    check(1, "mesh SDF matches the analytic sphere", || {
        let mesh = shapes::icosphere(0.25, 3);
        ensure!(
            mesh.triangle_count() == 1280,
            "fixture has {} triangles, wanted 1280",
            mesh.triangle_count()
        );
        let spec = unit_box_spec(32);

        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| e.to_string())?;
        let start = Instant::now();
        let (grid, mask) = pool.install(|| mesh_sdf_grid(&mesh, &spec, 9)).map_err(fail)?;
        let elapsed = start.elapsed();
        ensure!(
            elapsed.as_secs_f64() < 10.0,
            "single-threaded 32^3 evaluation took {elapsed:?}, budget is 10 s"
        );
        ensure!(
            mask.count_true() == spec.len(),
            "a mesh-derived field must be observed everywhere"
        );

        // The faceted sphere sags inward by at most (radius - the closest
        // face-plane distance); that gap bounds how far the mesh distance
        // may drift from the analytic one.
        let mut min_face = f64::INFINITY;
        for t in 0..mesh.triangle_count() {
            let [a, b, c] = mesh.triangle_vertices(t);
            let n = (b - a).cross(&(c - a));
            min_face = min_face.min(a.dot(&n).abs() / n.norm());
        }
        let chord_bound = 0.25 - min_face;

        let mut max_err: f64 = 0.0;
        for idx in 0..spec.len() {
            let (i, j, k) = spec.unindex(idx);
            let analytic = spec.center(i, j, k).norm() - 0.25;
            max_err = max_err.max((grid.get(i, j, k) - analytic).abs());
        }
        ensure!(
            max_err <= chord_bound + 1e-6,
            "max |computed - analytic| = {max_err:.3e} exceeds chord bound {chord_bound:.3e} + 1e-6"
        );

        let eps = spec.voxel_size;
        let centers: Vec<Vector3<f64>> = (0..spec.len())
            .map(|idx| {
                let (i, j, k) = spec.unindex(idx);
                spec.center(i, j, k)
            })
            .collect();
        let signs = sign_by_parity(&mesh, &centers, 9).map_err(fail)?;
        for (p, &conf) in centers.iter().zip(&signs.confidence) {
            if (p.norm() - 0.25).abs() > eps {
                ensure!(
                    conf == 1.0,
                    "vote confidence {conf} < 1 at {p:?}, {:.3e} away from the surface",
                    (p.norm() - 0.25).abs()
                );
            }
        }
        Ok(())
    });
}

/// Exact point-segment distance, used by the exhaustive oracle.
fn segment_distance(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_squared();
    let t = if len_sq == 0.0 {
        0.0
    } else {
        ((p - a).dot(&ab) / len_sq).clamp(0.0, 1.0)
    };
    (a + ab * t - p).norm()
}

/// Independent point-triangle distance: the closest point is either the
/// in-plane projection (when its barycentric coordinates are non-negative)
/// or a point on one of the three edges.
fn triangle_distance_oracle(
    p: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> f64 {
    let mut best = segment_distance(p, a, b)
        .min(segment_distance(p, b, c))
        .min(segment_distance(p, c, a));
    let n = (b - a).cross(&(c - a));
    let n_sq = n.norm_squared();
    if n_sq > 0.0 {
        let q = p - n * ((p - a).dot(&n) / n_sq);
        let inside = (b - a).cross(&(q - a)).dot(&n) >= 0.0
            && (c - b).cross(&(q - b)).dot(&n) >= 0.0
            && (a - c).cross(&(q - c)).dot(&n) >= 0.0;
        if inside {
            best = best.min(((p - a).dot(&n)).abs() / n_sq.sqrt());
        }
    }
    best
}

#[test]
fn criterion_2_brute_force_equivalence() {
    check(2, "accelerated queries match exhaustive search", || {
        let mesh = shapes::icosphere(0.25, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let queries: Vec<Vector3<f64>> = (0..200)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-0.6..0.6),
                    rng.random_range(-0.6..0.6),
                    rng.random_range(-0.6..0.6),
                )
            })
            .collect();
        let fast = unsigned_distance(&mesh, &queries).map_err(fail)?;
        for (qi, (p, f)) in queries.iter().zip(&fast).enumerate() {
            let mut brute = f64::INFINITY;
            for t in 0..mesh.triangle_count() {
                let [a, b, c] = mesh.triangle_vertices(t);
                brute = brute.min(triangle_distance_oracle(p, &a, &b, &c));
            }
            ensure!(
                (f - brute).abs() <= 1e-6 * brute.max(1e-9),
                "query {qi}: accelerated {f} vs exhaustive {brute}"
            );
        }

        let a = uniform_cloud(512, 51);
        let b = uniform_cloud(512, 52);
        let report = chamfer(&a, &b).map_err(fail)?;
        let directed = |from: &[Vector3<f64>], to: &[Vector3<f64>]| -> f64 {
            let total: f64 = from
                .iter()
                .map(|p| to.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
                .sum();
            total / from.len() as f64
        };
        let d_ab = directed(&a, &b);
        let d_ba = directed(&b, &a);
        ensure!(
            (report.d_gt2p - d_ab).abs() <= 1e-9,
            "directed gt->pred {} vs quadratic oracle {d_ab}",
            report.d_gt2p
        );
        ensure!(
            (report.d_p2gt - d_ba).abs() <= 1e-9,
            "directed pred->gt {} vs quadratic oracle {d_ba}",
            report.d_p2gt
        );
        ensure!(
            (report.cd - (d_ab + d_ba) / 2.0).abs() <= 1e-9,
            "chamfer {} vs quadratic oracle {}",
            report.cd,
            (d_ab + d_ba) / 2.0
        );

        let tau = 0.1;
        let f = f_score(&a, &b, tau).map_err(fail)?;
        let covered = |from: &[Vector3<f64>], to: &[Vector3<f64>]| -> f64 {
            let hits = from
                .iter()
                .filter(|p| to.iter().any(|q| (*p - q).norm_squared() <= tau * tau))
                .count();
            hits as f64 / from.len() as f64
        };
        let precision = covered(&b, &a);
        let recall = covered(&a, &b);
        let oracle = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ensure!(
            (f - oracle).abs() <= 1e-9,
            "f-score {f} vs quadratic oracle {oracle}"
        );
        Ok(())
    });
}

#[test]
fn criterion_3_field_validity() {
    check(3, "unit gradients and fusion overestimation", || {
        let mesh = shapes::icosphere(0.25, 3);
        let spec = unit_box_spec(32);
        let (grid, _) = mesh_sdf_grid(&mesh, &spec, 9).map_err(fail)?;
        let eps = spec.voxel_size;
        let grad = finite_diff_gradient(&grid).map_err(fail)?;
        let mut residuals = Vec::new();
        for idx in 0..spec.len() {
            let (i, j, k) = spec.unindex(idx);
            let p = spec.center(i, j, k);
            // The gradient is undefined at the sphere center and kinked at
            // the surface; stay three voxels away from both.
            if (p.norm() - 0.25).abs() <= 3.0 * eps || p.norm() <= 3.0 * eps {
                continue;
            }
            let r = grad.get(i, j, k).norm() - 1.0;
            residuals.push(r * r);
        }
        ensure!(!residuals.is_empty(), "the residual mask kept no voxels");
        let mean = residuals.iter().sum::<f64>() / residuals.len() as f64;
        ensure!(
            mean <= 0.01,
            "mean unit-gradient residual {mean:.3e} > 0.01 over {} voxels",
            residuals.len()
        );

        // The depth maps image the faceted mesh, so overestimation is
        // measured against the mesh's own distance field (the analytic
        // sphere differs by the chord sag, which is what the renders see).
        let spec64 = unit_box_spec(64);
        let (sdf64, _) = mesh_sdf_grid(&mesh, &spec64, 9).map_err(fail)?;
        let cameras = orbit_cameras(24, 2.0, Vector3::zeros(), 256, 256).map_err(fail)?;
        let depths = cameras
            .iter()
            .map(|c| render_depth(&mesh, c))
            .collect::<fus3d_core::Result<Vec<_>>>()
            .map_err(fail)?;
        let tau = default_truncation(&spec64);
        let (tsdf, observed) = fuse_tsdf(&depths, &spec64, tau, 1).map_err(fail)?;
        let mut band = 0usize;
        let mut over = 0usize;
        for idx in 0..spec64.len() {
            let (i, j, k) = spec64.unindex(idx);
            if !observed.get(i, j, k) || sdf64.get(i, j, k).abs() >= tau {
                continue;
            }
            band += 1;
            if tsdf.get(i, j, k).abs() >= sdf64.get(i, j, k).abs() - 1e-6 {
                over += 1;
            }
        }
        ensure!(band > 0, "fusion produced no in-band voxels");
        let frac = over as f64 / band as f64;
        ensure!(
            frac >= 0.99,
            "projective overestimation holds at {over}/{band} = {frac:.4} of band voxels, needs >= 0.99"
        );
        Ok(())
    });
}

#[test]
fn criterion_4_mask_excision() {
    check(4, "sign-flip exclusion and unsigned fallback", || {
        let spec = unit_box_spec(16);
        let eps = spec.voxel_size;
        // A plane field whose corner voxel holds exactly 0.75 * eps. After
        // the flip, the corner's one-sided stencil sees a gradient norm of
        // sqrt(10.75) > 2 while its face neighbors stay at 1.75 and 1.25,
        // so pooling excludes the corner's Chebyshev-2 ball and nothing else.
        let shift = 0.75 * eps - spec.center(0, 0, 0).x;
        let clean = VoxelGrid::from_fn(spec, |p| p.x + shift);
        let full = build_eikonal_mask(&clean, 5, 2.0).map_err(fail)?;
        ensure!(
            full.count_true() == spec.len(),
            "the clean plane field should keep every voxel"
        );

        let mut flipped = clean.clone();
        flipped.set(0, 0, 0, -flipped.get(0, 0, 0));
        let mask = build_eikonal_mask(&flipped, 5, 2.0).map_err(fail)?;
        let mut excluded = Vec::new();
        for idx in 0..spec.len() {
            let (i, j, k) = spec.unindex(idx);
            let chebyshev = i.max(j).max(k);
            if chebyshev <= 2 {
                ensure!(
                    !mask.get(i, j, k),
                    "voxel ({i},{j},{k}) at Chebyshev distance {chebyshev} must be excluded"
                );
                excluded.push((i, j, k));
            } else {
                ensure!(
                    mask.get(i, j, k),
                    "voxel ({i},{j},{k}) at Chebyshev distance {chebyshev} must stay reliable"
                );
            }
        }
        ensure!(excluded.len() == 27, "expected the 3^3 corner ball, got {}", excluded.len());

        // Over the excluded region the magnitudes still agree, so the
        // unsigned fallback sees no error at all.
        let pred: Vec<f64> = excluded.iter().map(|&(i, j, k)| flipped.get(i, j, k)).collect();
        let gt: Vec<f64> = excluded.iter().map(|&(i, j, k)| clean.get(i, j, k)).collect();
        let reliable = vec![false; pred.len()];
        let (value, count) = loss_sdf(&pred, &gt, &reliable).map_err(fail)?;
        ensure!(
            count == pred.len() && value == 0.0,
            "unsigned fallback gave {value} over {count} voxels, wanted exactly 0"
        );
        Ok(())
    });
}

#[test]
fn criterion_5_loss_identities() {
    check(5, "objective identities and determinism", || {
        let mesh = shapes::icosphere(0.25, 2);
        let spec = unit_box_spec(16);
        let (gt, mv) = mesh_sdf_grid(&mesh, &spec, 9).map_err(fail)?;
        let me = build_eikonal_mask(&gt, 5, 2.0).map_err(fail)?;
        let surface = sample_near_surface(&mesh, 64, 2.0 * spec.voxel_size, 5).map_err(fail)?;
        let weights = LossWeights::default();

        let report = total_loss(&gt, &gt, &mv, &me, &surface, &surface.gt_sdf, &weights)
            .map_err(fail)?;
        ensure!(
            report.l_sdf_surface == 0.0 && report.l_sdf_grid == 0.0 && report.l_grad == 0.0,
            "a perfect prediction must zero both SDF terms and the gradient term, got {report:?}"
        );

        // Sign flips under an empty reliability mask: the fallback compares
        // magnitudes, which are untouched.
        let mut pred = gt.clone();
        for idx in (0..spec.len()).step_by(7) {
            let (i, j, k) = spec.unindex(idx);
            pred.set(i, j, k, -pred.get(i, j, k));
        }
        let none = MaskGrid::filled(spec, false);
        let no_samples = SurfaceSamples {
            points: Vec::new(),
            gt_sdf: Vec::new(),
            signed: true,
        };
        let flipped = total_loss(&pred, &gt, &mv, &none, &no_samples, &[], &weights)
            .map_err(fail)?;
        ensure!(
            flipped.l_sdf_grid == 0.0,
            "unsigned SDF term saw the sign flips: {}",
            flipped.l_sdf_grid
        );
        ensure!(
            flipped.l_grad == 0.0,
            "the gradient term must ignore voxels outside the reliability mask"
        );

        let zero = LossWeights {
            lambda_s: 0.0,
            lambda_c: 0.0,
            lambda_g: 0.0,
            lambda_e: 0.0,
        };
        let zeroed = total_loss(&pred, &gt, &mv, &none, &no_samples, &[], &zero).map_err(fail)?;
        ensure!(zeroed.total == 0.0, "zero weights must zero the total, got {}", zeroed.total);

        let again = total_loss(&gt, &gt, &mv, &me, &surface, &surface.gt_sdf, &weights)
            .map_err(fail)?;
        ensure!(
            report.total.to_bits() == again.total.to_bits()
                && report.l_eik.to_bits() == again.l_eik.to_bits()
                && report.l_sdf_surface.to_bits() == again.l_sdf_surface.to_bits(),
            "reruns must agree bit for bit: {report:?} vs {again:?}"
        );
        Ok(())
    });
}

/// Deterministic quasi-uniform directions (golden-angle spiral).
fn fibonacci_sphere(n: usize) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let t = golden * i as f64;
            Vector3::new(r * t.cos(), y, r * t.sin())
        })
        .collect()
}

#[test]
fn criterion_6_surface_round_trip() {
    check(6, "isosurface accuracy and isovalue shift", || {
        let spec = unit_box_spec(64);
        let eps = spec.voxel_size;
        let grid = VoxelGrid::from_fn(spec, |p| p.norm() - 0.25);
        let base = marching_cubes(&grid, None, 0.0).map_err(fail)?;
        ensure!(!base.is_empty(), "the zero level set must intersect the grid");

        let from_mesh = sample_surface_points(&base, 4000, 6).map_err(fail)?;
        let mesh_to_sphere = from_mesh
            .iter()
            .map(|p| (p.norm() - 0.25).abs())
            .sum::<f64>()
            / from_mesh.len() as f64;
        let on_sphere: Vec<Vector3<f64>> =
            fibonacci_sphere(4000).iter().map(|d| d * 0.25).collect();
        let sphere_dists = unsigned_distance(&base, &on_sphere).map_err(fail)?;
        let sphere_to_mesh = sphere_dists.iter().sum::<f64>() / sphere_dists.len() as f64;
        let cd = (mesh_to_sphere + sphere_to_mesh) / 2.0;
        ensure!(
            cd < 0.5 * eps,
            "chamfer {cd:.3e} to the analytic sphere exceeds half a voxel ({:.3e})",
            0.5 * eps
        );

        let mean_radius = |m: &TriangleMesh| {
            m.vertices().iter().map(|v| v.norm()).sum::<f64>() / m.vertex_count() as f64
        };
        let shifted = marching_cubes(&grid, None, 0.5 * eps).map_err(fail)?;
        let delta = mean_radius(&shifted) - mean_radius(&base);
        ensure!(
            (delta - 0.5 * eps).abs() <= 0.1 * eps,
            "isovalue +0.5 eps moved the mean radius by {delta:.3e}, wanted {:.3e} +/- {:.3e}",
            0.5 * eps,
            0.1 * eps
        );
        Ok(())
    });
}

#[test]
fn criterion_7_alignment() {
    check(7, "similarity recovery and rigid refinement", || {
        let cameras = orbit_cameras(10, 2.0, Vector3::zeros(), 64, 64).map_err(fail)?;
        let centers: Vec<Vector3<f64>> = cameras.iter().map(|c| c.position()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for trial in 0..5 {
            let scale = rng.random_range(0.5..=2.0);
            let axis = Unit::new_normalize(Vector3::new(
                rng.random_range(0.2..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ));
            let angle = rng.random_range(0.0..std::f64::consts::PI);
            let rotation = *Rotation3::from_axis_angle(&axis, angle).matrix();
            let translation = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let truth =
                SimilarityTransform::new(scale, rotation, translation).map_err(fail)?;
            let dst = truth.apply_points(&centers);
            let estimate = umeyama_align(&centers, &dst).map_err(fail)?;
            let mapped = estimate.apply_points(&centers);
            let rms = (mapped
                .iter()
                .zip(&dst)
                .map(|(m, d)| (m - d).norm_squared())
                .sum::<f64>()
                / centers.len() as f64)
                .sqrt();
            ensure!(
                rms <= 1e-9,
                "trial {trial}: similarity recovery RMS {rms:.3e} > 1e-9 (scale {scale:.3})"
            );
        }

        // Rigid refinement from a 5 degree / 0.05 world-unit offset.
        let cloud = shapes::icosphere(0.3, 2).vertices().to_vec();
        let angle = 5.0_f64.to_radians();
        let rotation = *Rotation3::from_euler_angles(angle, angle, 0.0).matrix();
        let truth =
            SimilarityTransform::new(1.0, rotation, Vector3::repeat(0.05)).map_err(fail)?;
        let dst = truth.apply_points(&cloud);
        let result = icp_refine(&cloud, &dst, &SimilarityTransform::identity(), 50, 0.0)
            .map_err(fail)?;
        let final_rms = *result.rms_history.last().unwrap();
        ensure!(
            final_rms < 1e-6,
            "refinement stalled at RMS {final_rms:.3e} after {} iterations",
            result.rms_history.len() - 1
        );
        ensure!(
            result.rms_history.len() - 1 <= 50,
            "refinement used {} iterations, cap is 50",
            result.rms_history.len() - 1
        );
        ensure!(
            result.rms_history.windows(2).all(|w| w[1] <= w[0]),
            "per-iteration RMS must be non-increasing: {:?}",
            result.rms_history
        );
        ensure!(!result.diverged, "refinement lost its correspondences");
        Ok(())
    });
}

fn volumes_close(a: &LatentVolume, b: &LatentVolume, tol: f64) -> Result<(), String> {
    for (x, y) in a.data().iter().zip(b.data()) {
        let scale = x.abs().max(y.abs()).max(1.0);
        if (x - y).abs() > tol * scale {
            return Err(format!("volumes differ beyond {tol}: {x} vs {y}"));
        }
    }
    Ok(())
}

#[test]
fn criterion_8_lifting_mechanism() {
    check(8, "multi-view lifting shapes and invariances", || {
        let config = LiftConfig::default();
        ensure!(
            config.n_blocks() == 8 && config.latent_dim == 32 && config.latent_extent == 4,
            "toy configuration drifted: {config:?}"
        );
        let init = canonical_embedding(&config).map_err(fail)?;
        for n_views in [1usize, 2, 8] {
            let tokens =
                TokenSet::synthetic(config.n_stages, n_views, 5, config.latent_dim, 7)
                    .map_err(fail)?;
            let volume = extract(&init, &tokens, &config).map_err(fail)?;
            ensure!(
                volume.token_count() == 64 && volume.dim() == 32,
                "latent volume shape broke for {n_views} views"
            );
            let grid = decode_sdf(&volume).map_err(fail)?;
            ensure!(
                grid.spec.dims == [16, 16, 16],
                "decoded grid is {:?} for {n_views} views, wanted 16^3",
                grid.spec.dims
            );
        }

        // Scrambling the concatenated (view, token) rows of every stage must
        // not change the attention output.
        let tokens =
            TokenSet::synthetic(config.n_stages, 2, 5, config.latent_dim, 21).map_err(fail)?;
        let base = extract(&init, &tokens, &config).map_err(fail)?;
        let rows = tokens.n_views() * tokens.tokens_per_view();
        let mut perm: Vec<usize> = (0..rows).rev().collect();
        perm.swap(0, 3);
        let d = tokens.dim();
        let mut permuted = Vec::with_capacity(tokens.data().len());
        for stage in 0..tokens.n_stages() {
            let src = tokens.stage(stage);
            for &row in &perm {
                permuted.extend_from_slice(&src[row * d..(row + 1) * d]);
            }
        }
        let permuted = TokenSet::new(
            tokens.n_stages(),
            tokens.n_views(),
            tokens.tokens_per_view(),
            d,
            permuted,
        )
        .map_err(fail)?;
        let shuffled = extract(&init, &permuted, &config).map_err(fail)?;
        volumes_close(&base, &shuffled, 1e-5)
            .map_err(|m| format!("row permutation changed the output: {m}"))?;

        // Feeding every view twice must not change the output either.
        let mut doubled = Vec::with_capacity(tokens.data().len() * 2);
        for stage in 0..tokens.n_stages() {
            let src = tokens.stage(stage);
            doubled.extend_from_slice(src);
            doubled.extend_from_slice(src);
        }
        let doubled = TokenSet::new(
            tokens.n_stages(),
            tokens.n_views() * 2,
            tokens.tokens_per_view(),
            d,
            doubled,
        )
        .map_err(fail)?;
        let dup_out = extract(&init, &doubled, &config).map_err(fail)?;
        volumes_close(&base, &dup_out, 1e-5)
            .map_err(|m| format!("view duplication changed the output: {m}"))?;

        // End-to-end toy pipeline budget.
        let start = Instant::now();
        let timed_init = canonical_embedding(&config).map_err(fail)?;
        let timed_tokens =
            TokenSet::synthetic(config.n_stages, 2, 5, config.latent_dim, 9).map_err(fail)?;
        let timed_volume = extract(&timed_init, &timed_tokens, &config).map_err(fail)?;
        let timed_grid = decode_sdf(&timed_volume).map_err(fail)?;
        let elapsed = start.elapsed();
        ensure!(
            timed_grid.spec.dims == [16, 16, 16],
            "timed pipeline produced {:?}",
            timed_grid.spec.dims
        );
        ensure!(
            elapsed.as_secs_f64() < 1.0,
            "toy pipeline took {elapsed:?}, budget is 1 s"
        );

        // Published-scale configuration: structural dry run only.
        let full = LiftConfig::full_scale();
        full.validate().map_err(fail)?;
        ensure!(
            full.token_count() == 4096 && full.latent_dim == 2048 && full.output_extent() == 64,
            "full-scale arithmetic drifted: {full:?}"
        );
        let embedding = canonical_embedding(&full).map_err(fail)?;
        ensure!(
            embedding.token_count() == 4096 && embedding.dim() == 2048,
            "full-scale embedding shape is {} x {}",
            embedding.token_count(),
            embedding.dim()
        );
        Ok(())
    });
}

fn for_each_permutation(items: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        for_each_permutation(items, k + 1, visit);
        items.swap(k, i);
    }
}

#[test]
fn criterion_9_exact_transport() {
    check(9, "assignment matches factorial enumeration", || {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..3 {
            let mut draw = || -> Vec<Vector3<f64>> {
                (0..8)
                    .map(|_| {
                        Vector3::new(
                            rng.random_range(-1.0..1.0),
                            rng.random_range(-1.0..1.0),
                            rng.random_range(-1.0..1.0),
                        )
                    })
                    .collect()
            };
            let a = draw();
            let b = draw();
            let got = emd(&a, &b).map_err(fail)?;

            let cost: Vec<Vec<f64>> = a
                .iter()
                .map(|p| b.iter().map(|q| (p - q).norm()).collect())
                .collect();
            let mut order: Vec<usize> = (0..8).collect();
            let mut best = f64::INFINITY;
            for_each_permutation(&mut order, 0, &mut |perm| {
                let mut total = 0.0;
                for (i, &j) in perm.iter().enumerate() {
                    total += cost[i][j];
                }
                best = best.min(total);
            });
            let oracle = best / 8.0;
            ensure!(
                got == oracle,
                "trial {trial}: transport distance {got} differs from the factorial minimum {oracle}"
            );
        }
        Ok(())
    });
}
