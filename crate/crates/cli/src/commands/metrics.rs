//! `metrics`: reconstruction quality between two meshes or two grids —
//! chamfer terms, F-scores at absolute or voxel-relative thresholds, exact
//! transport distance, and (for grids) masked mean absolute error.

use std::path::PathBuf;

use fus3d_core::grid::MaskGrid;
use fus3d_core::mesh::TriangleMesh;
use fus3d_core::metrics::{chamfer, emd, f_score, sample_surface_points, sdf_mae};
use fus3d_core::surface::marching_cubes;
use fus3d_core::vsdf::read_vsdf;
use fus3d_core::Error;

use crate::manifest::Manifest;
use crate::support::{is_vsdf, load_mesh, write_json, CliError, CliResult};

#[derive(Debug, clap::Args)]
pub struct MetricsArgs {
    /// Ground truth: a mesh (.obj/.ply) or a grid (.vsdf).
    pub gt: PathBuf,

    /// Prediction of the same kind as the ground truth.
    pub pred: PathBuf,

    /// Surface points sampled from each input for the point metrics.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,

    /// Absolute F-score distance thresholds.
    #[arg(long, num_args = 1..)]
    pub tau: Vec<f64>,

    /// F-score thresholds as multiples of the voxel size.
    #[arg(long, num_args = 1..)]
    pub tau_eps: Vec<f64>,

    /// Voxel size backing --tau-eps (required for mesh inputs; grids supply
    /// their own).
    #[arg(long)]
    pub eps: Option<f64>,

    /// Points per set for the exact transport distance (cost grows
    /// cubically with this).
    #[arg(long, default_value_t = 512)]
    pub emd_points: usize,

    /// Level set extracted from grid inputs before surface sampling.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub isovalue: f64,

    /// Output report JSON.
    #[arg(long)]
    pub out: PathBuf,
}

fn invalid(msg: String) -> CliError {
    CliError::Core(Error::InvalidInput(msg))
}

/// Observation mask for the error comparison: both grids observed, or
/// everywhere when neither grid carries a mask.
fn common_mask(a: Option<MaskGrid>, b: Option<MaskGrid>) -> CliResult<Option<MaskGrid>> {
    Ok(match (a, b) {
        (Some(a), Some(b)) => Some(a.intersect(&b)?),
        (Some(a), None) => Some(a),
        (None, Some(b)) => Some(b),
        (None, None) => None,
    })
}

pub fn run(args: &MetricsArgs, seed: u64, manifest: &mut Manifest) -> CliResult<()> {
    if is_vsdf(&args.gt) != is_vsdf(&args.pred) {
        return Err(invalid(
            "compare two meshes or two grids, not a mesh against a grid".into(),
        ));
    }
    manifest.input(&args.gt)?;
    manifest.input(&args.pred)?;
    manifest.param("samples", args.samples);
    manifest.param("emd_points", args.emd_points);

    let mut report = serde_json::Map::new();
    let eps;
    let gt_mesh: TriangleMesh;
    let pred_mesh: TriangleMesh;

    if is_vsdf(&args.gt) {
        let (gt_grid, gt_mask) = read_vsdf(&args.gt)?;
        let (pred_grid, pred_mask) = read_vsdf(&args.pred)?;
        let mv = common_mask(gt_mask.clone(), pred_mask.clone())?
            .unwrap_or_else(|| MaskGrid::filled(gt_grid.spec, true));
        let (mae, mae_count) = sdf_mae(&pred_grid, &gt_grid, &mv)?;
        report.insert("sdf_mae".into(), serde_json::json!(mae));
        report.insert("sdf_mae_count".into(), serde_json::json!(mae_count));
        eps = Some(args.eps.unwrap_or(gt_grid.spec.voxel_size));
        manifest.param("isovalue", args.isovalue);
        gt_mesh = marching_cubes(&gt_grid, gt_mask.as_ref(), args.isovalue)?;
        pred_mesh = marching_cubes(&pred_grid, pred_mask.as_ref(), args.isovalue)?;
    } else {
        eps = args.eps;
        gt_mesh = load_mesh(&args.gt)?;
        pred_mesh = load_mesh(&args.pred)?;
    }

    // The same seed on both sides makes a perfect prediction score exactly
    // zero: identical geometry yields identical sample sets.
    let gt_pts = sample_surface_points(&gt_mesh, args.samples, seed)?;
    let pred_pts = sample_surface_points(&pred_mesh, args.samples, seed)?;

    let cd = chamfer(&gt_pts, &pred_pts)?;
    report.insert("cd".into(), serde_json::json!(cd.cd));
    report.insert("d_gt2p".into(), serde_json::json!(cd.d_gt2p));
    report.insert("d_p2gt".into(), serde_json::json!(cd.d_p2gt));

    let mut thresholds: Vec<(String, f64)> = args
        .tau
        .iter()
        .map(|&t| (format!("f@{t}"), t))
        .collect();
    if !args.tau_eps.is_empty() {
        let eps = eps.ok_or_else(|| {
            invalid("--tau-eps needs --eps when the inputs are meshes".into())
        })?;
        thresholds.extend(args.tau_eps.iter().map(|&m| (format!("f@{m}eps"), m * eps)));
    }
    if thresholds.is_empty() {
        match eps {
            Some(eps) => {
                thresholds.push(("f@0.5eps".into(), 0.5 * eps));
                thresholds.push(("f@1eps".into(), eps));
            }
            None => thresholds.push(("f@0.01".into(), 0.01)),
        }
    }
    for (key, tau) in &thresholds {
        report.insert(key.clone(), serde_json::json!(f_score(&gt_pts, &pred_pts, *tau)?));
    }

    let m = args.emd_points.min(args.samples);
    if m == 0 {
        return Err(invalid("need at least one point for the metrics".into()));
    }
    report.insert("emd".into(), serde_json::json!(emd(&gt_pts[..m], &pred_pts[..m])?));
    if let Some(eps) = eps {
        report.insert("eps".into(), serde_json::json!(eps));
    }

    let report = serde_json::Value::Object(report);
    write_json(&args.out, &report, "metrics JSON")?;
    manifest.output(&args.out)?;
    manifest.write_beside(&args.out)?;

    println!("{report}");
    Ok(())
}
