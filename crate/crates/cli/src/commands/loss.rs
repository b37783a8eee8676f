//! `loss`: evaluate the masked supervision objective between a predicted
//! and a ground-truth grid, with an optional near-surface sample term.

use std::path::PathBuf;

use fus3d_core::grid::{build_eikonal_mask, trilinear_sample, MaskGrid};
use fus3d_core::losses::{total_loss, LossWeights};
use fus3d_core::mesh::SurfaceSamples;
use fus3d_core::vsdf::read_vsdf;
use fus3d_core::Error;

use crate::manifest::Manifest;
use crate::support::{read_json, write_json, CliError, CliResult, SamplesJson};

#[derive(Debug, clap::Args)]
pub struct LossArgs {
    /// Predicted grid (VSDF1).
    pub pred: PathBuf,

    /// Ground-truth grid (VSDF1); its mask channel is the observation mask.
    pub gt: PathBuf,

    /// Grid whose mask channel is the reliability mask (defaults to
    /// deriving one from the ground truth: kernel 5, threshold 2).
    #[arg(long)]
    pub me: Option<PathBuf>,

    /// Near-surface samples JSON enabling the surface term.
    #[arg(long)]
    pub samples: Option<PathBuf>,

    /// Weight of the near-surface sample term.
    #[arg(long, default_value_t = 1.0)]
    pub lambda_s: f64,

    /// Weight of the full-grid distance term.
    #[arg(long, default_value_t = 1.0)]
    pub lambda_c: f64,

    /// Weight of the gradient-matching term.
    #[arg(long, default_value_t = 1.0)]
    pub lambda_g: f64,

    /// Weight of the unit-gradient regularizer.
    #[arg(long, default_value_t = 1.0)]
    pub lambda_e: f64,

    /// Output report JSON.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &LossArgs, manifest: &mut Manifest) -> CliResult<()> {
    let (pred, _) = read_vsdf(&args.pred)?;
    let (gt, gt_mask) = read_vsdf(&args.gt)?;
    manifest.input(&args.pred)?;
    manifest.input(&args.gt)?;

    let mv = gt_mask.unwrap_or_else(|| MaskGrid::filled(gt.spec, true));
    let me = match &args.me {
        Some(path) => {
            manifest.input(path)?;
            let (_, mask) = read_vsdf(path)?;
            mask.ok_or_else(|| {
                CliError::Core(Error::InvalidInput(format!(
                    "{} carries no mask channel to use as the reliability mask",
                    path.display()
                )))
            })?
        }
        None => build_eikonal_mask(&gt, 5, 2.0)?.intersect(&mv)?,
    };

    let (surface, pred_at_surface) = match &args.samples {
        Some(path) => {
            manifest.input(path)?;
            let json: SamplesJson = read_json(path, "samples JSON")?;
            let surface: SurfaceSamples = json.try_into()?;
            let values = trilinear_sample(&pred, &surface.points, true)?;
            (surface, values)
        }
        None => (
            SurfaceSamples {
                points: Vec::new(),
                gt_sdf: Vec::new(),
                signed: true,
            },
            Vec::new(),
        ),
    };

    let weights = LossWeights {
        lambda_s: args.lambda_s,
        lambda_c: args.lambda_c,
        lambda_g: args.lambda_g,
        lambda_e: args.lambda_e,
    };
    manifest.param("weights", weights);

    let report = total_loss(&pred, &gt, &mv, &me, &surface, &pred_at_surface, &weights)?;
    write_json(&args.out, &report, "loss report JSON")?;
    manifest.output(&args.out)?;
    manifest.write_beside(&args.out)?;

    println!("{}", serde_json::json!(report));
    Ok(())
}
