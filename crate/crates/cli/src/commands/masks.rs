//! `masks`: derive the local-smoothness reliability mask of a grid and
//! store it in the grid's mask channel.

use std::path::PathBuf;

use fus3d_core::grid::build_eikonal_mask;
use fus3d_core::vsdf::{read_vsdf, write_vsdf};

use crate::manifest::Manifest;
use crate::support::CliResult;

#[derive(Debug, clap::Args)]
pub struct MasksArgs {
    /// Input grid (VSDF1).
    pub grid: PathBuf,

    /// Box side of the max-pool over the gradient-norm field (odd).
    #[arg(long, default_value_t = 5)]
    pub kernel: usize,

    /// Keep voxels whose pooled gradient norm stays at or below this.
    #[arg(long, default_value_t = 2.0)]
    pub threshold: f64,

    /// Output grid: same values, mask channel replaced by the reliability
    /// mask (intersected with the input's observation mask if present).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &MasksArgs, manifest: &mut Manifest) -> CliResult<()> {
    let (grid, observed) = read_vsdf(&args.grid)?;
    manifest.input(&args.grid)?;
    manifest.param("kernel", args.kernel);
    manifest.param("threshold", args.threshold);

    let mut mask = build_eikonal_mask(&grid, args.kernel, args.threshold)?;
    if let Some(observed) = &observed {
        mask = mask.intersect(observed)?;
    }
    write_vsdf(&args.out, &grid, Some(&mask))?;
    manifest.output(&args.out)?;
    manifest.write_beside(&args.out)?;

    let summary = serde_json::json!({
        "out": args.out,
        "kept": mask.count_true(),
        "voxels": grid.spec.len(),
    });
    println!("{summary}");
    Ok(())
}
