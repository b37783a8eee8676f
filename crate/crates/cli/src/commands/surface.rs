//! `surface`: marching-cubes extraction of a level set from a grid.

use std::path::PathBuf;

use fus3d_core::surface::marching_cubes;
use fus3d_core::vsdf::read_vsdf;

use crate::manifest::Manifest;
use crate::support::{save_mesh, CliResult};

#[derive(Debug, clap::Args)]
pub struct SurfaceArgs {
    /// Input grid (VSDF1).
    pub grid: PathBuf,

    /// Level set to extract.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub isovalue: f64,

    /// Triangulate every cell, even where the mask marks voxels unobserved.
    #[arg(long)]
    pub ignore_mask: bool,

    /// Output mesh (.obj or .ply).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &SurfaceArgs, manifest: &mut Manifest) -> CliResult<()> {
    let (grid, mask) = read_vsdf(&args.grid)?;
    manifest.input(&args.grid)?;
    manifest.param("isovalue", args.isovalue);
    manifest.param("ignore_mask", args.ignore_mask);

    let mask_ref = if args.ignore_mask { None } else { mask.as_ref() };
    let mesh = marching_cubes(&grid, mask_ref, args.isovalue)?;
    save_mesh(&args.out, &mesh)?;
    manifest.output(&args.out)?;
    manifest.write_beside(&args.out)?;

    let summary = serde_json::json!({
        "out": args.out,
        "vertices": mesh.vertex_count(),
        "triangles": mesh.triangle_count(),
    });
    println!("{summary}");
    Ok(())
}
