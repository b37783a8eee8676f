//! `carve`: drop mesh surface no exterior ray can reach, after subdividing
//! triangles to the working granularity.

use std::path::PathBuf;

use fus3d_core::mesh::carve_visible;

use crate::manifest::Manifest;
use crate::support::{load_mesh, save_mesh, CliResult};

#[derive(Debug, clap::Args)]
pub struct CarveArgs {
    /// Input mesh (.obj or .ply).
    pub mesh: PathBuf,

    /// Working granularity: triangles are subdivided until their longest
    /// edge is at most four times this value.
    #[arg(long)]
    pub epsilon: f64,

    /// Exterior visibility rays.
    #[arg(long, default_value_t = 200_000)]
    pub n_rays: usize,

    /// Output mesh (.obj or .ply).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &CarveArgs, seed: u64, manifest: &mut Manifest) -> CliResult<()> {
    let mesh = load_mesh(&args.mesh)?;
    manifest.input(&args.mesh)?;
    manifest.param("epsilon", args.epsilon);
    manifest.param("n_rays", args.n_rays);

    let carved = carve_visible(&mesh, args.epsilon, args.n_rays, seed)?;
    save_mesh(&args.out, &carved)?;
    manifest.output(&args.out)?;
    manifest.write_beside(&args.out)?;

    let summary = serde_json::json!({
        "out": args.out,
        "triangles_in": mesh.triangle_count(),
        "triangles_out": carved.triangle_count(),
    });
    println!("{summary}");
    Ok(())
}
