//! `mesh-sdf`: triangle mesh in, signed-distance voxel grid out, with an
//! optional near-surface training sample set.

use std::path::PathBuf;

use fus3d_core::mesh::{mesh_sdf_grid, sample_near_surface};
use fus3d_core::vsdf::write_vsdf;

use crate::manifest::Manifest;
use crate::support::{load_mesh, suffixed, write_json, CliResult, GridArgs, SamplesJson};

#[derive(Debug, clap::Args)]
pub struct MeshSdfArgs {
    /// Input mesh (.obj or .ply).
    pub mesh: PathBuf,

    #[command(flatten)]
    pub grid: GridArgs,

    /// Parity rays per voxel for the inside/outside vote (odd).
    #[arg(long, default_value_t = 9)]
    pub n_rays: usize,

    /// Output grid (VSDF1; the observation mask channel is included).
    #[arg(long)]
    pub out: PathBuf,

    /// Also draw this many near-surface samples.
    #[arg(long)]
    pub surface_samples: Option<usize>,

    /// Half-width of the sampling band around the surface, in world units
    /// (defaults to two voxels).
    #[arg(long)]
    pub band: Option<f64>,

    /// Where to write the sample set (defaults to the grid path with a
    /// `.samples.json` suffix).
    #[arg(long)]
    pub samples_out: Option<PathBuf>,
}

pub fn run(args: &MeshSdfArgs, seed: u64, manifest: &mut Manifest) -> CliResult<()> {
    let spec = args.grid.spec()?;
    let mesh = load_mesh(&args.mesh)?;
    manifest.input(&args.mesh)?;
    manifest.param("dims", spec.dims);
    manifest.param("voxel_size", spec.voxel_size);
    manifest.param("n_rays", args.n_rays);

    let (grid, mask) = mesh_sdf_grid(&mesh, &spec, args.n_rays)?;
    write_vsdf(&args.out, &grid, Some(&mask))?;
    manifest.output(&args.out)?;

    let mut summary = serde_json::json!({
        "out": args.out,
        "dims": spec.dims,
        "triangles": mesh.triangle_count(),
    });

    if let Some(count) = args.surface_samples {
        let band = args.band.unwrap_or(2.0 * spec.voxel_size);
        let samples = sample_near_surface(&mesh, count, band, seed)?;
        let samples_path = args
            .samples_out
            .clone()
            .unwrap_or_else(|| suffixed(&args.out, ".samples.json"));
        write_json(&samples_path, &SamplesJson::from(&samples), "samples JSON")?;
        manifest.param("surface_samples", count);
        manifest.param("band", band);
        manifest.output(&samples_path)?;
        summary["samples_out"] = serde_json::json!(samples_path);
    }

    manifest.write_beside(&args.out)?;
    println!("{summary}");
    Ok(())
}
