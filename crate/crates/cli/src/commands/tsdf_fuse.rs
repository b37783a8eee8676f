//! `tsdf-fuse`: integrate depth rasters into a truncated projective
//! distance grid with an observation-validity mask.

use std::path::{Path, PathBuf};

use fus3d_core::camera::{load_depth, DepthMap};
use fus3d_core::tsdf::{default_truncation, fuse_tsdf, DEFAULT_OVERSAMPLE};
use fus3d_core::vsdf::write_vsdf;
use fus3d_core::Error;

use crate::manifest::Manifest;
use crate::support::{CliError, CliResult, GridArgs};

#[derive(Debug, clap::Args)]
pub struct TsdfFuseArgs {
    /// Depth rasters (`.f32` with same-stem `.json` camera sidecars), or
    /// directories scanned for them.
    #[arg(required = true, num_args = 1..)]
    pub depths: Vec<PathBuf>,

    #[command(flatten)]
    pub grid: GridArgs,

    /// Truncation band half-width in world units (defaults to four voxels).
    #[arg(long)]
    pub truncation: Option<f64>,

    /// Integration grid refinement per axis before sampling back.
    #[arg(long, default_value_t = DEFAULT_OVERSAMPLE)]
    pub oversample: usize,

    /// Output grid (VSDF1 with the observation mask).
    #[arg(long)]
    pub out: PathBuf,
}

fn collect_rasters(paths: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut rasters = Vec::new();
    for path in paths {
        if path.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(path)?
                .collect::<std::io::Result<Vec<_>>>()?
                .into_iter()
                .map(|entry| entry.path())
                .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("f32"))
                .collect();
            found.sort();
            rasters.extend(found);
        } else {
            rasters.push(path.clone());
        }
    }
    if rasters.is_empty() {
        return Err(CliError::Core(Error::InvalidInput(
            "no .f32 depth rasters among the given paths".into(),
        )));
    }
    Ok(rasters)
}

fn sidecar_path(raster: &Path) -> PathBuf {
    raster.with_extension("json")
}

pub fn run(args: &TsdfFuseArgs, manifest: &mut Manifest) -> CliResult<()> {
    let spec = args.grid.spec()?;
    let truncation = args.truncation.unwrap_or_else(|| default_truncation(&spec));

    let rasters = collect_rasters(&args.depths)?;
    let mut depths: Vec<DepthMap> = Vec::with_capacity(rasters.len());
    for raster in &rasters {
        let sidecar = sidecar_path(raster);
        depths.push(load_depth(raster, &sidecar)?);
        manifest.input(raster)?;
        manifest.input(&sidecar)?;
    }
    manifest.param("dims", spec.dims);
    manifest.param("voxel_size", spec.voxel_size);
    manifest.param("truncation", truncation);
    manifest.param("oversample", args.oversample);

    let (grid, mask) = fuse_tsdf(&depths, &spec, truncation, args.oversample)?;
    write_vsdf(&args.out, &grid, Some(&mask))?;
    manifest.output(&args.out)?;
    manifest.write_beside(&args.out)?;

    let summary = serde_json::json!({
        "out": args.out,
        "views": depths.len(),
        "observed": mask.count_true(),
        "voxels": spec.len(),
    });
    println!("{summary}");
    Ok(())
}
