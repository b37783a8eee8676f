//! `render-depth`: ray-cast a mesh into per-pixel depth rasters, from
//! explicit camera files or an automatic surrounding orbit.

use std::path::PathBuf;

use nalgebra::Vector3;

use fus3d_core::camera::{orbit_cameras, save_depth, Camera, CameraJson};
use fus3d_core::render::render_depth;

use crate::manifest::Manifest;
use crate::support::{load_mesh, read_json, CliResult};

#[derive(Debug, clap::Args)]
#[command(group = clap::ArgGroup::new("views").required(true).args(["camera", "orbit"]))]
pub struct RenderDepthArgs {
    /// Input mesh (.obj or .ply).
    pub mesh: PathBuf,

    /// Camera sidecar JSON files, one view each.
    #[arg(long, value_name = "FILE", num_args = 1.., conflicts_with = "orbit")]
    pub camera: Vec<PathBuf>,

    /// Render from this many cameras spread over a surrounding sphere.
    #[arg(long, value_name = "N")]
    pub orbit: Option<usize>,

    /// Orbit sphere radius.
    #[arg(long, default_value_t = 2.0)]
    pub radius: f64,

    /// Orbit look-at target.
    #[arg(
        long,
        num_args = 3,
        value_names = ["X", "Y", "Z"],
        allow_negative_numbers = true,
        default_values_t = [0.0, 0.0, 0.0]
    )]
    pub center: Vec<f64>,

    /// Image width for orbit cameras.
    #[arg(long, default_value_t = 256)]
    pub width: usize,

    /// Image height for orbit cameras.
    #[arg(long, default_value_t = 256)]
    pub height: usize,

    /// Directory receiving `<prefix>_NNN.f32` rasters and their camera
    /// sidecars.
    #[arg(long)]
    pub out_dir: PathBuf,

    /// Output file name prefix.
    #[arg(long, default_value = "depth")]
    pub prefix: String,
}

pub fn run(args: &RenderDepthArgs, manifest: &mut Manifest) -> CliResult<()> {
    let mesh = load_mesh(&args.mesh)?;
    manifest.input(&args.mesh)?;

    let cameras: Vec<Camera> = if let Some(n) = args.orbit {
        let center = Vector3::new(args.center[0], args.center[1], args.center[2]);
        manifest.param("orbit", n);
        manifest.param("radius", args.radius);
        manifest.param("center", [center.x, center.y, center.z]);
        manifest.param("width", args.width);
        manifest.param("height", args.height);
        orbit_cameras(n, args.radius, center, args.width, args.height)?
    } else {
        let mut cameras = Vec::with_capacity(args.camera.len());
        for path in &args.camera {
            let json: CameraJson = read_json(path, "camera JSON")?;
            manifest.input(path)?;
            cameras.push(Camera::try_from(&json)?);
        }
        cameras
    };

    std::fs::create_dir_all(&args.out_dir)?;
    for (idx, camera) in cameras.iter().enumerate() {
        let depth = render_depth(&mesh, camera)?;
        let stem = format!("{}_{idx:03}", args.prefix);
        let raster = args.out_dir.join(format!("{stem}.f32"));
        let sidecar = args.out_dir.join(format!("{stem}.json"));
        save_depth(&depth, &raster, &sidecar)?;
        manifest.output(&raster)?;
        manifest.output(&sidecar)?;
    }
    manifest.write_at(&args.out_dir.join("manifest.json"))?;

    let summary = serde_json::json!({
        "out_dir": args.out_dir,
        "views": cameras.len(),
    });
    println!("{summary}");
    Ok(())
}
