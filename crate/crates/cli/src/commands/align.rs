//! `align`: closed-form similarity registration between camera centers or
//! point clouds, optionally polished by rigid ICP, optionally applied to a
//! mesh.

use std::path::PathBuf;

use fus3d_core::align::{icp_refine, umeyama_align, SimilarityJson, SimilarityTransform};
use fus3d_core::camera::{Camera, CameraJson};
use fus3d_core::mesh::TriangleMesh;

use crate::manifest::Manifest;
use crate::support::{load_mesh, load_points, read_json, save_mesh, CliResult};

#[derive(Debug, clap::Args)]
#[command(group = clap::ArgGroup::new("correspondences").required(true).args(["cameras", "points"]))]
pub struct AlignArgs {
    /// Two camera-list JSON files: source, then destination.
    #[arg(long, num_args = 2, value_names = ["SRC", "DST"])]
    pub cameras: Vec<PathBuf>,

    /// Two point-cloud JSON files (`[[x,y,z],...]`): source, then
    /// destination. Points are matched by index.
    #[arg(long, num_args = 2, value_names = ["SRC", "DST"], conflicts_with = "cameras")]
    pub points: Vec<PathBuf>,

    /// Polish the similarity with rigid ICP (scale stays frozen).
    #[arg(long)]
    pub icp: bool,

    /// ICP iteration cap.
    #[arg(long, default_value_t = 50)]
    pub max_iters: usize,

    /// ICP convergence threshold on the RMS improvement.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,

    /// Output transform JSON (scale, row-major rotation, translation).
    #[arg(long)]
    pub out: PathBuf,

    /// Mesh to carry through the recovered transform.
    #[arg(long, requires = "mesh_out")]
    pub apply_mesh: Option<PathBuf>,

    /// Where to write the transformed mesh.
    #[arg(long, requires = "apply_mesh")]
    pub mesh_out: Option<PathBuf>,
}

fn camera_centers(path: &PathBuf) -> CliResult<Vec<nalgebra::Vector3<f64>>> {
    let list: Vec<CameraJson> = read_json(path, "camera JSON")?;
    list.iter()
        .map(|json| Ok(Camera::try_from(json)?.position()))
        .collect()
}

pub fn run(args: &AlignArgs, manifest: &mut Manifest) -> CliResult<()> {
    let (src, dst) = if args.cameras.len() == 2 {
        manifest.input(&args.cameras[0])?;
        manifest.input(&args.cameras[1])?;
        (camera_centers(&args.cameras[0])?, camera_centers(&args.cameras[1])?)
    } else {
        manifest.input(&args.points[0])?;
        manifest.input(&args.points[1])?;
        (load_points(&args.points[0])?, load_points(&args.points[1])?)
    };
    manifest.param("icp", args.icp);

    let mut transform: SimilarityTransform = umeyama_align(&src, &dst)?;
    let mut summary = serde_json::json!({
        "out": args.out,
        "scale": transform.scale,
    });
    if args.icp {
        manifest.param("max_iters", args.max_iters);
        manifest.param("tol", args.tol);
        let refined = icp_refine(&src, &dst, &transform, args.max_iters, args.tol)?;
        transform = refined.transform;
        summary["scale"] = serde_json::json!(transform.scale);
        summary["rms"] = serde_json::json!(refined.rms_history.last());
        summary["iterations"] = serde_json::json!(refined.rms_history.len() - 1);
        summary["diverged"] = serde_json::json!(refined.diverged);
    }

    crate::support::write_json(&args.out, &SimilarityJson::from(&transform), "transform JSON")?;
    manifest.output(&args.out)?;

    if let (Some(mesh_path), Some(out_path)) = (&args.apply_mesh, &args.mesh_out) {
        let mesh = load_mesh(mesh_path)?;
        manifest.input(mesh_path)?;
        let moved = TriangleMesh::new(
            transform.apply_points(mesh.vertices()),
            mesh.triangles().to_vec(),
        )?;
        save_mesh(out_path, &moved)?;
        manifest.output(out_path)?;
        summary["mesh_out"] = serde_json::json!(out_path);
    }
    manifest.write_beside(&args.out)?;

    println!("{summary}");
    Ok(())
}
