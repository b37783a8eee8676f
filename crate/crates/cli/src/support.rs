//! Error/exit-code mapping and the small I/O helpers every subcommand
//! shares: extension-dispatched mesh loading, JSON files, and the common
//! grid-geometry flags.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use fus3d_core::grid::GridSpec;
use fus3d_core::mesh::{load_obj, load_ply, save_obj, save_ply, SurfaceSamples, TriangleMesh};
use fus3d_core::Error;

/// A failed run, sorted by how the process should exit: usage errors leave
/// with code 1, invalid inputs and malformed data with 2, numerical failures
/// with 3 (and a diagnostic JSON object on stderr).
pub enum CliError {
    /// Help or version text; display it and exit 0.
    Help(String),
    Usage(String),
    Core(Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Help(_) => 0,
            CliError::Usage(_) => 1,
            CliError::Core(Error::Degenerate(_)) => 3,
            CliError::Core(_) => 2,
        }
    }

    pub fn report(&self) {
        match self {
            CliError::Help(text) => print!("{text}"),
            CliError::Usage(msg) => eprintln!("{}", msg.trim_end()),
            CliError::Core(Error::Degenerate(detail)) => {
                let diag = serde_json::json!({
                    "error": "numerical-failure",
                    "detail": detail,
                });
                eprintln!("{diag}");
            }
            CliError::Core(e) => eprintln!("error: {e}"),
        }
    }
}

fn invalid(msg: String) -> CliError {
    CliError::Core(Error::InvalidInput(msg))
}

fn extension(path: &Path) -> CliResult<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .ok_or_else(|| {
            invalid(format!(
                "{} has no file extension to dispatch on",
                path.display()
            ))
        })
}

/// True for paths the CLI treats as binary voxel grids.
pub fn is_vsdf(path: &Path) -> bool {
    extension(path).map(|e| e == "vsdf").unwrap_or(false)
}

/// Loads a triangle mesh by file extension (`.obj` or `.ply`).
pub fn load_mesh(path: &Path) -> CliResult<TriangleMesh> {
    match extension(path)?.as_str() {
        "obj" => Ok(load_obj(path)?.mesh),
        "ply" => Ok(load_ply(path)?.mesh),
        other => Err(invalid(format!(
            "unsupported mesh extension {other:?} for {} (use .obj or .ply)",
            path.display()
        ))),
    }
}

/// Saves a triangle mesh by file extension (`.obj` or `.ply`).
pub fn save_mesh(path: &Path, mesh: &TriangleMesh) -> CliResult<()> {
    match extension(path)?.as_str() {
        "obj" => save_obj(path, mesh)?,
        "ply" => save_ply(path, mesh)?,
        other => {
            return Err(invalid(format!(
                "unsupported mesh extension {other:?} for {} (use .obj or .ply)",
                path.display()
            )))
        }
    }
    Ok(())
}

/// Reads a whole JSON file into `T`, reporting parse failures under the
/// given format name.
pub fn read_json<T: DeserializeOwned>(path: &Path, format: &'static str) -> CliResult<T> {
    let file = File::open(path)?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| {
        CliError::Core(Error::Format {
            format,
            detail: format!("{}: {e}", path.display()),
        })
    })
}

/// Writes `value` as pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T, format: &'static str) -> CliResult<()> {
    let file = File::create(path)?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, value).map_err(|e| {
        CliError::Core(Error::Format {
            format,
            detail: e.to_string(),
        })
    })?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

/// Loads a point cloud stored as a JSON array of `[x, y, z]` triples.
pub fn load_points(path: &Path) -> CliResult<Vec<Vector3<f64>>> {
    let raw: Vec<[f64; 3]> = read_json(path, "points JSON")?;
    Ok(raw.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect())
}

/// `path` with `suffix` appended to its file name (keeping the directory).
pub fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

/// On-disk form of a near-surface sample set.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplesJson {
    /// Whether `gt_sdf` carries trustworthy signs.
    pub signed: bool,
    pub points: Vec<[f64; 3]>,
    pub gt_sdf: Vec<f64>,
}

impl From<&SurfaceSamples> for SamplesJson {
    fn from(s: &SurfaceSamples) -> Self {
        Self {
            signed: s.signed,
            points: s.points.iter().map(|p| [p.x, p.y, p.z]).collect(),
            gt_sdf: s.gt_sdf.clone(),
        }
    }
}

impl TryFrom<SamplesJson> for SurfaceSamples {
    type Error = CliError;

    fn try_from(json: SamplesJson) -> CliResult<SurfaceSamples> {
        if json.points.len() != json.gt_sdf.len() {
            return Err(CliError::Core(Error::Format {
                format: "samples JSON",
                detail: format!(
                    "{} points but {} distances",
                    json.points.len(),
                    json.gt_sdf.len()
                ),
            }));
        }
        Ok(SurfaceSamples {
            points: json
                .points
                .iter()
                .map(|p| Vector3::new(p[0], p[1], p[2]))
                .collect(),
            gt_sdf: json.gt_sdf,
            signed: json.signed,
        })
    }
}

/// Grid geometry flags shared by every grid-producing subcommand.
#[derive(Debug, clap::Args)]
pub struct GridArgs {
    /// Voxels per axis (cubic grid).
    #[arg(long)]
    pub dims: usize,

    /// Volume bounds, min then max, shared by all three axes.
    #[arg(
        long,
        num_args = 2,
        value_names = ["MIN", "MAX"],
        allow_negative_numbers = true,
        default_values_t = [-0.5, 0.5]
    )]
    pub extent: Vec<f64>,
}

impl GridArgs {
    pub fn spec(&self) -> CliResult<GridSpec> {
        Ok(GridSpec::cell_centered(
            [self.dims; 3],
            Vector3::repeat(self.extent[0]),
            Vector3::repeat(self.extent[1]),
        )?)
    }
}
