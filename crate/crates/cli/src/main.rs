//! `fus3dkit` — reproducible pipelines over the voxel-SDF toolkit.
//!
//! Every subcommand reads explicit inputs, honors `--seed`, can pull option
//! defaults from a `--config` key=value file, and writes a JSON run manifest
//! with content hashes beside its primary output. Reruns with identical
//! inputs, flags, and seed produce byte-identical outputs and manifests
//! (up to the manifest's separate timestamp field).
//!
//! Exit codes: 0 success, 1 usage, 2 invalid input or malformed data,
//! 3 numerical failure (with a diagnostic JSON object on stderr).
//! `FUS3DKIT_THREADS` caps internal parallelism.

mod commands;
mod manifest;
mod support;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, CommandFactory, Parser, Subcommand};

use fus3d_core::Error;

use crate::manifest::Manifest;
use crate::support::{CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "fus3dkit",
    version,
    about = "Voxel SDF pipelines: supervision grids, depth fusion, losses, \
             surfaces, metrics, alignment, and token lifting"
)]
struct Cli {
    /// Seed for every stochastic choice (parity rays, sampling, weights).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// key=value file supplying defaults for any long option of the invoked
    /// subcommand; explicit command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a mesh's signed distance field onto a voxel grid (VSDF1).
    MeshSdf(commands::mesh_sdf::MeshSdfArgs),
    /// Remove mesh surface that no exterior ray can see.
    Carve(commands::carve::CarveArgs),
    /// Render per-pixel depth maps of a mesh from given or orbiting cameras.
    RenderDepth(commands::render_depth::RenderDepthArgs),
    /// Fuse depth maps into a truncated projective distance grid (VSDF1).
    TsdfFuse(commands::tsdf_fuse::TsdfFuseArgs),
    /// Attach a local-smoothness reliability mask to a grid.
    Masks(commands::masks::MasksArgs),
    /// Evaluate the masked supervision objective between two grids.
    Loss(commands::loss::LossArgs),
    /// Extract a level-set mesh from a grid by marching cubes.
    Surface(commands::surface::SurfaceArgs),
    /// Reconstruction metrics between two meshes or two grids.
    Metrics(commands::metrics::MetricsArgs),
    /// Similarity registration of camera centers or point clouds.
    Align(commands::align::AlignArgs),
    /// Run the token-lifting pipeline and decode the result to a grid.
    LiftDemo(commands::lift_demo::LiftDemoArgs),
    /// Export one axis-aligned grid slice as PGM + CSV + value-range JSON.
    Slice(commands::slice::SliceArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::MeshSdf(_) => "mesh-sdf",
            Command::Carve(_) => "carve",
            Command::RenderDepth(_) => "render-depth",
            Command::TsdfFuse(_) => "tsdf-fuse",
            Command::Masks(_) => "masks",
            Command::Loss(_) => "loss",
            Command::Surface(_) => "surface",
            Command::Metrics(_) => "metrics",
            Command::Align(_) => "align",
            Command::LiftDemo(_) => "lift-demo",
            Command::Slice(_) => "slice",
        }
    }
}

fn main() -> ExitCode {
    match run(std::env::args().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            e.report();
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(argv: Vec<String>) -> CliResult<()> {
    let argv = merge_config_args(argv)?;
    let cli = Cli::try_parse_from(&argv).map_err(|e| {
        use clap::error::ErrorKind;
        match e.kind() {
            ErrorKind::DisplayHelp
            | ErrorKind::DisplayVersion
            | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => CliError::Help(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    })?;
    configure_threads()?;

    let mut manifest = Manifest::new(cli.command.name(), &argv, cli.seed);
    match &cli.command {
        Command::MeshSdf(a) => commands::mesh_sdf::run(a, cli.seed, &mut manifest),
        Command::Carve(a) => commands::carve::run(a, cli.seed, &mut manifest),
        Command::RenderDepth(a) => commands::render_depth::run(a, &mut manifest),
        Command::TsdfFuse(a) => commands::tsdf_fuse::run(a, &mut manifest),
        Command::Masks(a) => commands::masks::run(a, &mut manifest),
        Command::Loss(a) => commands::loss::run(a, &mut manifest),
        Command::Surface(a) => commands::surface::run(a, &mut manifest),
        Command::Metrics(a) => commands::metrics::run(a, cli.seed, &mut manifest),
        Command::Align(a) => commands::align::run(a, &mut manifest),
        Command::LiftDemo(a) => commands::lift_demo::run(a, cli.seed, &mut manifest),
        Command::Slice(a) => commands::slice::run(a, &mut manifest),
    }
}

/// Applies `FUS3DKIT_THREADS` to the global worker pool before any parallel
/// work starts.
fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("FUS3DKIT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| {
            CliError::Core(Error::InvalidInput(format!(
                "FUS3DKIT_THREADS must be a positive integer, got {raw:?}"
            )))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Core(Error::InvalidInput(format!("thread pool setup: {e}"))))?;
    Ok(())
}

/// Injects `--config` file entries as trailing arguments for every long
/// option of the invoked subcommand that the command line did not set.
/// Keys foreign to the subcommand are ignored, so one config file can serve
/// several pipeline stages.
fn merge_config_args(argv: Vec<String>) -> CliResult<Vec<String>> {
    let Some(path) = find_config_path(&argv) else {
        return Ok(argv);
    };
    let entries = parse_config_file(&path)?;
    if entries.is_empty() {
        return Ok(argv);
    }

    let mut top = Cli::command();
    top.build();
    // The subcommand is the first token that names one (option values never
    // collide because no subcommand name starts with a dash).
    let Some(sub) = argv[1..]
        .iter()
        .find_map(|tok| top.find_subcommand(tok).cloned())
    else {
        return Ok(argv); // let the parser produce the usage error
    };

    // Long option name -> whether it consumes values.
    let known: BTreeMap<String, bool> = sub
        .get_arguments()
        .chain(top.get_arguments())
        .filter_map(|a| {
            let long = a.get_long()?;
            let takes_value = !matches!(
                a.get_action(),
                ArgAction::SetTrue | ArgAction::SetFalse | ArgAction::Count
            );
            Some((long.to_string(), takes_value))
        })
        .collect();

    let mut merged = argv.clone();
    for (key, value) in entries {
        let Some(&takes_value) = known.get(&key) else {
            continue;
        };
        let flag = format!("--{key}");
        let prefix = format!("{flag}=");
        if argv[1..].iter().any(|t| *t == flag || t.starts_with(&prefix)) {
            continue; // explicit flag wins
        }
        if takes_value {
            merged.push(flag);
            merged.extend(value.split_whitespace().map(str::to_string));
        } else {
            match value.as_str() {
                "true" | "1" | "yes" | "on" => merged.push(flag),
                "false" | "0" | "no" | "off" => {}
                other => {
                    return Err(CliError::Usage(format!(
                        "config {}: flag {key} wants true/false, got {other:?}",
                        path.display()
                    )))
                }
            }
        }
    }
    Ok(merged)
}

fn find_config_path(argv: &[String]) -> Option<PathBuf> {
    let mut found = None;
    let mut iter = argv.iter().skip(1).peekable();
    while let Some(tok) = iter.next() {
        if tok == "--config" {
            if let Some(value) = iter.next() {
                found = Some(PathBuf::from(value));
            }
        } else if let Some(value) = tok.strip_prefix("--config=") {
            found = Some(PathBuf::from(value));
        }
    }
    found
}

/// Parses a `key = value` file: one entry per line, `#` comments, blank
/// lines skipped, optional double quotes around the value, underscores in
/// keys treated as dashes.
fn parse_config_file(path: &Path) -> CliResult<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)?;
    let mut entries = Vec::new();
    for (line_no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Usage(format!(
                "config {}: line {} is not key=value: {raw:?}",
                path.display(),
                line_no + 1
            )));
        };
        let key = key.trim().replace('_', "-");
        let mut value = value.trim();
        if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
            value = &value[1..value.len() - 1];
        }
        entries.push((key, value.to_string()));
    }
    Ok(entries)
}
