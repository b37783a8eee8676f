//! `slice`: export one axis-aligned slice of a grid — or of its
//! finite-difference gradient norm — as an 8-bit graymap, a lossless CSV,
//! and a JSON sidecar recording the value range.

use std::io::Write;
use std::path::PathBuf;

use fus3d_core::grid::gradient_norm;
use fus3d_core::vsdf::read_vsdf;
use fus3d_core::Error;

use crate::manifest::Manifest;
use crate::support::{write_json, CliError, CliResult};

#[derive(Debug, clap::Args)]
pub struct SliceArgs {
    /// Input grid (VSDF1).
    pub grid: PathBuf,

    /// Slicing axis.
    #[arg(long, value_parser = ["x", "y", "z"])]
    pub axis: String,

    /// Voxel index along the axis (defaults to the center slice).
    #[arg(long)]
    pub index: Option<usize>,

    /// What to export: the raw field, or its gradient norm (a perfect
    /// distance field shows 1 everywhere).
    #[arg(long, default_value = "values", value_parser = ["values", "eikonal"])]
    pub mode: String,

    /// Output graymap (.pgm); the CSV and range JSON take the same stem.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &SliceArgs, manifest: &mut Manifest) -> CliResult<()> {
    let (grid, _) = read_vsdf(&args.grid)?;
    manifest.input(&args.grid)?;

    let field = match args.mode.as_str() {
        "eikonal" => gradient_norm(&grid)?,
        _ => grid,
    };
    let dims = field.spec.dims;
    let axis = match args.axis.as_str() {
        "x" => 0,
        "y" => 1,
        _ => 2,
    };
    let index = args.index.unwrap_or(dims[axis] / 2);
    if index >= dims[axis] {
        return Err(CliError::Core(Error::InvalidInput(format!(
            "slice index {index} outside the {} voxels along {}",
            dims[axis], args.axis
        ))));
    }
    manifest.param("axis", &args.axis);
    manifest.param("index", index);
    manifest.param("mode", &args.mode);

    // Remaining axes in ascending order: rows vary slower, columns faster.
    let (row_axis, col_axis) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let height = dims[row_axis];
    let width = dims[col_axis];
    let mut values = Vec::with_capacity(width * height);
    for r in 0..height {
        for c in 0..width {
            let mut ijk = [0usize; 3];
            ijk[axis] = index;
            ijk[row_axis] = r;
            ijk[col_axis] = c;
            values.push(field.get(ijk[0], ijk[1], ijk[2]));
        }
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut pgm = Vec::with_capacity(values.len() + 32);
    write!(pgm, "P5\n{width} {height}\n255\n")?;
    let span = max - min;
    pgm.extend(values.iter().map(|&v| {
        if span > 0.0 {
            ((v - min) / span * 255.0).round() as u8
        } else {
            0
        }
    }));
    std::fs::write(&args.out, &pgm)?;

    let csv_path = args.out.with_extension("csv");
    let mut csv = String::new();
    for row in values.chunks(width) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        csv.push_str(&line.join(","));
        csv.push('\n');
    }
    std::fs::write(&csv_path, csv)?;

    let json_path = args.out.with_extension("json");
    let sidecar = serde_json::json!({
        "axis": args.axis,
        "index": index,
        "mode": args.mode,
        "width": width,
        "height": height,
        "min": min,
        "max": max,
    });
    write_json(&json_path, &sidecar, "slice range JSON")?;

    manifest.output(&args.out)?;
    manifest.output(&csv_path)?;
    manifest.output(&json_path)?;
    manifest.write_beside(&args.out)?;

    let summary = serde_json::json!({
        "out": args.out,
        "width": width,
        "height": height,
        "min": min,
        "max": max,
    });
    println!("{summary}");
    Ok(())
}
