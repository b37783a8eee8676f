//! Binary voxel-grid container (`VSDF`, version 1).
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic      4 bytes   "VSDF"
//! version    u8        1
//! dims       3 x u32   voxels per axis (i, j, k)
//! origin     3 x f32   world position of voxel (0,0,0) center
//! voxel_size f32       cubic voxel edge length
//! has_mask   u8        0 or 1
//! values     n x f32   row-major, k fastest (n = product of dims)
//! mask       n x u8    0/1 per voxel, present iff has_mask = 1
//! ```
//!
//! Values are stored at 32-bit precision; in-memory grids are `f64`, so a
//! write narrows and a read widens exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::grid::{GridSpec, MaskGrid, VoxelGrid};
use crate::{Error, Result};

const MAGIC: [u8; 4] = *b"VSDF";
const VERSION: u8 = 1;

fn format_err(detail: impl Into<String>) -> Error {
    Error::Format {
        format: "VSDF",
        detail: detail.into(),
    }
}

/// Serializes a grid (and optional per-voxel mask) to a writer.
pub fn write_vsdf_to<W: Write>(
    w: &mut W,
    grid: &VoxelGrid,
    mask: Option<&MaskGrid>,
) -> Result<()> {
    if let Some(m) = mask {
        if !m.spec.approx_eq(&grid.spec, 1e-9) {
            return Err(Error::SpecMismatch(
                "mask layout differs from grid layout".into(),
            ));
        }
    }
    let spec = grid.spec;
    w.write_all(&MAGIC)?;
    w.write_all(&[VERSION])?;
    for d in spec.dims {
        w.write_all(&u32::try_from(d).map_err(|_| {
            Error::InvalidInput(format!("dimension {d} exceeds the u32 header field"))
        })?.to_le_bytes())?;
    }
    for a in 0..3 {
        w.write_all(&(spec.origin[a] as f32).to_le_bytes())?;
    }
    w.write_all(&(spec.voxel_size as f32).to_le_bytes())?;
    w.write_all(&[u8::from(mask.is_some())])?;
    let mut buf = Vec::with_capacity(grid.values().len() * 4);
    for &v in grid.values() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    if let Some(m) = mask {
        let bytes: Vec<u8> = m.bits().iter().map(|&b| u8::from(b)).collect();
        w.write_all(&bytes)?;
    }
    Ok(())
}

/// Writes a grid (and optional mask) to `path`.
pub fn write_vsdf(path: &Path, grid: &VoxelGrid, mask: Option<&MaskGrid>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_vsdf_to(&mut w, grid, mask)?;
    w.flush()?;
    Ok(())
}

/// Deserializes a grid (and optional mask) from a reader.
///
/// The stream must contain exactly one well-formed record; trailing bytes are
/// rejected so truncation bugs surface in the producer, not downstream.
pub fn read_vsdf_from<R: Read>(r: &mut R) -> Result<(VoxelGrid, Option<MaskGrid>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| format_err("file too short for header"))?;
    if magic != MAGIC {
        return Err(format_err(format!("bad magic {magic:?}")));
    }
    let mut byte = [0u8; 1];
    r.read_exact(&mut byte)
        .map_err(|_| format_err("missing version byte"))?;
    if byte[0] != VERSION {
        return Err(format_err(format!(
            "unsupported version {} (expected {VERSION})",
            byte[0]
        )));
    }
    let mut u32buf = [0u8; 4];
    let mut dims = [0usize; 3];
    for d in &mut dims {
        r.read_exact(&mut u32buf)
            .map_err(|_| format_err("truncated dims"))?;
        *d = u32::from_le_bytes(u32buf) as usize;
    }
    let mut f32buf = [0u8; 4];
    let mut origin = Vector3::zeros();
    for a in 0..3 {
        r.read_exact(&mut f32buf)
            .map_err(|_| format_err("truncated origin"))?;
        origin[a] = f32::from_le_bytes(f32buf) as f64;
    }
    r.read_exact(&mut f32buf)
        .map_err(|_| format_err("truncated voxel size"))?;
    let voxel_size = f32::from_le_bytes(f32buf) as f64;
    r.read_exact(&mut byte)
        .map_err(|_| format_err("missing mask flag"))?;
    let has_mask = match byte[0] {
        0 => false,
        1 => true,
        other => return Err(format_err(format!("mask flag must be 0/1, got {other}"))),
    };
    let spec = GridSpec::new(dims, origin, voxel_size)
        .map_err(|e| format_err(format!("invalid header: {e}")))?;
    let n = spec.len();
    let mut values = vec![0f64; n];
    let mut raw = vec![0u8; n * 4];
    r.read_exact(&mut raw)
        .map_err(|_| format_err("truncated value payload"))?;
    for (v, chunk) in values.iter_mut().zip(raw.chunks_exact(4)) {
        *v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]) as f64;
    }
    let mask = if has_mask {
        let mut mraw = vec![0u8; n];
        r.read_exact(&mut mraw)
            .map_err(|_| format_err("truncated mask payload"))?;
        let mut bits = Vec::with_capacity(n);
        for (i, &b) in mraw.iter().enumerate() {
            match b {
                0 => bits.push(false),
                1 => bits.push(true),
                other => {
                    return Err(format_err(format!(
                        "mask byte at voxel {i} must be 0/1, got {other}"
                    )))
                }
            }
        }
        Some(MaskGrid::new(spec, bits)?)
    } else {
        None
    };
    if r.read(&mut byte).map_err(Error::Io)? != 0 {
        return Err(format_err("trailing bytes after grid payload"));
    }
    Ok((VoxelGrid::new(spec, values)?, mask))
}

/// Reads a grid (and optional mask) from `path`.
pub fn read_vsdf(path: &Path) -> Result<(VoxelGrid, Option<MaskGrid>)> {
    let mut r = BufReader::new(File::open(path)?);
    read_vsdf_from(&mut r)
}
