//! Binary token-set container (`TOKS`, version 1).
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic            4 bytes   "TOKS"
//! version          u8        1
//! n_stages         u32
//! n_views          u32
//! tokens_per_view  u32
//! dim              u32
//! data             n x f32   stage -> view -> token -> channel
//! ```
//!
//! `n` is the product of the four header counts. Values are stored at 32-bit
//! precision; in-memory tokens are `f64`, so a write narrows and a read
//! widens exactly. The format carries externally exported backbone features
//! as readily as synthetic ones.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::TokenSet;
use crate::{Error, Result};

const MAGIC: [u8; 4] = *b"TOKS";
const VERSION: u8 = 1;

fn format_err(detail: impl Into<String>) -> Error {
    Error::Format {
        format: "TOKS",
        detail: detail.into(),
    }
}

/// Serializes a token set to a writer.
pub fn write_tokens_to<W: Write>(w: &mut W, tokens: &TokenSet) -> Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&[VERSION])?;
    for count in [
        tokens.n_stages(),
        tokens.n_views(),
        tokens.tokens_per_view(),
        tokens.dim(),
    ] {
        let field = u32::try_from(count).map_err(|_| {
            Error::InvalidInput(format!("count {count} exceeds the u32 header field"))
        })?;
        w.write_all(&field.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(tokens.data().len() * 4);
    for &v in tokens.data() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Writes a token set to `path`.
pub fn save_tokens(path: &Path, tokens: &TokenSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tokens_to(&mut w, tokens)?;
    w.flush()?;
    Ok(())
}

/// Deserializes a token set from a reader.
///
/// The stream must contain exactly one well-formed record; trailing bytes
/// are rejected so truncation bugs surface in the producer, not downstream.
pub fn read_tokens_from<R: Read>(r: &mut R) -> Result<TokenSet> {
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
    let mut counts = [0usize; 4];
    for c in &mut counts {
        r.read_exact(&mut u32buf)
            .map_err(|_| format_err("truncated shape header"))?;
        *c = u32::from_le_bytes(u32buf) as usize;
    }
    let [n_stages, n_views, tokens_per_view, dim] = counts;
    let n = n_stages
        .checked_mul(n_views)
        .and_then(|v| v.checked_mul(tokens_per_view))
        .and_then(|v| v.checked_mul(dim))
        .ok_or_else(|| format_err("shape header overflows"))?;
    if n == 0 {
        return Err(format_err(format!(
            "all shape counts must be positive, got {counts:?}"
        )));
    }
    let mut raw = vec![0u8; n * 4];
    r.read_exact(&mut raw)
        .map_err(|_| format_err("truncated token payload"))?;
    let data: Vec<f64> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    if r.read(&mut byte).map_err(Error::Io)? != 0 {
        return Err(format_err("trailing bytes after token payload"));
    }
    TokenSet::new(n_stages, n_views, tokens_per_view, dim, data)
        .map_err(|e| format_err(format!("invalid payload: {e}")))
}

/// Reads a token set from `path`.
pub fn load_tokens(path: &Path) -> Result<TokenSet> {
    let mut r = BufReader::new(File::open(path)?);
    read_tokens_from(&mut r)
}
