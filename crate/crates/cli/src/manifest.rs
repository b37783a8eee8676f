//! Per-run provenance records: the effective command line, resolved
//! parameters, and SHA-256 content hashes of every input and output.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use fus3d_core::Error;

use crate::support::CliResult;

/// What a run consumed and produced, serialized as JSON beside the primary
/// output. Identical inputs, flags, and seed reproduce every field
/// byte-for-byte except `unix_time_s`, which is isolated in its own field
/// for exactly that reason.
#[derive(Serialize)]
pub struct Manifest {
    command: String,
    argv: Vec<String>,
    seed: u64,
    inputs: BTreeMap<String, String>,
    params: BTreeMap<String, serde_json::Value>,
    outputs: BTreeMap<String, String>,
    unix_time_s: u64,
}

impl Manifest {
    /// Starts a manifest for `command`. `argv` is the effective argument
    /// list after config-file merging; the binary path itself is dropped
    /// because it varies across installations.
    pub fn new(command: &str, argv: &[String], seed: u64) -> Self {
        Self {
            command: command.to_string(),
            argv: argv.iter().skip(1).cloned().collect(),
            seed,
            inputs: BTreeMap::new(),
            params: BTreeMap::new(),
            outputs: BTreeMap::new(),
            unix_time_s: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    /// Records an input file and its content hash.
    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        self.inputs
            .insert(path.display().to_string(), hash_file(path)?);
        Ok(())
    }

    /// Records one resolved parameter (after defaults and config merging).
    pub fn param(&mut self, key: &str, value: impl Serialize) {
        self.params.insert(
            key.to_string(),
            serde_json::to_value(value).expect("parameters are plain data"),
        );
    }

    /// Records an output file and its content hash (call after writing it).
    pub fn output(&mut self, path: &Path) -> CliResult<()> {
        self.outputs
            .insert(path.display().to_string(), hash_file(path)?);
        Ok(())
    }

    /// Writes the manifest as `<primary>.manifest.json` next to the primary
    /// output file.
    pub fn write_beside(&self, primary: &Path) -> CliResult<()> {
        self.write_at(&crate::support::suffixed(primary, ".manifest.json"))
    }

    /// Writes the manifest to an explicit path (multi-output runs place one
    /// manifest in the shared output directory).
    pub fn write_at(&self, path: &Path) -> CliResult<()> {
        let file = File::create(path)?;
        let mut writer = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut writer, self).map_err(|e| Error::Format {
            format: "manifest JSON",
            detail: e.to_string(),
        })?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        Ok(())
    }
}

/// SHA-256 of a file's contents, lowercase hex.
pub fn hash_file(path: &Path) -> CliResult<String> {
    let mut hasher = Sha256::new();
    let mut file = File::open(path)?;
    let mut buf = [0u8; 65536];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}
