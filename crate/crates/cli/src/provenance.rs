//! `provenance.json` sidecars: config hash, seed and a checksum of every
//! file written to an output directory. No timestamps or absolute paths
//! go in, so identical runs produce identical sidecars.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const PROVENANCE_FILE: &str = "provenance.json";

#[derive(Debug, Serialize)]
struct Sidecar<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config_sha256: &'a str,
    /// Input role to checksum.
    inputs: &'a BTreeMap<String, String>,
    /// Path relative to the output directory to checksum.
    files: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Checksums of the regular file or every file under a directory.
pub fn sha256_input(path: &Path) -> Result<String> {
    if path.is_file() {
        return sha256_file(path);
    }
    let mut h = Sha256::new();
    for (rel, sum) in checksums(path, false)? {
        h.update(format!("{rel} {sum}\n"));
    }
    Ok(hex::encode(h.finalize()))
}

fn checksums(dir: &Path, skip_own: bool) -> Result<BTreeMap<String, String>> {
    let mut files = BTreeMap::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.with_context(|| format!("listing {}", dir.display()))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(dir).expect("walk stays under its root");
        if skip_own && rel == Path::new(PROVENANCE_FILE) {
            continue;
        }
        let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        files.insert(key, sha256_file(entry.path())?);
    }
    Ok(files)
}

/// Writes `dir/provenance.json` covering everything currently in `dir`.
pub fn write_sidecar(
    dir: &Path,
    command: &str,
    seed: u64,
    config_sha256: &str,
    inputs: &BTreeMap<String, String>,
) -> Result<()> {
    let sidecar = Sidecar {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed,
        config_sha256,
        inputs,
        files: checksums(dir, true)?,
    };
    let mut text = serde_json::to_string_pretty(&sidecar)?;
    text.push('\n');
    let path = dir.join(PROVENANCE_FILE);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}
