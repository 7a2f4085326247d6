use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Serialize)]
pub struct Artifact {
    /// Relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Everything needed to regenerate the run: `config` is itself a valid
/// config file with every default spelled out.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub core_version: &'static str,
    pub command: String,
    pub seed: u64,
    pub threads: usize,
    pub config: Value,
    pub summary: Value,
    pub artifacts: Vec<Artifact>,
}

pub fn artifact(dir: &Path, path: &Path) -> Result<Artifact, CliError> {
    let bytes = std::fs::read(path).map_err(difflab::LabError::from)?;
    let rel = path.strip_prefix(dir).unwrap_or(path);
    Ok(Artifact {
        path: rel.to_string_lossy().into_owned(),
        bytes: bytes.len() as u64,
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

pub struct Run<'a> {
    pub command: String,
    pub seed: u64,
    pub threads: usize,
    pub config: Value,
    pub summary: Value,
    pub dir: &'a Path,
}

/// Hashes `files` and writes `manifest.json` next to them.
pub fn write(run: Run<'_>, files: &[PathBuf]) -> Result<PathBuf, CliError> {
    let artifacts = files.iter().map(|f| artifact(run.dir, f)).collect::<Result<_, _>>()?;
    let m = Manifest {
        tool: "lab",
        tool_version: env!("CARGO_PKG_VERSION"),
        core_version: difflab::VERSION,
        command: run.command,
        seed: run.seed,
        threads: run.threads,
        config: run.config,
        summary: run.summary,
        artifacts,
    };
    let path = run.dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&m).map_err(difflab::LabError::from)?;
    text.push('\n');
    difflab::report::write_atomic(&path, text.as_bytes())?;
    Ok(path)
}
