use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use histo_adapt::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
}

/// Record of one command invocation, written next to its primary output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    /// Resolved configuration in key-value form, when the command uses one.
    pub config: Option<String>,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub artifacts: Vec<Artifact>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

pub fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::Data {
        path: path.to_path_buf(),
        message: format!("cannot read for checksum: {e}"),
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Every regular file under `path` (or `path` itself), sorted.
fn files_under(path: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        for e in entries {
            files_under(&e, out)?;
        }
    } else {
        out.push(path.to_path_buf());
    }
    Ok(())
}

pub fn artifacts(paths: &[PathBuf]) -> Result<Vec<Artifact>> {
    let mut files = Vec::new();
    for p in paths {
        files_under(p, &mut files)?;
    }
    files
        .into_iter()
        .map(|path| Ok(Artifact { sha256: sha256_file(&path)?, path }))
        .collect()
}

/// `<output>.manifest.json` beside the output file or directory.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_else(|| "run".into());
    name.push(".manifest.json");
    output.with_file_name(name)
}

impl RunManifest {
    pub fn write(&self, primary_output: &Path) -> Result<PathBuf> {
        let path = manifest_path(primary_output);
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::InvalidInput(e.to_string()))?;
        fs::write(&path, json + "\n").map_err(|e| Error::Io { path: path.clone(), source: e })?;
        Ok(path)
    }
}
