use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "run.json";

/// Record of one command invocation, written next to its outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub version: String,
    /// Fully resolved configuration; accepted back by `--config`.
    pub config: serde_json::Value,
    pub seed: u64,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// SHA-256 of every output file, keyed by path relative to the output directory.
    pub artifacts: BTreeMap<String, String>,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

impl RunManifest {
    pub fn start(command: &str, config: serde_json::Value, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            argv: std::env::args().collect(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            artifacts: BTreeMap::new(),
            started_unix_s: unix_now(),
            finished_unix_s: 0.0,
        }
    }

    /// Hashes `files` (relative to `out_dir`) and writes `run.json` there.
    pub fn finish(mut self, out_dir: &Path, files: &[PathBuf]) -> Result<PathBuf> {
        for rel in files {
            self.artifacts.insert(rel.to_string_lossy().replace('\\', "/"), sha256_file(&out_dir.join(rel))?);
        }
        self.outputs = files.iter().map(|f| out_dir.join(f)).collect();
        self.finished_unix_s = unix_now();
        let path = out_dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self)?;
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// Reads a config document. A run manifest is accepted too, in which case
/// its recorded configuration is used.
pub fn read_config_value(path: &Path) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| crate::Usage(format!("{}: {e}", path.display())))?;
    match value {
        serde_json::Value::Object(ref m) if m.contains_key("command") && m.contains_key("config") => Ok(m["config"].clone()),
        v => Ok(v),
    }
}
