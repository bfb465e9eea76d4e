use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::FileConfig;
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to reproduce an output set.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub strategy: String,
    pub outputs: Vec<PathBuf>,
    pub wall_clock_secs: f64,
    pub config: FileConfig,
}

impl RunManifest {
    pub fn new(
        command: &str,
        config: &FileConfig,
        outputs: Vec<PathBuf>,
        elapsed: Duration,
    ) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash(config),
            seed: config.seed(),
            strategy: config.strategy.name.to_string(),
            outputs,
            wall_clock_secs: elapsed.as_secs_f64(),
            config: config.clone(),
        }
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let mut text =
            serde_json::to_string_pretty(self).map_err(|e| CliError::Runtime(e.to_string()))?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }
}

pub fn config_hash(config: &FileConfig) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(bytes))
}

/// Writes to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    std::fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}
