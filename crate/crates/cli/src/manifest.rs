//! `manifest.json`, written into every output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_error, CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Every resolved option, flags and config file merged.
    pub settings: BTreeMap<String, String>,
    /// SHA-256 of the resolved settings.
    pub config_digest: String,
    /// SHA-256 over the input data files, if any.
    pub dataset_digest: Option<String>,
    pub master_seed: Option<u64>,
    pub versions: BTreeMap<String, String>,
    pub started_at: u64,
    pub finished_at: u64,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Hex SHA-256 of the files' names and contents, in the given order.
pub fn digest_files(paths: &[&Path]) -> Result<String> {
    let mut h = Sha256::new();
    for p in paths {
        let bytes = fs::read(p).map_err(|e| io_error(p, e))?;
        if let Some(name) = p.file_name() {
            h.update(name.to_string_lossy().as_bytes());
        }
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn digest_settings(settings: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    for (k, v) in settings {
        h.update(k.as_bytes());
        h.update([0]);
        h.update(v.as_bytes());
        h.update([0]);
    }
    hex::encode(h.finalize())
}

impl RunManifest {
    pub fn new(command: &str, resolved: &[(String, String)], started_at: u64) -> Self {
        let settings: BTreeMap<String, String> = resolved.iter().cloned().collect();
        let versions = [
            ("ktbench", env!("CARGO_PKG_VERSION")),
            ("manifest-format", "1"),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        Self {
            command: command.to_string(),
            config_digest: digest_settings(&settings),
            settings,
            dataset_digest: None,
            master_seed: None,
            versions,
            started_at,
            finished_at: started_at,
        }
    }

    pub fn write(mut self, dir: &Path) -> Result<()> {
        self.finished_at = unix_now();
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self).map_err(|e| CliError::Check(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| io_error(&path, e))
    }
}
