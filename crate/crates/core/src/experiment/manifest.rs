//! Per-run manifest: enough to re-run one grid cell exactly.

use super::ResolvedRun;
use crate::reinit::checkpoint::fnv1a64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub toolkit_version: String,
    /// Hash of the resolved cell config; stable under reordering of the
    /// source file because it is computed on the parsed form.
    pub config_hash: String,
    pub cell: BTreeMap<String, String>,
    pub run_seed: u64,
    pub task_seed: u64,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    pub metrics_path: String,
    /// The full resolved configuration of this run.
    pub resolved: ResolvedRun,
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Canonical hash of any serializable config value.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).unwrap_or_default();
    format!("{:016x}", fnv1a64(json))
}

impl RunManifest {
    pub fn write(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let body = serde_json::to_string_pretty(self)?;
        std::fs::write(path, body)
    }

    pub fn read(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let body = std::fs::read_to_string(path)?;
        serde_json::from_str(&body).map_err(std::io::Error::other)
    }
}
