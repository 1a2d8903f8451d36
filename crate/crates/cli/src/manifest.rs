//! Run manifests.
//!
//! The manifest hash covers the config snapshot, input hashes, seeds and
//! tool version, but not timestamps or outputs, so reruns of the same
//! experiment share it. Text artifacts carry it in a leading comment line.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::exit::{CliError, CliResult};

pub const TOOL: &str = "calibench";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub stage: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// The effective config, after flag overrides, as TOML.
    pub config: String,
    /// Input path to SHA-256 of its contents.
    pub inputs: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    pub hash: String,
    /// Unix seconds.
    pub started_at: u64,
    pub finished_at: Option<u64>,
    /// Artifact path relative to the run directory.
    pub artifacts: BTreeMap<String, ArtifactEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn new(config: String, inputs: BTreeMap<String, String>, seeds: BTreeMap<String, u64>) -> Self {
        let mut h = Sha256::new();
        for part in [TOOL, VERSION, config.as_str()] {
            h.update(part.as_bytes());
            h.update([0]);
        }
        for (k, v) in &inputs {
            h.update(format!("input {k} {v}\n").as_bytes());
        }
        for (k, v) in &seeds {
            h.update(format!("seed {k} {v}\n").as_bytes());
        }
        Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            config,
            inputs,
            seeds,
            hash: hex::encode(h.finalize()),
            started_at: unix_now(),
            finished_at: None,
            artifacts: BTreeMap::new(),
        }
    }

    /// Comment line naming this manifest, for text artifacts.
    pub fn header(&self, comment: &str) -> String {
        format!("{comment} manifest {}\n", self.hash)
    }

    pub fn record(&mut self, rel: &str, stage: &str, bytes: &[u8]) {
        self.artifacts.insert(
            rel.to_string(),
            ArtifactEntry {
                stage: stage.to_string(),
                sha256: sha256_hex(bytes),
            },
        );
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, json + "\n").map_err(CliError::from)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::data(format!("invalid manifest {}: {e}", path.display())))
    }
}
