use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Provenance of one command invocation.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config_sha256: String,
    pub seed: u64,
    pub command: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub outputs: Vec<String>,
    pub library_version: String,
}

pub fn config_hash(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn start(config_sha256: String, seed: u64, command: String) -> Self {
        Self {
            config_sha256,
            seed,
            command,
            started_unix: now(),
            finished_unix: 0,
            outputs: Vec::new(),
            library_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    /// Comment lines every output file carries.
    pub fn header(&self) -> Vec<(&'static str, String)> {
        vec![
            ("manifest", MANIFEST_FILE.to_string()),
            ("config_sha256", self.config_sha256.clone()),
            ("seed", self.seed.to_string()),
            ("version", self.library_version.clone()),
        ]
    }

    pub fn finish(&mut self, outputs: &[&Path]) {
        self.finished_unix = now();
        self.outputs = outputs
            .iter()
            .map(|p| {
                p.file_name()
                    .map(|f| f.to_string_lossy().into_owned())
                    .unwrap_or_default()
            })
            .collect();
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}
