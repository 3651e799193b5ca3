use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, SystemTime};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "run_manifest.json";

/// Written next to every output set.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: &'static str,
    pub seed: Option<u64>,
    pub started_at: String,
    pub duration_secs: f64,
    /// sha256 of each input file, keyed by role.
    pub inputs: BTreeMap<String, InputDigest>,
    pub outputs: Vec<String>,
    pub config: serde_json::Value,
}

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct ManifestBuilder {
    command: String,
    started: SystemTime,
    inputs: BTreeMap<String, InputDigest>,
}

impl ManifestBuilder {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            started: SystemTime::now(),
            inputs: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, role: &str, path: &Path, bytes: &[u8]) {
        self.inputs.insert(
            role.to_string(),
            InputDigest {
                path: path.display().to_string(),
                sha256: sha256_hex(bytes),
            },
        );
    }

    pub fn finish(self, seed: Option<u64>, config: serde_json::Value, outputs: Vec<String>) -> RunManifest {
        let elapsed = self.started.elapsed().unwrap_or(Duration::ZERO);
        RunManifest {
            command: self.command,
            tool_version: env!("CARGO_PKG_VERSION"),
            seed,
            started_at: DateTime::<Utc>::from(self.started).to_rfc3339_opts(SecondsFormat::Millis, true),
            duration_secs: elapsed.as_secs_f64(),
            inputs: self.inputs,
            outputs,
            config,
        }
    }
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).map_err(|e| CliError::output(&path, e))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::output(&path, e))
    }
}
