//! Run manifests: every command records its resolved configuration,
//! SHA-256 digests of its inputs, and the paths it wrote, so a rerun can
//! be audited byte-for-byte against the original.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    /// input path -> SHA-256 of its bytes
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub wall_time_secs: f64,
}

pub struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    inputs: BTreeMap<String, String>,
    started: Instant,
}

fn sha256_hex(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

impl ManifestBuilder {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            config,
            inputs: BTreeMap::new(),
            started: Instant::now(),
        }
    }

    /// Digest an input file. Missing files are recorded as such rather
    /// than failing; the command itself reports the real error.
    pub fn input(&mut self, path: &Path) {
        let digest = sha256_hex(path).unwrap_or_else(|_| "unreadable".to_string());
        self.inputs.insert(path.display().to_string(), digest);
    }

    pub fn input_dir_csvs(&mut self, dir: &Path) {
        for name in ["patterns.csv", "affinities.csv", "meta.json"] {
            self.input(&dir.join(name));
        }
    }

    pub fn write(self, out_dir: &Path, outputs: &[PathBuf]) -> std::io::Result<()> {
        let manifest = RunManifest {
            command: self.command.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.config,
            inputs: self.inputs,
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            wall_time_secs: self.started.elapsed().as_secs_f64(),
        };
        let path = out_dir.join(format!("manifest_{}.json", self.command));
        let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(path, body)
    }
}
