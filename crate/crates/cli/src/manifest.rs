//! Run manifests: enough to reproduce every output of a command.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct FileRef {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileRef {
    pub fn hash(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(Self {
            path: path.to_path_buf(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the command's canonical JSON configuration.
    pub config_hash: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub inputs: Vec<FileRef>,
    pub outputs: Vec<FileRef>,
    pub tool_version: String,
    /// Worker cap from `HLCTDP_THREADS`; the solver itself is sequential.
    pub threads: Option<usize>,
    pub wall_time_s: f64,
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize, seed: u64) -> Self {
        let config = serde_json::to_value(config).expect("configurations serialise");
        let canonical = serde_json::to_string(&config).expect("JSON values serialise");
        Self {
            command: command.to_string(),
            config_hash: hex::encode(Sha256::digest(canonical.as_bytes())),
            config,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            threads: threads(),
            wall_time_s: 0.0,
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileRef::hash(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(FileRef::hash(path)?);
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifests serialise");
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}

pub fn threads() -> Option<usize> {
    std::env::var("HLCTDP_THREADS").ok()?.trim().parse().ok()
}
