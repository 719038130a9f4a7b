//! Run manifests: what a command read, what it wrote, and when.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
}

impl Artifact {
    pub fn of(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("reading {} for checksum", path.display()))?;
        Ok(Self {
            path: path.to_path_buf(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: &'static str,
    pub config: serde_json::Value,
    pub seed: u64,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    /// Ground-truth label lookups made by the command.
    pub label_reads: usize,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub wall_clock_secs: f64,
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub struct RunRecorder {
    command: &'static str,
    started: f64,
    inputs: Vec<PathBuf>,
}

impl RunRecorder {
    pub fn start(command: &'static str) -> Self {
        Self {
            command,
            started: unix_now(),
            inputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: impl Into<PathBuf>) {
        self.inputs.push(path.into());
    }

    /// Checksums every input and output and writes the manifest to `path`.
    pub fn finish(
        self,
        path: &Path,
        config: impl Serialize,
        seed: u64,
        outputs: &[PathBuf],
        label_reads: usize,
    ) -> Result<PathBuf> {
        let finished = unix_now();
        let manifest = RunManifest {
            command: self.command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            config: serde_json::to_value(config)?,
            seed,
            inputs: self.inputs.iter().map(|p| Artifact::of(p)).collect::<Result<_>>()?,
            outputs: outputs.iter().map(|p| Artifact::of(p)).collect::<Result<_>>()?,
            label_reads,
            started_unix: self.started,
            finished_unix: finished,
            wall_clock_secs: finished - self.started,
        };
        write_json(path, &manifest)?;
        Ok(path.to_path_buf())
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
