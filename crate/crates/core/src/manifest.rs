//! Run manifests: what was run, with which settings, how long each stage
//! took, and a SHA-256 digest of every file written.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub timings: Vec<StageTiming>,
    pub outputs: Vec<OutputDigest>,
    #[serde(skip)]
    started: Option<Instant>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            timings: Vec::new(),
            outputs: Vec::new(),
            started: Some(Instant::now()),
        }
    }

    /// Runs `f` and records its wall time under `stage`.
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.record(stage, start.elapsed().as_secs_f64());
        out
    }

    pub fn record(&mut self, stage: &str, seconds: f64) {
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            seconds,
        });
    }

    pub fn timing(&self, stage: &str) -> Option<f64> {
        self.timings.iter().find(|t| t.stage == stage).map(|t| t.seconds)
    }

    /// Writes `contents` to `path` and records its digest.
    pub fn write_output(&mut self, path: &Path, contents: &[u8]) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, contents)?;
        self.outputs.push(OutputDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(contents),
        });
        Ok(())
    }

    /// Appends the `total` stage and writes the manifest itself.
    pub fn finish(mut self, path: &Path) -> Result<Self> {
        if let Some(start) = self.started.take() {
            self.timings.push(StageTiming {
                stage: "total".into(),
                seconds: start.elapsed().as_secs_f64(),
            });
        }
        let mut json = serde_json::to_string_pretty(&self)?;
        json.push('\n');
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, json)?;
        Ok(self)
    }
}
