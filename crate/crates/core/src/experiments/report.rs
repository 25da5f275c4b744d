//! Output files: CSV tables plus a JSON manifest describing the run.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::Result;

use super::config::ExperimentConfig;

/// Writes `contents` to `dir/name`, creating `dir` if needed.
pub fn write_output(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub crate_version: String,
    pub parallel: bool,
    pub threads: usize,
    pub master_seed: u64,
    pub elapsed_seconds: f64,
    pub config: Option<ExperimentConfig>,
    /// Derived per-row quantities (δ_N, M_N, dt, grids).
    pub resolved: Value,
    pub outputs: Vec<String>,
    pub summary: Value,
}

impl Manifest {
    pub fn new(command: &str, master_seed: u64, threads: usize) -> Self {
        Self {
            command: command.to_string(),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            parallel: cfg!(feature = "parallel"),
            threads,
            master_seed,
            elapsed_seconds: 0.0,
            config: None,
            resolved: Value::Null,
            outputs: Vec::new(),
            summary: Value::Null,
        }
    }

    pub fn with_config(mut self, cfg: &ExperimentConfig) -> Result<Self> {
        self.resolved = json!(cfg.rows()?);
        self.config = Some(cfg.clone());
        Ok(self)
    }

    pub fn finish(mut self, elapsed: Duration, outputs: &[PathBuf], summary: Value) -> Self {
        self.elapsed_seconds = elapsed.as_secs_f64();
        self.outputs = outputs.iter().map(|p| p.display().to_string()).collect();
        self.summary = summary;
        self
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_output(dir, "manifest.json", &text)
    }
}
