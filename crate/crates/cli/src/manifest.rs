use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use gpt_density::sampler::RunStats;
use serde::Serialize;

use crate::config::Settings;
use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Wall-clock seconds per sampler step, summed over chains.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StepTimings {
    pub residual_precisions: f64,
    pub latents: f64,
    pub function_at_rows: f64,
    pub function_at_grid: f64,
    pub kernel_precisions: f64,
    pub lengthscales: f64,
}

impl StepTimings {
    pub fn add(&mut self, stats: &RunStats) {
        let s = stats.step_seconds;
        self.residual_precisions += s[0];
        self.latents += s[1];
        self.function_at_rows += s[2];
        self.function_at_grid += s[3];
        self.kernel_precisions += s[4];
        self.lengthscales += s[5];
    }
}

/// Record of one command invocation.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: Settings,
    pub inputs: Vec<PathBuf>,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub chains: usize,
    pub step_seconds: StepTimings,
    /// Length-scale acceptance rate per channel, one list per chain.
    pub lengthscale_acceptance: Vec<Vec<f64>>,
    pub outputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

impl RunManifest {
    pub fn start(command: &str, config: &Settings) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.model.seed,
            config: config.clone(),
            inputs: Vec::new(),
            started_unix: now(),
            finished_unix: 0.0,
            chains: 0,
            step_seconds: StepTimings::default(),
            lengthscale_acceptance: Vec::new(),
            outputs: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn record_chain(&mut self, stats: &RunStats) {
        self.chains += 1;
        self.step_seconds.add(stats);
        self.lengthscale_acceptance.push(stats.acceptance_rates());
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        let m = message.into();
        eprintln!("warning: {m}");
        self.warnings.push(m);
    }

    /// Stamp the end time, list the manifest itself and write it to `dir`.
    pub fn finish(mut self, dir: &Path) -> Result<PathBuf> {
        self.finished_unix = now();
        let path = dir.join(MANIFEST_FILE);
        self.outputs.push(path.clone());
        let text = serde_json::to_string_pretty(&self).map_err(|e| CliError::Validation(e.to_string()))?;
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}
