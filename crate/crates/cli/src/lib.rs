//! Experiment runner for the `levy-area` library: JSON configs in, JSON
//! result documents and CSV plot data out.

pub mod cache;
pub mod config;
pub mod error;
pub mod output;
pub mod runner;

use serde_json::Value;

pub use config::{Experiment, ExperimentConfig};
pub use error::{CliError, Result};
pub use output::CsvTable;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_FAIL: i32 = 2;
pub const WORKERS_ENV: &str = "LEVY_AREA_WORKERS";

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub document: Value,
    pub pass: bool,
    pub csv: Option<CsvTable>,
}

impl RunOutput {
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            EXIT_PASS
        } else {
            EXIT_FAIL
        }
    }
}

/// Resolves the seed, runs the experiment and builds the result document.
pub fn run(mut cfg: ExperimentConfig) -> Result<RunOutput> {
    let seed = cfg.resolve_seed();
    let out = runner::execute(&cfg, seed)?;
    let document = output::document(&cfg, out.result, out.pass)?;
    Ok(RunOutput { document, pass: out.pass, csv: out.csv })
}

/// As [`run`] inside a pool of `workers` threads (logical cores when `None`).
pub fn run_with_workers(cfg: ExperimentConfig, workers: Option<usize>) -> Result<RunOutput> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(CliError::Config("worker budget must be at least 1".into()));
        }
        b = b.num_threads(w);
    }
    let pool = b.build().map_err(|e| CliError::Config(format!("cannot build worker pool: {e}")))?;
    pool.install(|| run(cfg))
}

/// Writes the document (to `output` or stdout) and the CSV table when a path
/// is configured.
pub fn emit(out: &RunOutput, cfg_output: Option<&std::path::Path>, csv_path: Option<&std::path::Path>) -> Result<()> {
    let text = output::render(&out.document)?;
    match cfg_output {
        Some(p) => std::fs::write(p, text)?,
        None => {
            use std::io::Write;
            std::io::stdout().write_all(text.as_bytes())?;
        }
    }
    if let (Some(p), Some(t)) = (csv_path, out.csv.as_ref()) {
        t.write(p)?;
    }
    Ok(())
}
