use std::path::Path;

use levy_area::kernels::B_ETA_CONVENTION;
use levy_area::simulate::{RNG_ALGORITHM, RNG_CRATE_VERSION};
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::error::Result;

pub const LIBRARY_NAME: &str = "levy-area";
pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Bumped whenever a CSV column set changes.
pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// The result document. `config` is the effective config with the seed
/// resolved, so re-running it reproduces the document.
pub fn document(cfg: &ExperimentConfig, result: Value, pass: bool) -> Result<Value> {
    Ok(json!({
        "schema_version": cfg.schema_version,
        "experiment": cfg.experiment.name(),
        "library": {"name": LIBRARY_NAME, "version": LIBRARY_VERSION},
        "b_eta_convention": B_ETA_CONVENTION,
        "rng": {"algorithm": RNG_ALGORITHM, "crate": RNG_CRATE_VERSION},
        "csv_schema_version": CSV_SCHEMA_VERSION,
        "config": serde_json::to_value(cfg)?,
        "result": result,
        "pass": pass,
    }))
}

pub fn render(doc: &Value) -> Result<String> {
    let mut s = serde_json::to_string_pretty(doc)?;
    s.push('\n');
    Ok(s)
}
