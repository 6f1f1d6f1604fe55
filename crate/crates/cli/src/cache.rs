use levy_area::kernels::ModelParams;
use levy_area::simulate::{
    read_cache, sample_paths_with, write_cache, CovarianceModel, PathEnsemble, SimulationMethod, SimulationOptions,
    TimeGrid,
};

use crate::config::{CovarianceSpec, ExperimentConfig, MethodSpec};
use crate::error::{CliError, Result};

pub fn simulation_options(cfg: &ExperimentConfig) -> SimulationOptions {
    SimulationOptions {
        method: match cfg.method.unwrap_or(MethodSpec::Cholesky) {
            MethodSpec::Cholesky => SimulationMethod::Cholesky,
            MethodSpec::Series => SimulationMethod::Series,
        },
        covariance: match cfg.covariance.unwrap_or(CovarianceSpec::Literal) {
            CovarianceSpec::Literal => CovarianceModel::Literal,
            CovarianceSpec::Increment => CovarianceModel::Increment,
        },
        series_terms: None,
    }
}

fn missing(name: &str) -> CliError {
    CliError::Config(format!("ensemble needs {name}"))
}

/// Draws the ensemble described by `cfg`, or reads it from `cfg.cache` when
/// that file exists and matches. A fresh ensemble is written to the cache
/// path when one is given.
pub fn load_or_sample(cfg: &ExperimentConfig, seed: u64) -> Result<PathEnsemble> {
    let alpha = cfg.alpha.ok_or_else(|| missing("alpha"))?;
    let eta = cfg.eta.ok_or_else(|| missing("eta"))?;
    let g = cfg.grid.ok_or_else(|| missing("grid"))?;
    let n_paths = cfg.n_paths.ok_or_else(|| missing("n_paths"))?;
    let params = ModelParams::new(alpha, eta)?;
    let grid = TimeGrid::uniform(g.t_end, g.step)?;
    let opts = simulation_options(cfg);
    if let Some(path) = cfg.cache.as_deref() {
        if path.exists() {
            let e = read_cache(path)?;
            let matches = e.params == params
                && e.grid == grid
                && e.seed == seed
                && e.n_paths == n_paths
                && e.method == opts.method
                && e.covariance == opts.covariance;
            if !matches {
                return Err(levy_area::Error::Cache(format!(
                    "cache {} was drawn with a different configuration",
                    path.display()
                ))
                .into());
            }
            return Ok(e);
        }
    }
    let e = sample_paths_with(&params, &grid, n_paths, seed, &opts)?;
    if let Some(path) = cfg.cache.as_deref() {
        write_cache(&e, path)?;
    }
    Ok(e)
}
