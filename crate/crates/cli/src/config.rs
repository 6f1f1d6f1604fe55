//! Experiment configuration: JSON documents with `schema_version` 1, merged
//! from per-experiment defaults, a config file and command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SEED: u64 = 20240917;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Hyp2f1Check,
    KernelCheck,
    Iminus,
    Iplus,
    ConnectedMoment,
    ScalingFit,
    Simulate,
    CltTest,
    IndependenceTest,
    ExpMoment,
    FnAppendix,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Hyp2f1Check => "hyp2f1-check",
            Experiment::KernelCheck => "kernel-check",
            Experiment::Iminus => "iminus",
            Experiment::Iplus => "iplus",
            Experiment::ConnectedMoment => "connected-moment",
            Experiment::ScalingFit => "scaling-fit",
            Experiment::Simulate => "simulate",
            Experiment::CltTest => "clt-test",
            Experiment::IndependenceTest => "independence-test",
            Experiment::ExpMoment => "exp-moment",
            Experiment::FnAppendix => "fn-appendix",
        }
    }

    pub fn uses_ensemble(self) -> bool {
        matches!(
            self,
            Experiment::Simulate | Experiment::CltTest | Experiment::IndependenceTest | Experiment::ExpMoment
        )
    }
}

/// Seed as a number or the keyword `"random"` (drawn from OS entropy and
/// echoed as a number).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    Value(u64),
    Keyword(SeedKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedKeyword {
    Random,
}

impl Default for SeedSpec {
    fn default() -> Self {
        SeedSpec::Value(DEFAULT_SEED)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodSpec {
    Cholesky,
    Series,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceSpec {
    Literal,
    Increment,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub t_end: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyp2F1Spec {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// [re, im]
    pub z: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegralSpec {
    pub beta1: f64,
    pub beta2: f64,
    pub t: f64,
    pub a: [f64; 2],
    pub b: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppendixSpec {
    pub beta: f64,
    pub n: usize,
    pub t: f64,
    pub z: [f64; 2],
}

/// One increment B^{(component)}_t − B^{(component)}_s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncrementSpec {
    pub component: usize,
    pub s: f64,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_rel_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coefficient_rel_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_errors: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: Experiment,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub etas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_paths: Option<usize>,
    #[serde(default)]
    pub seed: SeedSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<MethodSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariance: Option<CovarianceSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_nodes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub second_interval: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub increments: Option<Vec<IncrementSpec>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_multiples: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hyp2f1: Option<Hyp2F1Spec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub integral: Option<IntegralSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub appendix: Option<AppendixSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache: Option<PathBuf>,
}

/// Defaults filled in before the config file and flags are applied.
pub fn default_config(experiment: Experiment) -> Value {
    let mut v = json!({
        "schema_version": SCHEMA_VERSION,
        "experiment": experiment.name(),
    });
    let extra = match experiment {
        Experiment::Hyp2f1Check => json!({"hyp2f1": {"a": 0.6, "b": 0.8, "c": 2.1, "z": [-0.5, 0.3]}}),
        Experiment::KernelCheck => json!({
            "alpha": 0.2, "eta": 0.05,
            "points": [[0.5, 1.0], [1.0, 1.0], [0.3, 0.0]],
        }),
        Experiment::Iminus => json!({
            "integral": {"beta1": -1.6, "beta2": 0.4, "t": 1.0, "a": [0.4, -0.2], "b": [0.5, -0.1]},
        }),
        Experiment::Iplus => json!({
            "integral": {"beta1": -1.6, "beta2": 0.4, "t": 1.0, "a": [0.4, 0.15], "b": [0.5, -0.1]},
        }),
        Experiment::ConnectedMoment => json!({"alpha": 0.2, "eta": 0.01, "order": 1, "t": 1.0, "n_nodes": 2048}),
        Experiment::ScalingFit => json!({
            "alpha": 0.2, "order": 1, "t": 1.0, "n_nodes": 2048,
            "etas": [0.04, 0.02, 0.01, 0.005],
        }),
        Experiment::Simulate => json!({
            "alpha": 0.2, "eta": 0.01, "grid": {"t_end": 1.0, "step": 0.001},
            "n_paths": 2000, "method": "cholesky", "covariance": "literal", "interval": [0.0, 1.0],
        }),
        Experiment::CltTest => json!({
            "alpha": 0.2, "eta": 0.01, "grid": {"t_end": 1.5, "step": 0.001},
            "n_paths": 2000, "method": "cholesky", "covariance": "literal",
            "interval": [0.0, 1.0], "second_interval": [0.5, 1.5],
        }),
        Experiment::IndependenceTest => json!({
            "alpha": 0.2, "eta": 0.01, "grid": {"t_end": 1.0, "step": 0.001},
            "n_paths": 2000, "method": "cholesky", "covariance": "literal", "interval": [0.0, 1.0],
            "increments": [
                {"component": 0, "s": 0.0, "t": 0.25}, {"component": 0, "s": 0.25, "t": 0.5},
                {"component": 0, "s": 0.5, "t": 0.75}, {"component": 0, "s": 0.75, "t": 1.0},
                {"component": 1, "s": 0.0, "t": 0.25}, {"component": 1, "s": 0.25, "t": 0.5},
                {"component": 1, "s": 0.5, "t": 0.75}, {"component": 1, "s": 0.75, "t": 1.0},
            ],
        }),
        Experiment::ExpMoment => json!({
            "alpha": 0.2, "eta": 0.01, "grid": {"t_end": 1.0, "step": 0.001},
            "n_paths": 20000, "method": "cholesky", "covariance": "literal", "interval": [0.0, 1.0],
            "lambdas": [0.5, 1.0, 2.0], "tail_multiples": [2.0, 3.0],
        }),
        Experiment::FnAppendix => json!({
            "alpha": 0.2, "appendix": {"beta": 0.0, "n": 0, "t": 1.0, "z": [0.5, 0.5]},
        }),
    };
    merge(&mut v, extra);
    v
}

/// Recursive object merge; non-object values in `over` replace those in `base`.
pub fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

pub fn read_config_file(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("config {} is not valid JSON: {e}", path.display())))?;
    if !v.is_object() {
        return Err(CliError::Config(format!("config {} must be a JSON object", path.display())));
    }
    Ok(v)
}

/// Builds the effective config: defaults for the experiment, then `file`,
/// then `overrides`. The experiment is taken from `experiment` or, failing
/// that, from the file.
pub fn resolve(experiment: Option<Experiment>, file: Option<Value>, overrides: Map<String, Value>) -> Result<ExperimentConfig> {
    let from_file = match &file {
        Some(v) => match v.get("experiment") {
            Some(e) => Some(
                serde_json::from_value::<Experiment>(e.clone())
                    .map_err(|err| CliError::Config(format!("unknown experiment {e}: {err}")))?,
            ),
            None => None,
        },
        None => None,
    };
    let exp = match (experiment, from_file) {
        (Some(a), Some(b)) if a != b => {
            return Err(CliError::Config(format!(
                "config names experiment {} but {} was requested",
                b.name(),
                a.name()
            )))
        }
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => return Err(CliError::Config("no experiment given".into())),
    };
    let mut v = default_config(exp);
    if let Some(f) = file {
        if let Some(s) = f.get("schema_version") {
            if s.as_u64() != Some(SCHEMA_VERSION as u64) {
                return Err(CliError::Config(format!("schema_version {s} is not supported, expected {SCHEMA_VERSION}")));
            }
        }
        merge(&mut v, f);
    }
    merge(&mut v, Value::Object(overrides));
    let cfg: ExperimentConfig =
        serde_json::from_value(v).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Values of α at which singular and regular exponents of the trace sweep
/// (orders 1 to 4) coincide or a singular coefficient has a pole.
pub fn alpha_deny_list() -> Vec<(u32, u32)> {
    let mut out: Vec<(u32, u32)> = Vec::new();
    let mut push = |p: u32, q: u32| {
        let g = gcd(p, q);
        let r = (p / g, q / g);
        if 4 * r.0 < r.1 && !out.contains(&r) {
            out.push(r);
        }
    };
    for n in 2..=4u32 {
        for k in 1..n {
            push(k, 4 * n);
        }
        push(1, 4 * n - 2);
        push(1, 4 * n - 4);
    }
    out.sort_by(|a, b| (a.0 as f64 / a.1 as f64).total_cmp(&(b.0 as f64 / b.1 as f64)));
    out
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub const DENY_LIST_TOL: f64 = 1e-9;

pub fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 0.0 && alpha < 0.25) {
        return Err(CliError::Config(format!("alpha = {alpha} must lie in (0, 1/4)")));
    }
    for (p, q) in alpha_deny_list() {
        if (alpha - p as f64 / q as f64).abs() < DENY_LIST_TOL {
            return Err(CliError::Config(format!("alpha = {alpha} is the degenerate value {p}/{q}")));
        }
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} is not supported, expected {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        if let Some(a) = self.alpha {
            check_alpha(a)?;
        }
        let needs_alpha = !matches!(
            self.experiment,
            Experiment::Hyp2f1Check | Experiment::Iminus | Experiment::Iplus
        );
        if needs_alpha && self.alpha.is_none() {
            return Err(CliError::Config(format!("{} needs alpha", self.experiment.name())));
        }
        if let Some(e) = self.eta {
            if !(e.is_finite() && e > 0.0) {
                return Err(CliError::Config(format!("eta = {e} must be positive")));
            }
        }
        if let Some(es) = &self.etas {
            if es.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
                return Err(CliError::Config("etas must be positive".into()));
            }
        }
        if self.experiment.uses_ensemble() {
            for (name, present) in [
                ("eta", self.eta.is_some()),
                ("grid", self.grid.is_some()),
                ("n_paths", self.n_paths.is_some()),
                ("interval", self.interval.is_some()),
            ] {
                if !present {
                    return Err(CliError::Config(format!("{} needs {name}", self.experiment.name())));
                }
            }
        }
        if let Some(c) = self.cache.as_ref() {
            if !self.experiment.uses_ensemble() {
                return Err(CliError::Config(format!(
                    "cache {} given for {}, which draws no paths",
                    c.display(),
                    self.experiment.name()
                )));
            }
        }
        Ok(())
    }

    /// The seed, with `"random"` drawn from OS entropy.
    pub fn resolve_seed(&mut self) -> u64 {
        match self.seed {
            SeedSpec::Value(s) => s,
            SeedSpec::Keyword(SeedKeyword::Random) => {
                let s: u64 = rand::random();
                self.seed = SeedSpec::Value(s);
                s
            }
        }
    }
}
