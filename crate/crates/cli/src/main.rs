use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use levy_area_cli::config::{read_config_file, resolve, Experiment};
use levy_area_cli::{emit, run_with_workers, CliError, Result, EXIT_ERROR, WORKERS_ENV};
use serde_json::{json, Map, Value};

#[derive(Parser)]
#[command(name = "levy-area", version, about = "Run levy-area experiments and emit JSON / CSV results")]
struct Cli {
    /// Worker threads (default: logical cores).
    #[arg(long, global = true, env = WORKERS_ENV)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment named in a config file.
    Run(Overrides),
    /// Gauss 2F1 against its integral representation.
    Hyp2f1Check(Overrides),
    /// Kernel values and their symmetries.
    KernelCheck(Overrides),
    /// I- closed form against quadrature.
    Iminus(Overrides),
    /// I+ closed form against quadrature.
    Iplus(Overrides),
    /// Connected moment by Nyström trace.
    ConnectedMoment(Overrides),
    /// Singular exponent and coefficient over an eta sweep.
    ScalingFit(Overrides),
    /// Draw an ensemble, check variances and area moments.
    Simulate(Overrides),
    /// KS test of rescaled areas.
    CltTest(Overrides),
    /// Correlation of areas with increments.
    IndependenceTest(Overrides),
    /// Exponential moment and tail bounds.
    ExpMoment(Overrides),
    /// Iterated integral F_n against quadrature.
    FnAppendix(Overrides),
}

#[derive(Args, Default)]
struct Overrides {
    /// JSON config; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    /// Comma-separated eta sweep.
    #[arg(long, value_delimiter = ',')]
    etas: Option<Vec<f64>>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    n_paths: Option<usize>,
    /// Integer seed or "random".
    #[arg(long)]
    seed: Option<String>,
    /// cholesky or series.
    #[arg(long)]
    method: Option<String>,
    /// literal or increment.
    #[arg(long)]
    covariance: Option<String>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    n_nodes: Option<usize>,
    /// Area interval as s,t.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    interval: Option<Vec<f64>>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Any config key as key=JSON, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Overrides {
    fn to_map(&self) -> Result<Map<String, Value>> {
        let mut m = Map::new();
        let mut put = |k: &str, v: Value| {
            m.insert(k.to_string(), v);
        };
        if let Some(v) = self.alpha {
            put("alpha", json!(v));
        }
        if let Some(v) = self.eta {
            put("eta", json!(v));
        }
        if let Some(v) = &self.etas {
            put("etas", json!(v));
        }
        let mut grid = Map::new();
        if let Some(v) = self.t_end {
            grid.insert("t_end".into(), json!(v));
        }
        if let Some(v) = self.step {
            grid.insert("step".into(), json!(v));
        }
        if !grid.is_empty() {
            put("grid", Value::Object(grid));
        }
        if let Some(v) = self.n_paths {
            put("n_paths", json!(v));
        }
        if let Some(s) = &self.seed {
            let v = match s.parse::<u64>() {
                Ok(n) => json!(n),
                Err(_) => json!(s),
            };
            put("seed", v);
        }
        if let Some(v) = &self.method {
            put("method", json!(v));
        }
        if let Some(v) = &self.covariance {
            put("covariance", json!(v));
        }
        if let Some(v) = self.order {
            put("order", json!(v));
        }
        if let Some(v) = self.t {
            put("t", json!(v));
        }
        if let Some(v) = self.n_nodes {
            put("n_nodes", json!(v));
        }
        if let Some(v) = &self.interval {
            put("interval", json!(v));
        }
        if let Some(v) = &self.output {
            put("output", json!(v));
        }
        if let Some(v) = &self.csv {
            put("csv", json!(v));
        }
        if let Some(v) = &self.cache {
            put("cache", json!(v));
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {kv}")))?;
            let value = serde_json::from_str(v).unwrap_or_else(|_| json!(v));
            put(k, value);
        }
        Ok(m)
    }
}

fn split(cmd: Command) -> (Option<Experiment>, Overrides) {
    match cmd {
        Command::Run(o) => (None, o),
        Command::Hyp2f1Check(o) => (Some(Experiment::Hyp2f1Check), o),
        Command::KernelCheck(o) => (Some(Experiment::KernelCheck), o),
        Command::Iminus(o) => (Some(Experiment::Iminus), o),
        Command::Iplus(o) => (Some(Experiment::Iplus), o),
        Command::ConnectedMoment(o) => (Some(Experiment::ConnectedMoment), o),
        Command::ScalingFit(o) => (Some(Experiment::ScalingFit), o),
        Command::Simulate(o) => (Some(Experiment::Simulate), o),
        Command::CltTest(o) => (Some(Experiment::CltTest), o),
        Command::IndependenceTest(o) => (Some(Experiment::IndependenceTest), o),
        Command::ExpMoment(o) => (Some(Experiment::ExpMoment), o),
        Command::FnAppendix(o) => (Some(Experiment::FnAppendix), o),
    }
}

fn main_inner(cli: Cli) -> Result<i32> {
    let (experiment, over) = split(cli.command);
    if experiment.is_none() && over.config.is_none() {
        return Err(CliError::Config("run needs --config".into()));
    }
    let file = over.config.as_deref().map(read_config_file).transpose()?;
    let cfg = resolve(experiment, file, over.to_map()?)?;
    let (output, csv) = (cfg.output.clone(), cfg.csv.clone());
    let out = run_with_workers(cfg, cli.workers)?;
    emit(&out, output.as_deref(), csv.as_deref())?;
    if !out.pass {
        eprintln!("assertion failed: see \"result\" in the output document");
    }
    Ok(out.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
