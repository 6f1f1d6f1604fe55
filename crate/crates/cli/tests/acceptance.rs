//! Acceptance suite. Prints one `criterion N: PASS/FAIL …` line per
//! criterion. Criteria listed in `KNOWN_UNMET` report without failing the
//! target; any other FAIL makes it exit non-zero.
//!
//! `cargo test --test acceptance -- 3 7` runs a subset.

use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use levy_area::analysis::{
    c_irr, correlation_test, exp_moment_check, increment_column, ks_gaussian_test, kurtosis_ratio, markov_tail_check,
};
use levy_area::closed_form::{f_n_appendix, i_minus, i_plus, IntegralArgs, Orientation, PowerPair};
use levy_area::diagrams::{bilinear_moment_isserlis, moments_by_exponentiation, moments_from_cumulants, wick_diagram_sum, CumulantVector};
use levy_area::kernels::ModelParams;
use levy_area::simulate::{levy_area, overlap_covariance, sample_paths_with, PathEnsemble, SimulationOptions, TimeGrid};
use levy_area::special_functions::{
    hyp2f1, hyp2f1_integral_oracle, hyp2f1_via, Hyp2F1Options, Hyp2F1Params, Hyp2F1Region,
};
use levy_area::ComplexValue;
use levy_area_cli::config::{resolve, Experiment, DEFAULT_SEED};
use levy_area_cli::runner::{f_n_by_quadrature, integral_by_quadrature};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::{json, Value};

const KNOWN_UNMET: [usize; 3] = [4, 5, 6];
const ALPHA: f64 = 0.2;
const MC_ETA: f64 = 0.01;
const MC_PATHS: usize = 20_000;
const CLT_PATHS: usize = 2_000;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn rel(a: ComplexValue, b: ComplexValue) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

fn frac(x: f64) -> f64 {
    (x - x.round()).abs()
}

fn criterion_1() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_oracle: f64 = 0.0;
    let mut cases = 0;
    while cases < 500 {
        let a = rng.random_range(-2.0..2.0);
        let b = rng.random_range(0.1..2.0);
        let c = b + rng.random_range(0.1..2.0);
        if frac(c) < 0.05 || frac(b - a) < 0.05 || frac(c - a - b) < 0.05 || frac(c - a) < 0.05 {
            continue;
        }
        let z = Complex64::from_polar(rng.random_range(0.0..6.0), rng.random_range(-std::f64::consts::PI..std::f64::consts::PI));
        if z.im.abs() < 1e-3 && z.re > 0.9 {
            continue;
        }
        let p = Hyp2F1Params::new(a, b, c).unwrap();
        match (hyp2f1(p, z), hyp2f1_integral_oracle(p, z)) {
            (Ok(v), Ok(o)) => worst_oracle = worst_oracle.max(rel(v, o)),
            _ => worst_oracle = f64::INFINITY,
        }
        cases += 1;
    }
    let opts = Hyp2F1Options::default();
    let forms = [Hyp2F1Region::Series, Hyp2F1Region::OneMinusZ, Hyp2F1Region::InverseZ, Hyp2F1Region::InverseOneMinusZ];
    let mut worst_conn: f64 = 0.0;
    let mut overlap = 0;
    while overlap < 200 {
        let a = rng.random_range(-2.5..2.5);
        let b = rng.random_range(-2.5..2.5);
        let c = rng.random_range(-2.5..3.5);
        if frac(c) < 0.05 || frac(b - a) < 0.05 || frac(c - a - b) < 0.05 || frac(c - a) < 0.05 || frac(c - b) < 0.05 {
            continue;
        }
        let z = Complex64::from_polar(rng.random_range(0.3..0.7), rng.random_range(-3.0..3.0));
        // 1/(1−z) lands on the cut for real z in (0, 1).
        if z.im.abs() < 0.05 && z.re > 0.0 {
            continue;
        }
        let p = Hyp2F1Params::new(a, b, c).unwrap();
        let vals: Vec<ComplexValue> = forms
            .iter()
            .map(|f| hyp2f1_via(p, z, *f, &opts).unwrap_or(Complex64::new(f64::NAN, f64::NAN)))
            .collect();
        let scale = vals[0].norm().max(1e-3);
        for i in 0..vals.len() {
            for j in i + 1..vals.len() {
                let d = (vals[i] - vals[j]).norm() / scale;
                worst_conn = if d.is_nan() { f64::INFINITY } else { worst_conn.max(d) };
            }
        }
        overlap += 1;
    }
    verdict(
        worst_oracle <= 1e-8 && worst_conn <= 1e-9,
        format!("{cases} oracle cases max rel {worst_oracle:.2e} (tol 1e-8); {overlap} overlap points, pairwise max {worst_conn:.2e} (tol 1e-9)"),
    )
}

fn random_pair(rng: &mut ChaCha8Rng) -> PowerPair {
    loop {
        let b1: f64 = rng.random_range(-1.9..0.9);
        let b2: f64 = rng.random_range(-0.9..0.9);
        let s = b1 + b2 + 1.0;
        if s.abs() > 0.05 && frac(b1) > 0.02 && frac(b2) > 0.02 && frac(b1 + b2) > 0.02 {
            return PowerPair::new(b1, b2).unwrap();
        }
    }
}

fn criterion_2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    let mut divergent = 0;
    let mut errors = Vec::new();
    for k in 0..100 {
        let pp = random_pair(&mut rng);
        divergent += pp.is_divergent() as usize;
        let br = rng.random_range(0.05..0.95);
        // Every fifth b is real.
        let bi = if k % 5 == 0 { 0.0 } else { rng.random_range(0.01..0.5) };
        let ar = rng.random_range(0.05..0.95);
        let (orientation, ai) = if k % 2 == 0 {
            (Orientation::Minus, -bi - rng.random_range(0.01..0.5))
        } else {
            (Orientation::Plus, rng.random_range(0.01..0.5))
        };
        let args = IntegralArgs::new(1.0, Complex64::new(ar, ai), Complex64::new(br, -bi)).unwrap();
        let v = match orientation {
            Orientation::Minus => i_minus(pp, args),
            Orientation::Plus => i_plus(pp, args),
        };
        let q = integral_by_quadrature(pp, args, orientation);
        worst = match (v, q) {
            (Ok(v), Ok(q)) => worst.max(rel(v, q)),
            (v, q) => {
                errors.push(format!("{pp:?} {args:?}: {:?} {:?}", v.err(), q.err()));
                f64::INFINITY
            }
        };
    }
    verdict(
        worst <= 1e-7,
        format!("100 configurations (50 I-, 50 I+, {divergent} divergent), max rel {worst:.2e} (tol 1e-7){}", errors.join("; ")),
    )
}

fn run_config(exp: Experiment, over: Value) -> Result<levy_area_cli::RunOutput, String> {
    let Value::Object(m) = over else { unreachable!() };
    let cfg = resolve(Some(exp), None, m).map_err(|e| e.to_string())?;
    levy_area_cli::run(cfg).map_err(|e| format!("[{}] {e}", e.code()))
}

fn criterion_3() -> Verdict {
    let out = match run_config(
        Experiment::ScalingFit,
        json!({"alpha": ALPHA, "order": 1, "t": 1.0, "n_nodes": 2048, "etas": [0.04, 0.02, 0.01, 0.005]}),
    ) {
        Ok(o) => o,
        Err(e) => return verdict(false, format!("error {e}")),
    };
    let r = &out.document["result"];
    let exp = r["free_fit"]["exponent"].as_f64().unwrap_or(f64::NAN);
    let coef = r["fixed_fit"]["coefficient"].as_f64().unwrap_or(f64::NAN);
    let want = r["expected_coefficient"].as_f64().unwrap_or(f64::NAN);
    let slope = r["loglog"]["slope"].as_f64().unwrap_or(f64::NAN);
    verdict(
        out.pass,
        format!(
            "exponent {exp:.4} (log-log {slope:.4}) vs -0.2 +/- 0.05; coefficient {coef:.5} vs c_irr {want:.5} ({:.2}%, tol 5%)",
            100.0 * (coef - want).abs() / want
        ),
    )
}

fn criterion_4() -> Verdict {
    let out = match run_config(
        Experiment::ScalingFit,
        json!({"alpha": ALPHA, "order": 2, "t": 1.0, "n_nodes": 2048, "etas": [0.04, 0.02, 0.01]}),
    ) {
        Ok(o) => o,
        Err(e) => return verdict(false, format!("error {e}")),
    };
    let r = &out.document["result"];
    let slope = r["difference_slope"].as_f64().unwrap_or(f64::NAN);
    verdict(out.pass, format!("difference slope {slope:.4} vs 0.4 +/- 0.15; values {}", r["values"]))
}

fn ensemble() -> &'static PathEnsemble {
    static E: OnceLock<PathEnsemble> = OnceLock::new();
    E.get_or_init(|| {
        let p = ModelParams::new(ALPHA, MC_ETA).unwrap();
        let grid = TimeGrid::uniform(1.5, 0.001).unwrap();
        sample_paths_with(&p, &grid, MC_PATHS, DEFAULT_SEED, &SimulationOptions::default()).unwrap()
    })
}

fn head(e: &PathEnsemble, n: usize) -> PathEnsemble {
    let len = n * e.grid.len();
    PathEnsemble { n_paths: n, b1: e.b1[..len].to_vec(), b2: e.b2[..len].to_vec(), ..e.clone() }
}

fn criterion_5() -> Verdict {
    let e = ensemble();
    let raw: Vec<f64> = levy_area(e, 0.0, 1.0).unwrap().iter().map(|a| a.value).collect();
    let k = kurtosis_ratio(&raw);
    verdict((k - 3.0).abs() <= 0.3, format!("m4/m2^2 = {k:.4} vs 3 +/- 10% over {} paths", raw.len()))
}

fn criterion_6() -> Verdict {
    let full = ensemble();
    let e = head(full, CLT_PATHS);
    let c = c_irr(1, ALPHA).unwrap();
    let areas = levy_area(&e, 0.0, 1.0).unwrap();
    let rescaled: Vec<f64> = areas.iter().map(|a| a.rescaled).collect();
    let ks = ks_gaussian_test(&rescaled, c).unwrap();
    let mut cols = Vec::new();
    for comp in 0..2 {
        for q in 0..4 {
            let s = 0.25 * q as f64;
            cols.push(increment_column(&e, comp, s, s + 0.25).unwrap());
        }
    }
    let ind = correlation_test(&rescaled, &cols).unwrap();
    let ov = overlap_covariance(full, (0.0, 1.0), (0.5, 1.5)).unwrap();
    let want = 0.5 * c;
    let ov_rel = (ov.rescaled - want).abs() / want;
    let ov_pass = ov_rel <= 0.15;
    verdict(
        ks.pass && ind.pass && ov_pass,
        format!(
            "KS {:.4} vs {:.4} ({}); max |corr| {:.4} vs {:.4} ({}); overlap cov {:.4} vs {:.4} ({:.0}% off, {})",
            ks.statistic,
            ks.threshold,
            if ks.pass { "pass" } else { "fail" },
            ind.statistic,
            ind.threshold,
            if ind.pass { "pass" } else { "fail" },
            ov.rescaled,
            want,
            100.0 * ov_rel,
            if ov_pass { "pass" } else { "fail" },
        ),
    )
}

fn criterion_7() -> Verdict {
    let e = ensemble();
    let rescaled: Vec<f64> = levy_area(e, 0.0, 1.0).unwrap().iter().map(|a| a.rescaled).collect();
    let exp = exp_moment_check(&rescaled, &[0.5, 1.0, 2.0], 1.0, ALPHA, MC_ETA).unwrap();
    let (tail, _) = markov_tail_check(&rescaled, &[2.0, 3.0], 1.0, ALPHA).unwrap();
    verdict(
        exp.report.pass && tail.pass,
        format!(
            "worst E[exp]/bound {:.3}, worst tail/bound {:.3}, largest lambda {:?}",
            exp.report.statistic, tail.statistic, exp.largest_lambda
        ),
    )
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn criterion_8() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let m = rng.random_range(2..=6);
        let n = rng.random_range(2..=6);
        let order = 1 + k % 3;
        let t = random_matrix(&mut rng, m, n);
        let spd = |rng: &mut ChaCha8Rng, d: usize| {
            let a = random_matrix(rng, d, d);
            &a * a.transpose() + DMatrix::identity(d, d) * 0.1
        };
        let kp = spd(&mut rng, m);
        let kk = spd(&mut rng, n);
        worst = match (wick_diagram_sum(&t, &kp, &kk, order), bilinear_moment_isserlis(&t, &kp, &kk, order)) {
            (Ok(a), Ok(b)) => worst.max((a - b).abs() / a.abs().max(b.abs())),
            _ => f64::INFINITY,
        };
    }
    let mut worst_rt: f64 = 0.0;
    for _ in 0..20 {
        let mut c = CumulantVector::new();
        for j in 1..=5 {
            c = c.with(2 * j, rng.random_range(-2.0..2.0));
        }
        for order in 1..=5 {
            let a = moments_from_cumulants(&c, 2 * order).unwrap();
            let b = moments_by_exponentiation(&c, 2 * order).unwrap();
            worst_rt = worst_rt.max((a - b).abs() / a.abs().max(b.abs()).max(1.0));
        }
    }
    verdict(
        worst <= 1e-10 && worst_rt <= 1e-10,
        format!("20 models, Wick vs Isserlis max rel {worst:.2e}; cumulant round trip max {worst_rt:.2e} (tol 1e-10)"),
    )
}

fn criterion_9() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let alpha = rng.random_range(0.02..0.24);
        let beta = rng.random_range(-0.9..1.5);
        let z = Complex64::new(rng.random_range(-1.5..1.5), rng.random_range(0.05..1.5));
        for n in 0..=2 {
            worst = match (f_n_appendix(alpha, beta, n, 1.0, z), f_n_by_quadrature(alpha, beta, n, 1.0, z)) {
                (Ok(v), Ok(q)) => worst.max(rel(v, q)),
                _ => f64::INFINITY,
            };
        }
    }
    verdict(worst <= 1e-6, format!("50 configurations x n in {{0,1,2}}, max rel {worst:.2e} (tol 1e-6)"))
}

fn criterion_10() -> Verdict {
    let max = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).to_string();
    let small_mc = ["--eta", "0.05", "--step", "0.005", "--n-paths", "500"];
    let runs: Vec<(&str, Vec<&str>)> = vec![
        ("hyp2f1-check", vec![]),
        ("kernel-check", vec![]),
        ("iminus", vec![]),
        ("iplus", vec![]),
        ("fn-appendix", vec![]),
        ("connected-moment", vec!["--eta", "0.1", "--n-nodes", "256"]),
        (
            "scaling-fit",
            vec!["--n-nodes", "512", "--etas", "0.16,0.08,0.04,0.02", "--set", "tolerances={\"trace_rel_tol\": 1e-3}"],
        ),
        ("simulate", small_mc.to_vec()),
        ("clt-test", small_mc.to_vec()),
        ("independence-test", small_mc.to_vec()),
        ("exp-moment", small_mc.to_vec()),
    ];
    let mut mismatched = Vec::new();
    for (exp, extra) in &runs {
        let mut bodies = Vec::new();
        for workers in ["1", "1", "2", max.as_str()] {
            let out = Command::new(env!("CARGO_BIN_EXE_levy-area"))
                .arg(exp)
                .args(extra)
                .args(["--workers", workers])
                .output()
                .expect("binary runs");
            if out.status.code() == Some(1) {
                mismatched.push(format!("{exp} errored: {}", String::from_utf8_lossy(&out.stderr).trim()));
            }
            bodies.push((out.status.code(), out.stdout));
        }
        if bodies.windows(2).any(|w| w[0] != w[1]) {
            mismatched.push(exp.to_string());
        }
    }
    verdict(
        mismatched.is_empty(),
        format!("{} experiments at worker budgets 1, 1, 2, {max}: {}", runs.len(), if mismatched.is_empty() { "byte-identical".to_string() } else { mismatched.join("; ") }),
    )
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, fn() -> Verdict); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let mut regressions = Vec::new();
    for (n, f) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let v = f();
        let status = if v.pass { "PASS" } else { "FAIL" };
        let note = if !v.pass && KNOWN_UNMET.contains(&n) { " [known unmet]" } else { "" };
        println!("criterion {n}: {status} {} ({:.1}s){note}", v.detail, start.elapsed().as_secs_f64());
        if !v.pass && !KNOWN_UNMET.contains(&n) {
            regressions.push(n);
        }
    }
    if !regressions.is_empty() {
        eprintln!("unexpected failures: {regressions:?}");
        std::process::exit(1);
    }
}
