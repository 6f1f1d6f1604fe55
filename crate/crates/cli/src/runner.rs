use levy_area::analysis::{
    c_irr, char_function_check, estimate_regular_part, exp_moment_check, factorization_check, fit_scaling_with,
    fit_singular_fixed, increment_column, ks_gaussian_test, kurtosis_ratio, least_squares_line, markov_tail_check,
    independence_test, TestReport,
};
use levy_area::closed_form::{f_n_appendix, i_minus, i_plus, IntegralArgs, Orientation, PowerPair};
use levy_area::kernels::{
    fbm_covariance, k_increment_real, k_pm, k_real, kprime_pm, kprime_real, kstar_pm, kstar_real, ModelParams, Sign,
};
use levy_area::quadrature::{connected_moment_trace_with, integrate_1d_relative, second_moment_direct, TraceOptions};
use levy_area::simulate::{levy_area, overlap_covariance, CovarianceModel, SimulationMethod};
use levy_area::special_functions::{
    hyp2f1, hyp2f1_integral_oracle, hyp2f1_region, principal_power, Hyp2F1Options, Hyp2F1Params,
};
use levy_area::ComplexValue;
use num_complex::Complex64;
use serde_json::{json, Value};

use crate::cache::load_or_sample;
use crate::config::{Experiment, ExperimentConfig};
use crate::error::{CliError, Result};
use crate::output::CsvTable;

pub const DEFAULT_REL_TOL: f64 = 1e-8;
pub const DEFAULT_INTEGRAL_REL_TOL: f64 = 1e-7;
pub const DEFAULT_FN_REL_TOL: f64 = 1e-6;
pub const DEFAULT_SLOPE_TOL: f64 = 0.05;
pub const DEFAULT_DIFFERENCE_SLOPE_TOL: f64 = 0.15;
pub const DEFAULT_COEFFICIENT_REL_TOL: f64 = 0.05;
pub const DEFAULT_STD_ERRORS: f64 = 4.0;
pub const KERNEL_SYMMETRY_TOL: f64 = 1e-13;
pub const ORACLE_REL_TOL: f64 = 1e-10;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub result: Value,
    pub pass: bool,
    pub csv: Option<CsvTable>,
}

fn require<T: Copy>(v: Option<T>, name: &str, exp: Experiment) -> Result<T> {
    v.ok_or_else(|| CliError::Config(format!("{} needs {name}", exp.name())))
}

fn complex(v: [f64; 2]) -> ComplexValue {
    Complex64::new(v[0], v[1])
}

fn cjson(z: ComplexValue) -> Value {
    json!([z.re, z.im])
}

fn rel_err(a: ComplexValue, b: ComplexValue) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

fn report_json(r: &TestReport) -> Value {
    json!({"statistic": r.statistic, "threshold": r.threshold, "pass": r.pass, "n": r.n})
}

fn params(cfg: &ExperimentConfig, eta: f64) -> Result<ModelParams> {
    Ok(ModelParams::new(require(cfg.alpha, "alpha", cfg.experiment)?, eta)?)
}

/// Runs the experiment. The seed must already be resolved.
pub fn execute(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    match cfg.experiment {
        Experiment::Hyp2f1Check => hyp2f1_check(cfg),
        Experiment::KernelCheck => kernel_check(cfg),
        Experiment::Iminus => integral_check(cfg, Orientation::Minus),
        Experiment::Iplus => integral_check(cfg, Orientation::Plus),
        Experiment::ConnectedMoment => connected_moment(cfg),
        Experiment::ScalingFit => scaling_fit(cfg),
        Experiment::Simulate => simulate(cfg, seed),
        Experiment::CltTest => clt_test(cfg, seed),
        Experiment::IndependenceTest => independence(cfg, seed),
        Experiment::ExpMoment => exp_moment(cfg, seed),
        Experiment::FnAppendix => fn_appendix(cfg),
    }
}

fn hyp2f1_check(cfg: &ExperimentConfig) -> Result<Outcome> {
    let h = require(cfg.hyp2f1, "hyp2f1", cfg.experiment)?;
    let tol = cfg.tolerances.rel_tol.unwrap_or(DEFAULT_REL_TOL);
    let p = Hyp2F1Params::new(h.a, h.b, h.c)?;
    let z = complex(h.z);
    let value = hyp2f1(p, z)?;
    let region = hyp2f1_region(z, Hyp2F1Options::default().region_radius);
    // The integral representation needs c > b > 0; a and b are symmetric.
    let oracle_params = if h.c > h.b && h.b > 0.0 {
        Some(p)
    } else if h.c > h.a && h.a > 0.0 {
        Some(p.swapped())
    } else {
        None
    };
    let oracle = oracle_params.map(|q| hyp2f1_integral_oracle(q, z)).transpose()?;
    let err = oracle.map(|o| rel_err(value, o));
    let pass = err.map_or(true, |e| e <= tol);
    let result = json!({
        "value": cjson(value),
        "region": format!("{region:?}"),
        "oracle": oracle.map(cjson),
        "rel_error": err,
        "rel_tol": tol,
        "pass": pass,
    });
    Ok(Outcome { result, pass, csv: None })
}

fn kernel_check(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p = params(cfg, require(cfg.eta, "eta", cfg.experiment)?)?;
    let points = cfg.points.clone().ok_or_else(|| CliError::Config("kernel-check needs points".into()))?;
    let alpha = p.alpha;
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for [x, y] in points {
        let mut entry = serde_json::Map::new();
        entry.insert("x".into(), json!(x));
        entry.insert("y".into(), json!(y));
        type Signed = fn(&ModelParams, Sign, f64, f64) -> levy_area::Result<ComplexValue>;
        type Real = fn(&ModelParams, f64, f64) -> levy_area::Result<f64>;
        let kinds: [(&str, Signed, Real); 3] =
            [("kprime", kprime_pm, kprime_real), ("k", k_pm, k_real), ("kstar", kstar_pm, kstar_real)];
        for (name, signed, real) in kinds {
            let plus = signed(&p, Sign::Plus, x, y)?;
            let minus = signed(&p, Sign::Minus, x, y)?;
            let r = real(&p, x, y)?;
            let scale = plus.norm().max(r.abs()).max(f64::MIN_POSITIVE);
            // K∓ = conj K±, and the real kernel is their sum.
            worst = worst.max((plus - minus.conj()).norm() / scale);
            worst = worst.max((plus + minus - r).norm() / scale);
            entry.insert(
                name.into(),
                json!({"plus": cjson(plus), "minus": cjson(minus), "real": r}),
            );
        }
        entry.insert("k_increment".into(), json!(k_increment_real(&p, x, y)?));
        entry.insert("fbm".into(), json!(fbm_covariance(alpha, x, y)));
        rows.push(Value::Object(entry));
    }
    let pass = worst <= KERNEL_SYMMETRY_TOL;
    let result = json!({
        "points": rows,
        "symmetry_error": worst,
        "symmetry_tol": KERNEL_SYMMETRY_TOL,
        "pass": pass,
    });
    Ok(Outcome { result, pass, csv: None })
}

/// Direct quadrature of I∓. Each piece between break points is split at its
/// midpoint and integrated in the offset from the nearer break, so that the
/// distances to a and b are formed without cancellation.
pub fn integral_by_quadrature(pp: PowerPair, args: IntegralArgs, orientation: Orientation) -> Result<ComplexValue> {
    let (a, b) = (args.a, args.b);
    let first = match orientation {
        Orientation::Minus => -I,
        Orientation::Plus => I,
    };
    let nan = Complex64::new(f64::NAN, f64::NAN);
    // Integrand in terms of u − a and u − b.
    let f = |da: ComplexValue, db: ComplexValue| -> ComplexValue {
        let x = principal_power(first * da, pp.beta1).unwrap_or(nan);
        let y = principal_power(-I * db, pp.beta2).unwrap_or(nan);
        x * y
    };
    let exponent_at = |x: f64| if b.im == 0.0 && x == b.re { pp.beta2 } else { 0.0 };
    let mut pts = vec![0.0, args.t];
    pts.extend([a.re, b.re].into_iter().filter(|x| *x > 0.0 && *x < args.t));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut total = Complex64::new(0.0, 0.0);
    for w in pts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let half = 0.5 * (hi - lo);
        let (la, lb) = (Complex64::from(lo) - a, Complex64::from(lo) - b);
        let (ha, hb) = (Complex64::from(hi) - a, Complex64::from(hi) - b);
        let left = integrate_1d_relative(|x| f(la + x, lb + x), 0.0, half, ORACLE_REL_TOL, Some((exponent_at(lo), 0.0)))?;
        let right = integrate_1d_relative(|x| f(ha - x, hb - x), 0.0, half, ORACLE_REL_TOL, Some((exponent_at(hi), 0.0)))?;
        total += left.0 + right.0;
    }
    Ok(total)
}

fn integral_check(cfg: &ExperimentConfig, orientation: Orientation) -> Result<Outcome> {
    let s = require(cfg.integral, "integral", cfg.experiment)?;
    let tol = cfg.tolerances.rel_tol.unwrap_or(DEFAULT_INTEGRAL_REL_TOL);
    let pp = PowerPair::new(s.beta1, s.beta2)?;
    let args = IntegralArgs::new(s.t, complex(s.a), complex(s.b))?;
    args.check(orientation)?;
    let value = match orientation {
        Orientation::Minus => i_minus(pp, args)?,
        Orientation::Plus => i_plus(pp, args)?,
    };
    let quad = integral_by_quadrature(pp, args, orientation)?;
    let err = rel_err(value, quad);
    let pass = err <= tol;
    let result = json!({
        "value": cjson(value),
        "quadrature": cjson(quad),
        "rel_error": err,
        "rel_tol": tol,
        "divergent_regime": pp.is_divergent(),
        "pass": pass,
    });
    Ok(Outcome { result, pass, csv: None })
}

fn trace_options(cfg: &ExperimentConfig, with_derivative: bool) -> TraceOptions {
    let mut o = TraceOptions { with_eta_derivative: with_derivative, ..TraceOptions::default() };
    if let Some(t) = cfg.tolerances.trace_rel_tol {
        o.rel_tol = t;
    }
    o
}

fn connected_moment(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p = params(cfg, require(cfg.eta, "eta", cfg.experiment)?)?;
    let order = require(cfg.order, "order", cfg.experiment)?;
    let t = require(cfg.t, "t", cfg.experiment)?;
    let n_nodes = require(cfg.n_nodes, "n_nodes", cfg.experiment)?;
    let r = connected_moment_trace_with(&p, t, order, n_nodes, &trace_options(cfg, true))?;
    let leading = c_irr(order, p.alpha).ok().map(|c| c * t * p.eta.powf(4.0 * order as f64 * p.alpha - 1.0));
    let result = json!({
        "value": r.value,
        "coarse_value": r.coarse_value,
        "eta_derivative": r.eta_derivative,
        "n_nodes": r.n_nodes,
        "warnings": r.warnings,
        "singular_leading_term": leading,
        "pass": true,
    });
    Ok(Outcome { result, pass: true, csv: None })
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

/// Slope of ln|φ(ηₖ) − φ(ηₖ₊₁)| against ln ηₖ over consecutive sweep points.
pub fn difference_slope(etas: &[f64], values: &[f64]) -> Result<f64> {
    if etas.len() < 3 || etas.len() != values.len() {
        return Err(CliError::Config("difference slope needs at least three etas".into()));
    }
    let xs: Vec<f64> = etas[..etas.len() - 1].iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = values.windows(2).map(|w| (w[0] - w[1]).abs().ln()).collect();
    Ok(least_squares_line(&xs, &ys).0)
}

fn scaling_fit(cfg: &ExperimentConfig) -> Result<Outcome> {
    let alpha = require(cfg.alpha, "alpha", cfg.experiment)?;
    let order = require(cfg.order, "order", cfg.experiment)?;
    let t = require(cfg.t, "t", cfg.experiment)?;
    let n_nodes = require(cfg.n_nodes, "n_nodes", cfg.experiment)?;
    let etas = cfg.etas.clone().ok_or_else(|| CliError::Config("scaling-fit needs etas".into()))?;
    let opts = trace_options(cfg, true);
    let mut values = Vec::with_capacity(etas.len());
    let mut derivs = Vec::with_capacity(etas.len());
    let mut warnings = Vec::new();
    for &eta in &etas {
        let r = connected_moment_trace_with(&ModelParams::new(alpha, eta)?, t, order, n_nodes, &opts)?;
        values.push(r.value);
        derivs.push(r.eta_derivative.unwrap_or(f64::NAN));
        warnings.extend(r.warnings);
    }
    let exponent = 4.0 * order as f64 * alpha - 1.0;
    let mut table = CsvTable::new(&["eta", "raw_value", "regular_estimate", "singular_part", "fitted_value"]);
    let (result, pass) = if exponent < 0.0 {
        let slope_tol = cfg.tolerances.slope_tol.unwrap_or(DEFAULT_SLOPE_TOL);
        let coef_tol = cfg.tolerances.coefficient_rel_tol.unwrap_or(DEFAULT_COEFFICIENT_REL_TOL);
        let est = estimate_regular_part(&etas, &values, Some(&derivs), alpha, order)?;
        let pairs: Vec<(f64, f64)> = etas.iter().copied().zip(values.iter().copied()).collect();
        let loglog = fit_scaling_with(&pairs, |e| est.fixed.regular_part(e))?;
        let expected = c_irr(order, alpha)? * t;
        let coef_err = (est.fixed.coefficient - expected).abs() / expected.abs();
        let free_ok = (est.free.exponent - exponent).abs() <= slope_tol;
        let loglog_ok = (loglog.slope - exponent).abs() <= slope_tol;
        let coef_ok = coef_err <= coef_tol;
        for (i, &eta) in etas.iter().enumerate() {
            let reg = est.fixed.regular_part(eta);
            table.push(vec![fmt(eta), fmt(values[i]), fmt(reg), fmt(values[i] - reg), fmt(est.fixed.value(eta))]);
        }
        let corr = |c: &[(f64, f64)]| c.iter().map(|(e, q)| json!({"exponent": e, "coefficient": q})).collect::<Vec<_>>();
        let result = json!({
            "mode": "singular",
            "etas": etas,
            "values": values,
            "eta_derivatives": derivs,
            "warnings": warnings,
            "expected_exponent": exponent,
            "expected_coefficient": expected,
            "fixed_fit": {
                "regular": est.fixed.regular,
                "coefficient": est.fixed.coefficient,
                "exponent": est.fixed.exponent,
                "corrections": corr(&est.fixed.corrections),
                "max_residual": est.fixed.max_residual,
            },
            "free_fit": {
                "regular": est.free.regular,
                "coefficient": est.free.coefficient,
                "exponent": est.free.exponent,
                "corrections": corr(&est.free.corrections),
                "max_residual": est.free.max_residual,
            },
            "loglog": {
                "slope": loglog.slope,
                "intercept": loglog.intercept,
                "coefficient": loglog.coefficient(),
                "residual": loglog.residual,
            },
            "coefficient_rel_error": coef_err,
            "slope_tol": slope_tol,
            "coefficient_rel_tol": coef_tol,
            "checks": {"free_exponent": free_ok, "loglog_slope": loglog_ok, "coefficient": coef_ok},
        });
        (result, free_ok && loglog_ok && coef_ok)
    } else {
        // The η^{4Nα−1} term vanishes; successive differences decay at the
        // leading correction rate.
        let slope_tol = cfg.tolerances.slope_tol.unwrap_or(DEFAULT_DIFFERENCE_SLOPE_TOL);
        let rate = (2.0 * alpha).min(exponent);
        let slope = difference_slope(&etas, &values)?;
        let fit = fit_singular_fixed(&etas, &values, rate, &[])?;
        for (i, &eta) in etas.iter().enumerate() {
            table.push(vec![
                fmt(eta),
                fmt(values[i]),
                fmt(fit.regular),
                fmt(values[i] - fit.regular),
                fmt(fit.value(eta)),
            ]);
        }
        let differences: Vec<f64> = values.windows(2).map(|w| w[0] - w[1]).collect();
        let ok = (slope - rate).abs() <= slope_tol;
        let result = json!({
            "mode": "differences",
            "etas": etas,
            "values": values,
            "eta_derivatives": derivs,
            "warnings": warnings,
            "differences": differences,
            "expected_rate": rate,
            "difference_slope": slope,
            "limit_fit": {"regular": fit.regular, "coefficient": fit.coefficient, "exponent": fit.exponent, "max_residual": fit.max_residual},
            "slope_tol": slope_tol,
            "checks": {"difference_slope": ok},
        });
        (result, ok)
    };
    let mut result = result;
    result["pass"] = json!(pass);
    Ok(Outcome { result, pass, csv: Some(table) })
}

fn interval(cfg: &ExperimentConfig) -> Result<(f64, f64)> {
    let [s, t] = require(cfg.interval, "interval", cfg.experiment)?;
    if !(t > s) {
        return Err(CliError::Config(format!("interval [{s}, {t}] is empty")));
    }
    Ok((s, t))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean of squares and its standard error.
fn second_moment(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let sq: Vec<f64> = v.iter().map(|x| x * x).collect();
    let m = mean(&sq);
    let var = sq.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn simulate(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let e = load_or_sample(cfg, seed)?;
    let k = cfg.tolerances.std_errors.unwrap_or(DEFAULT_STD_ERRORS);
    let (s, t) = interval(cfg)?;
    let last = e.grid.len() - 1;
    let x_end = e.grid.points[last];
    let x0 = e.grid.points[0];
    // Series paths are increments from the first grid point.
    let expected_var = match (e.method, e.covariance) {
        (SimulationMethod::Cholesky, CovarianceModel::Literal) => k_real(&e.params, x_end, x_end)?,
        _ => k_increment_real(&e.params, x_end, x_end)? - k_increment_real(&e.params, x0, x0)?,
    };
    let mut variance_checks = Vec::new();
    let mut pass = true;
    for c in 0..2 {
        let col = e.column(c, last);
        let n = col.len() as f64;
        let m = mean(&col);
        let var = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        let se = expected_var * (2.0 / (n - 1.0)).sqrt();
        let ok = (var - expected_var).abs() <= k * se;
        pass &= ok;
        variance_checks.push(json!({"component": c, "sample_variance": var, "expected": expected_var, "std_error": se, "pass": ok}));
    }
    let areas = levy_area(&e, s, t)?;
    let raw: Vec<f64> = areas.iter().map(|a| a.value).collect();
    let (m2, m2_se) = second_moment(&raw);
    let quad = second_moment_direct(&e.params, s, t)?;
    let result = json!({
        "n_paths": e.n_paths,
        "grid_points": e.grid.len(),
        "method": format!("{:?}", e.method),
        "covariance": format!("{:?}", e.covariance),
        "variance_at_end": variance_checks,
        "area": {
            "s": s,
            "t": t,
            "mean": mean(&raw),
            "second_moment": m2,
            "second_moment_std_error": m2_se,
            "second_moment_quadrature": quad,
            "rescaled_second_moment": m2 * levy_area::simulate::rescale_factor(&e.params).powi(2),
            "c_irr_limit": c_irr(1, e.params.alpha)? * (t - s),
        },
        "std_errors": k,
        "pass": pass,
    });
    Ok(Outcome { result, pass, csv: None })
}

fn clt_test(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let e = load_or_sample(cfg, seed)?;
    let (s, t) = interval(cfg)?;
    let areas = levy_area(&e, s, t)?;
    let rescaled: Vec<f64> = areas.iter().map(|a| a.rescaled).collect();
    let raw: Vec<f64> = areas.iter().map(|a| a.value).collect();
    let c = c_irr(1, e.params.alpha)?;
    let ks = ks_gaussian_test(&rescaled, c * (t - s))?;
    let kurt = kurtosis_ratio(&raw);
    let (m2, m2_se) = second_moment(&rescaled);
    let overlap = match cfg.second_interval {
        Some([s2, t2]) => {
            let ov = overlap_covariance(&e, (s, t), (s2, t2))?;
            let len = (t.min(t2) - s.max(s2)).max(0.0);
            let expected = c * len;
            let rel = if expected > 0.0 { (ov.rescaled - expected).abs() / expected } else { f64::NAN };
            Some(json!({
                "second_interval": [s2, t2],
                "raw": ov.raw,
                "rescaled": ov.rescaled,
                "std_error": ov.std_error,
                "expected": expected,
                "rel_error": rel,
            }))
        }
        None => None,
    };
    let mut table = CsvTable::new(&["sample_index", "rescaled_area"]);
    for (i, v) in rescaled.iter().enumerate() {
        table.push(vec![i.to_string(), fmt(*v)]);
    }
    let result = json!({
        "interval": [s, t],
        "variance_limit": c * (t - s),
        "ks": report_json(&ks),
        "rescaled_second_moment": m2,
        "rescaled_second_moment_std_error": m2_se,
        "kurtosis_ratio": kurt,
        "overlap": overlap,
        "pass": ks.pass,
    });
    Ok(Outcome { result, pass: ks.pass, csv: Some(table) })
}

fn independence(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let e = load_or_sample(cfg, seed)?;
    let (s, t) = interval(cfg)?;
    let incs = cfg.increments.clone().ok_or_else(|| CliError::Config("independence-test needs increments".into()))?;
    if incs.is_empty() {
        return Err(CliError::Config("increments is empty".into()));
    }
    let areas = levy_area(&e, s, t)?;
    let spec: Vec<(usize, f64, f64)> = incs.iter().map(|i| (i.component, i.s, i.t)).collect();
    let report = independence_test(&e, &areas, &spec)?;
    let rescaled: Vec<f64> = areas.iter().map(|a| a.rescaled).collect();
    let first = increment_column(&e, incs[0].component, incs[0].s, incs[0].t)?;
    let fac = factorization_check(&rescaled, &first)?;
    let correlations: Vec<f64> = spec
        .iter()
        .map(|&(c, a, b)| increment_column(&e, c, a, b).map(|col| levy_area::analysis::sample_correlation(&rescaled, &col)))
        .collect::<levy_area::Result<_>>()?;
    let pass = report.pass && fac.pass;
    let result = json!({
        "interval": [s, t],
        "correlation": report_json(&report),
        "correlations": correlations,
        "factorization": {
            "mixed": fac.mixed,
            "product": fac.product,
            "std_error": fac.std_error,
            "pass": fac.pass,
        },
        "pass": pass,
    });
    Ok(Outcome { result, pass, csv: None })
}

fn exp_moment(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let e = load_or_sample(cfg, seed)?;
    let (s, t) = interval(cfg)?;
    let lambdas = cfg.lambdas.clone().ok_or_else(|| CliError::Config("exp-moment needs lambdas".into()))?;
    let multiples =
        cfg.tail_multiples.clone().ok_or_else(|| CliError::Config("exp-moment needs tail_multiples".into()))?;
    let areas = levy_area(&e, s, t)?;
    let rescaled: Vec<f64> = areas.iter().map(|a| a.rescaled).collect();
    let alpha = e.params.alpha;
    let exp = exp_moment_check(&rescaled, &lambdas, t - s, alpha, e.params.eta)?;
    let (tail, points) = markov_tail_check(&rescaled, &multiples, t - s, alpha)?;
    let cf = char_function_check(&rescaled, &lambdas, t - s, alpha, e.params.eta)?;
    let pass = exp.report.pass && tail.pass;
    let result = json!({
        "interval": [s, t],
        "c0": levy_area::analysis::EXP_MOMENT_C0,
        "exp_moment": {
            "report": report_json(&exp.report),
            "points": exp.points.iter().map(|p| json!({"lambda": p.lambda, "empirical": p.empirical, "bound": p.bound})).collect::<Vec<_>>(),
            "largest_lambda": exp.largest_lambda,
        },
        "markov_tail": {
            "report": report_json(&tail),
            "points": points.iter().map(|p| json!({"multiple": p.multiple, "upper": p.upper, "lower": p.lower, "bound": p.bound})).collect::<Vec<_>>(),
        },
        "char_function": report_json(&cf),
        "pass": pass,
    });
    Ok(Outcome { result, pass, csv: None })
}

/// Direct quadrature of F_n.
pub fn f_n_by_quadrature(alpha: f64, beta: f64, n: usize, t: f64, z: ComplexValue) -> Result<ComplexValue> {
    let fact: f64 = (1..=n).map(|k| k as f64).product();
    let f = |u: f64| -> ComplexValue {
        let w = principal_power(-I * (z - u), 2.0 * alpha - 2.0).unwrap_or(Complex64::new(f64::NAN, f64::NAN));
        w * (u.powf(beta) * (t - u).powi(n as i32) / fact)
    };
    let mid = z.re.clamp(0.25 * t, 0.75 * t);
    let a = integrate_1d_relative(&f, 0.0, mid, ORACLE_REL_TOL, Some((beta, 0.0)))?.0;
    let b = integrate_1d_relative(&f, mid, t, ORACLE_REL_TOL, None)?.0;
    Ok(a + b)
}

fn fn_appendix(cfg: &ExperimentConfig) -> Result<Outcome> {
    let alpha = require(cfg.alpha, "alpha", cfg.experiment)?;
    let a = require(cfg.appendix, "appendix", cfg.experiment)?;
    let tol = cfg.tolerances.rel_tol.unwrap_or(DEFAULT_FN_REL_TOL);
    let z = complex(a.z);
    let value = f_n_appendix(alpha, a.beta, a.n, a.t, z)?;
    let quad = f_n_by_quadrature(alpha, a.beta, a.n, a.t, z)?;
    let err = rel_err(value, quad);
    let pass = err <= tol;
    let result = json!({
        "value": cjson(value),
        "quadrature": cjson(quad),
        "rel_error": err,
        "rel_tol": tol,
        "pass": pass,
    });
    Ok(Outcome { result, pass, csv: None })
}
