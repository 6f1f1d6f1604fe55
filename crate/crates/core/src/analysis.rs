//! Predicted asymptotics and their statistical checks: scaling fits of the
//! connected moments, Kolmogorov–Smirnov and independence tests on rescaled
//! areas, and exponential-moment bounds.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::diagrams::empirical_cumulants;
use crate::error::{Error, Result};

pub use crate::closed_form::{c_irr, c_irr_printed};

/// Constant of the exponential-moment bound, frozen after calibration.
pub const EXP_MOMENT_C0: f64 = 2.0;
/// KS critical constant at the 1% level.
pub const KS_CRITICAL_1PCT: f64 = 1.63;
pub const MIN_TEST_SAMPLES: usize = 500;
/// λ sweep window (0, 4] for the largest admissible λ.
pub const LAMBDA_SWEEP_STEP: f64 = 0.25;
pub const LAMBDA_SWEEP_MAX: f64 = 4.0;

/// (2N−1)!!·C_irr,1^N·t^N·η^{(4α−1)N}.
pub fn predicted_moment(n: usize, alpha: f64, t: f64, eta: f64) -> Result<f64> {
    let c = c_irr(1, alpha)?;
    let dfact: f64 = (1..=n).map(|k| (2 * k - 1) as f64).product();
    let nf = n as i32;
    Ok(dfact * c.powi(nf) * t.powi(nf) * eta.powf((4.0 * alpha - 1.0) * n as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit {
    pub etas: Vec<f64>,
    pub values: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// Max absolute residual of the log-log line.
    pub residual: f64,
}

impl ScalingFit {
    /// exp(intercept), the fitted coefficient of η^slope.
    pub fn coefficient(&self) -> f64 {
        self.intercept.exp()
    }
}

/// Least-squares line through (ln η, ln(value − regular_estimate)).
pub fn fit_scaling(pairs: &[(f64, f64)], regular_estimate: f64) -> Result<ScalingFit> {
    fit_scaling_with(pairs, |_| regular_estimate)
}

/// As [`fit_scaling`] with an η-dependent regular part.
pub fn fit_scaling_with(pairs: &[(f64, f64)], regular: impl Fn(f64) -> f64) -> Result<ScalingFit> {
    check_sweep(pairs.iter().map(|p| p.0))?;
    let mut xs = Vec::with_capacity(pairs.len());
    let mut ys = Vec::with_capacity(pairs.len());
    for &(eta, v) in pairs {
        let singular = v - regular(eta);
        if !(singular > 0.0) {
            return Err(Error::Fit(format!("singular part {singular} at eta = {eta} is not positive")));
        }
        xs.push(eta.ln());
        ys.push(singular.ln());
    }
    let (slope, intercept) = least_squares_line(&xs, &ys);
    let residual = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).abs()).fold(0.0, f64::max);
    Ok(ScalingFit {
        etas: pairs.iter().map(|p| p.0).collect(),
        values: pairs.iter().map(|p| p.1).collect(),
        slope,
        intercept,
        residual,
    })
}

fn check_sweep(etas: impl Iterator<Item = f64>) -> Result<()> {
    let etas: Vec<f64> = etas.collect();
    if etas.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 etas, got {}", etas.len())));
    }
    if etas.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::Fit("etas must be positive".into()));
    }
    let lo = etas.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = etas.iter().copied().fold(0.0, f64::max);
    if hi < 4.0 * lo * (1.0 - 1e-12) {
        return Err(Error::Fit(format!("etas span {hi}/{lo} < 4")));
    }
    Ok(())
}

/// (slope, intercept) of the least-squares line y ≈ intercept + slope·x.
pub fn least_squares_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// value(η) ≈ R + S η^p + Σⱼ Qⱼ η^{eⱼ}.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularFit {
    pub regular: f64,
    pub coefficient: f64,
    pub exponent: f64,
    /// (exponent, coefficient) of the regular corrections.
    pub corrections: Vec<(f64, f64)>,
    /// Max absolute value residual.
    pub max_residual: f64,
}

impl SingularFit {
    pub fn regular_part(&self, eta: f64) -> f64 {
        self.regular + self.corrections.iter().map(|(e, q)| q * eta.powf(*e)).sum::<f64>()
    }

    pub fn singular_part(&self, eta: f64) -> f64 {
        self.coefficient * eta.powf(self.exponent)
    }

    pub fn value(&self, eta: f64) -> f64 {
        self.regular_part(eta) + self.singular_part(eta)
    }
}

/// Regular corrections η^{2α} and η^{4α} carried by the kernels.
pub fn default_corrections(alpha: f64) -> Vec<f64> {
    vec![2.0 * alpha, 4.0 * alpha]
}

/// Linear least squares with the singular exponent fixed.
pub fn fit_singular_fixed(etas: &[f64], values: &[f64], exponent: f64, corrections: &[f64]) -> Result<SingularFit> {
    let cols = 2 + corrections.len();
    if etas.len() != values.len() || etas.len() < cols {
        return Err(Error::Fit(format!("{} points for {cols} parameters", etas.len())));
    }
    let a = DMatrix::from_fn(etas.len(), cols, |i, j| match j {
        0 => 1.0,
        1 => etas[i].powf(exponent),
        _ => etas[i].powf(corrections[j - 2]),
    });
    let b = DVector::from_column_slice(values);
    let x = a
        .clone()
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::Fit(format!("least squares failed: {e}")))?;
    let fit = SingularFit {
        regular: x[0],
        coefficient: x[1],
        exponent,
        corrections: corrections.iter().enumerate().map(|(j, e)| (*e, x[j + 2])).collect(),
        max_residual: 0.0,
    };
    Ok(with_residual(fit, etas, values))
}

fn with_residual(mut fit: SingularFit, etas: &[f64], values: &[f64]) -> SingularFit {
    fit.max_residual = etas.iter().zip(values).map(|(e, v)| (fit.value(*e) - v).abs()).fold(0.0, f64::max);
    fit
}

/// Nonlinear least squares with a free singular exponent (Levenberg–Marquardt),
/// started from `start`. With `derivatives` = dvalue/dη, the residuals
/// η·(model′ − derivative) are added.
pub fn fit_singular_free(
    etas: &[f64],
    values: &[f64],
    derivatives: Option<&[f64]>,
    start: &SingularFit,
) -> Result<SingularFit> {
    let n_corr = start.corrections.len();
    let n_par = 3 + n_corr;
    let n_res = etas.len() * if derivatives.is_some() { 2 } else { 1 };
    if let Some(d) = derivatives {
        if d.len() != etas.len() {
            return Err(Error::Fit("derivative count does not match etas".into()));
        }
    }
    if etas.len() != values.len() || n_res < n_par {
        return Err(Error::Fit(format!("{n_res} residuals for {n_par} parameters")));
    }
    let exps: Vec<f64> = start.corrections.iter().map(|c| c.0).collect();
    // θ = (R, S, p, Q₁, …)
    let mut theta = DVector::from_iterator(
        n_par,
        [start.regular, start.coefficient, start.exponent].into_iter().chain(start.corrections.iter().map(|c| c.1)),
    );
    let eval = |theta: &DVector<f64>| -> (DVector<f64>, DMatrix<f64>) {
        let mut r = DVector::zeros(n_res);
        let mut j = DMatrix::zeros(n_res, n_par);
        let (s, p) = (theta[1], theta[2]);
        for (i, &eta) in etas.iter().enumerate() {
            let ep = eta.powf(p);
            let ln = eta.ln();
            let mut f = theta[0] + s * ep;
            j[(i, 0)] = 1.0;
            j[(i, 1)] = ep;
            j[(i, 2)] = s * ep * ln;
            for (k, e) in exps.iter().enumerate() {
                let ee = eta.powf(*e);
                f += theta[3 + k] * ee;
                j[(i, 3 + k)] = ee;
            }
            r[i] = f - values[i];
            if let Some(d) = derivatives {
                let row = etas.len() + i;
                let mut g = s * p * ep;
                j[(row, 1)] = p * ep;
                j[(row, 2)] = s * ep * (1.0 + p * ln);
                for (k, e) in exps.iter().enumerate() {
                    let ee = eta.powf(*e);
                    g += theta[3 + k] * e * ee;
                    j[(row, 3 + k)] = e * ee;
                }
                r[row] = g - eta * d[i];
            }
        }
        (r, j)
    };
    let mut lambda = 1e-3;
    let (mut r, mut jac) = eval(&theta);
    let mut cost = r.norm_squared();
    for _ in 0..500 {
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        let mut improved = false;
        for _ in 0..30 {
            let mut m = jtj.clone();
            for d in 0..n_par {
                m[(d, d)] += lambda * jtj[(d, d)].max(1e-300);
            }
            let Some(step) = m.lu().solve(&(-&grad)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = &theta + &step;
            let (rt, jt) = eval(&trial);
            let ct = rt.norm_squared();
            if ct.is_finite() && ct < cost {
                let rel_step = step.norm() / theta.norm().max(1e-300);
                theta = trial;
                r = rt;
                jac = jt;
                let done = (cost - ct) <= 1e-15 * cost || rel_step < 1e-14;
                cost = ct;
                lambda = (lambda / 10.0).max(1e-15);
                improved = true;
                if done {
                    return Ok(free_fit(&theta, &exps, etas, values));
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    if !cost.is_finite() {
        return Err(Error::Fit("free-exponent fit diverged".into()));
    }
    Ok(free_fit(&theta, &exps, etas, values))
}

fn free_fit(theta: &DVector<f64>, exps: &[f64], etas: &[f64], values: &[f64]) -> SingularFit {
    let fit = SingularFit {
        regular: theta[0],
        coefficient: theta[1],
        exponent: theta[2],
        corrections: exps.iter().enumerate().map(|(k, e)| (*e, theta[3 + k])).collect(),
        max_residual: 0.0,
    };
    with_residual(fit, etas, values)
}

/// Regular-part estimate of a connected-moment sweep: the fixed-exponent
/// fit (singular coefficient) and the free-exponent refit (regular part and
/// slope).
#[derive(Debug, Clone, PartialEq)]
pub struct RegularEstimate {
    pub fixed: SingularFit,
    pub free: SingularFit,
}

pub fn estimate_regular_part(
    etas: &[f64],
    values: &[f64],
    derivatives: Option<&[f64]>,
    alpha: f64,
    order: usize,
) -> Result<RegularEstimate> {
    check_sweep(etas.iter().copied())?;
    let exponent = 4.0 * order as f64 * alpha - 1.0;
    let corrections = default_corrections(alpha);
    let fixed = fit_singular_fixed(etas, values, exponent, &corrections)?;
    let free = fit_singular_free(etas, values, derivatives, &fixed)?;
    Ok(RegularEstimate { fixed, free })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestReport {
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    pub n: usize,
}

impl TestReport {
    pub fn new(statistic: f64, threshold: f64, n: usize) -> Self {
        Self { statistic, threshold, pass: statistic <= threshold, n }
    }
}

fn require_samples(n: usize) -> Result<()> {
    if n < MIN_TEST_SAMPLES {
        return Err(Error::Precondition(format!("test needs n >= {MIN_TEST_SAMPLES}, got {n}")));
    }
    Ok(())
}

/// Kolmogorov–Smirnov statistic against N(0, variance), threshold 1.63/√n.
pub fn ks_gaussian_test(samples: &[f64], variance: f64) -> Result<TestReport> {
    require_samples(samples.len())?;
    let normal = Normal::new(0.0, variance.sqrt()).map_err(|e| Error::Precondition(format!("variance {variance}: {e}")))?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        let f = normal.cdf(*x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(TestReport::new(d, KS_CRITICAL_1PCT / n.sqrt(), sorted.len()))
}

/// Pearson correlation.
pub fn sample_correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Max |correlation| between `areas` and each increment column; threshold 3/√n.
pub fn correlation_test(areas: &[f64], increments: &[Vec<f64>]) -> Result<TestReport> {
    require_samples(areas.len())?;
    let mut worst: f64 = 0.0;
    for col in increments {
        if col.len() != areas.len() {
            return Err(Error::Precondition("increment column length differs from the area sample".into()));
        }
        if col == areas {
            return Err(Error::Precondition("a column is tested against itself".into()));
        }
        worst = worst.max(sample_correlation(areas, col).abs());
    }
    Ok(TestReport::new(worst, 3.0 / (areas.len() as f64).sqrt(), areas.len()))
}

/// Independence of rescaled areas from increments B^{(c)}_t − B^{(c)}_s,
/// given as (component, s, t) with component 0 or 1.
pub fn independence_test(
    e: &crate::simulate::PathEnsemble,
    areas: &[crate::simulate::AreaSample],
    increments: &[(usize, f64, f64)],
) -> Result<TestReport> {
    if areas.len() != e.n_paths {
        return Err(Error::Precondition("area sample does not match the ensemble".into()));
    }
    let cols = increments
        .iter()
        .map(|&(c, s, t)| increment_column(e, c, s, t))
        .collect::<Result<Vec<_>>>()?;
    let a: Vec<f64> = areas.iter().map(|s| s.rescaled).collect();
    correlation_test(&a, &cols)
}

pub fn increment_column(e: &crate::simulate::PathEnsemble, component: usize, s: f64, t: f64) -> Result<Vec<f64>> {
    if component > 1 {
        return Err(Error::Precondition(format!("component {component} is not 0 or 1")));
    }
    let i = e.grid.index_of(s)?;
    let j = e.grid.index_of(t)?;
    let a = e.column(component, i);
    let b = e.column(component, j);
    Ok(b.iter().zip(&a).map(|(x, y)| x - y).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorizationCheck {
    pub mixed: f64,
    pub product: f64,
    pub std_error: f64,
    pub pass: bool,
}

/// E[X²Y²] against E[X²]E[Y²] within 3 standard errors (influence-function SE
/// of the difference).
pub fn factorization_check(x: &[f64], y: &[f64]) -> Result<FactorizationCheck> {
    require_samples(x.len())?;
    if x.len() != y.len() {
        return Err(Error::Precondition("sample lengths differ".into()));
    }
    let n = x.len() as f64;
    let x2: Vec<f64> = x.iter().map(|v| v * v).collect();
    let y2: Vec<f64> = y.iter().map(|v| v * v).collect();
    let mx = x2.iter().sum::<f64>() / n;
    let my = y2.iter().sum::<f64>() / n;
    let mixed = x2.iter().zip(&y2).map(|(a, b)| a * b).sum::<f64>() / n;
    let psi: Vec<f64> = x2.iter().zip(&y2).map(|(a, b)| a * b - my * a - mx * b).collect();
    let mp = psi.iter().sum::<f64>() / n;
    let var = psi.iter().map(|p| (p - mp) * (p - mp)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let product = mx * my;
    Ok(FactorizationCheck { mixed, product, std_error: se, pass: (mixed - product).abs() <= 3.0 * se })
}

/// m₄/m₂² of centered samples.
pub fn kurtosis_ratio(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let m = samples.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for x in samples {
        let d = (x - m) * (x - m);
        m2 += d;
        m4 += d * d;
    }
    (m4 / n) / (m2 / n).powi(2)
}

/// κ₄/κ₂².
pub fn cumulant_ratio(samples: &[f64]) -> Result<f64> {
    let c = empirical_cumulants(samples)?;
    Ok(c.kappa[&4] / c.kappa[&2].powi(2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpMomentPoint {
    pub lambda: f64,
    pub empirical: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpMomentReport {
    /// Statistic: worst empirical/bound ratio; threshold 1.
    pub report: TestReport,
    pub points: Vec<ExpMomentPoint>,
    /// Largest λ of the sweep (0, 4] up to which the bound holds.
    pub largest_lambda: Option<f64>,
}

fn check_exp_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.125 && alpha < 0.25) {
        return Err(Error::Range(format!("alpha = {alpha} outside (1/8, 1/4)")));
    }
    Ok(())
}

fn empirical_mgf(samples: &[f64], lambda: f64) -> f64 {
    samples.iter().map(|x| (lambda * x).exp()).sum::<f64>() / samples.len() as f64
}

/// E[exp λÃ] against C₀ exp(½ C_irr,1 |t−s| λ²) on the given λ grid.
pub fn exp_moment_check(
    samples: &[f64],
    lambdas: &[f64],
    t_minus_s: f64,
    alpha: f64,
    eta: f64,
) -> Result<ExpMomentReport> {
    check_exp_alpha(alpha)?;
    if !(eta > 0.0) {
        return Err(Error::Precondition(format!("eta = {eta} must be positive")));
    }
    if samples.is_empty() {
        return Err(Error::Precondition("no samples".into()));
    }
    let v = c_irr(1, alpha)? * t_minus_s.abs();
    let bound = |l: f64| EXP_MOMENT_C0 * (0.5 * v * l * l).exp();
    let points: Vec<ExpMomentPoint> = lambdas
        .iter()
        .map(|&l| ExpMomentPoint { lambda: l, empirical: empirical_mgf(samples, l), bound: bound(l) })
        .collect();
    let worst = points.iter().map(|p| p.empirical / p.bound).fold(0.0, f64::max);
    let mut largest = None;
    let steps = (LAMBDA_SWEEP_MAX / LAMBDA_SWEEP_STEP).round() as usize;
    for k in 1..=steps {
        let l = k as f64 * LAMBDA_SWEEP_STEP;
        if empirical_mgf(samples, l) <= bound(l) {
            largest = Some(l);
        } else {
            break;
        }
    }
    Ok(ExpMomentReport { report: TestReport::new(worst, 1.0, samples.len()), points, largest_lambda: largest })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailPoint {
    pub multiple: f64,
    pub upper: f64,
    pub lower: f64,
    pub bound: f64,
}

/// P(±Ã ≥ A·√v) against min over the λ sweep of C₀ exp(½vλ² − λA√v), with
/// v = C_irr,1 |t−s|. Statistic: worst empirical/bound ratio.
pub fn markov_tail_check(
    samples: &[f64],
    multiples: &[f64],
    t_minus_s: f64,
    alpha: f64,
) -> Result<(TestReport, Vec<TailPoint>)> {
    check_exp_alpha(alpha)?;
    if samples.is_empty() {
        return Err(Error::Precondition("no samples".into()));
    }
    let v = c_irr(1, alpha)? * t_minus_s.abs();
    let n = samples.len() as f64;
    let steps = (LAMBDA_SWEEP_MAX / LAMBDA_SWEEP_STEP).round() as usize;
    let mut points = Vec::new();
    let mut worst: f64 = 0.0;
    for &a in multiples {
        let x = a * v.sqrt();
        let bound = (1..=steps)
            .map(|k| {
                let l = k as f64 * LAMBDA_SWEEP_STEP;
                EXP_MOMENT_C0 * (0.5 * v * l * l - l * x).exp()
            })
            .fold(f64::INFINITY, f64::min);
        let upper = samples.iter().filter(|s| **s >= x).count() as f64 / n;
        let lower = samples.iter().filter(|s| **s <= -x).count() as f64 / n;
        worst = worst.max(upper / bound).max(lower / bound);
        points.push(TailPoint { multiple: a, upper, lower, bound });
    }
    Ok((TestReport::new(worst, 1.0, samples.len()), points))
}

/// |φ̂(λ) − e^{−½vλ²}| ≤ C₀ λ² η^{1−4α} e^{−½vλ²} + 3·SE on the λ grid.
/// Statistic: max over λ of (|difference| − 3 SE)/allowance.
pub fn char_function_check(samples: &[f64], lambdas: &[f64], t_minus_s: f64, alpha: f64, eta: f64) -> Result<TestReport> {
    if samples.len() < 2 {
        return Err(Error::Precondition("need at least two samples".into()));
    }
    let v = c_irr(1, alpha)? * t_minus_s.abs();
    let n = samples.len() as f64;
    let mut worst = f64::NEG_INFINITY;
    for &l in lambdas {
        let (mut sc, mut ss, mut sc2, mut ss2) = (0.0, 0.0, 0.0, 0.0);
        for x in samples {
            let (s, c) = (l * x).sin_cos();
            sc += c;
            ss += s;
            sc2 += c * c;
            ss2 += s * s;
        }
        let (mc, ms) = (sc / n, ss / n);
        let var = (sc2 / n - mc * mc) + (ss2 / n - ms * ms);
        let se = (var.max(0.0) / n).sqrt();
        let target = (-0.5 * v * l * l).exp();
        let diff = ((mc - target).powi(2) + ms * ms).sqrt();
        let allowance = EXP_MOMENT_C0 * l * l * eta.powf(1.0 - 4.0 * alpha) * target;
        let stat = if allowance > 0.0 { (diff - 3.0 * se) / allowance } else if diff <= 3.0 * se { 0.0 } else { f64::INFINITY };
        worst = worst.max(stat);
    }
    Ok(TestReport::new(worst, 1.0, samples.len()))
}
