#![allow(dead_code)]

use levy_area::quadrature::integrate_1d_relative;
use levy_area::ComplexValue;
use num_complex::Complex64;

pub fn c(re: f64, im: f64) -> ComplexValue {
    Complex64::new(re, im)
}

pub fn rel_err(a: ComplexValue, b: ComplexValue) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

/// ∫ f over [0, t] split at the given interior points, with the endpoint
/// exponent of each break applied on both sides of it.
pub fn split_integral<F: Fn(f64) -> ComplexValue>(f: F, t: f64, breaks: &[(f64, f64)], rel_tol: f64) -> ComplexValue {
    let mut pts: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    let mut inner: Vec<(f64, f64)> = breaks.iter().copied().filter(|(x, _)| *x > 0.0 && *x < t).collect();
    inner.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.extend(inner);
    pts.push((t, 0.0));
    let mut total = c(0.0, 0.0);
    for w in pts.windows(2) {
        let ((lo, ea), (hi, eb)) = (w[0], w[1]);
        if hi - lo <= 0.0 {
            continue;
        }
        let (v, _) = integrate_1d_relative(&f, lo, hi, rel_tol, Some((ea, eb))).unwrap();
        total += v;
    }
    total
}
