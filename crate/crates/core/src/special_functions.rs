//! Principal-branch complex powers, the real gamma function and the Gauss
//! hypergeometric function ₂F₁(a, b; c; z) for real parameters on the cut
//! plane ℂ ∖ [1, ∞).
//!
//! Region selection for ₂F₁ with radius r₀ = 0.7:
//!
//! | region                    | evaluation                                  |
//! |---------------------------|---------------------------------------------|
//! | \|z\| ≤ r₀                | Maclaurin series                            |
//! | \|1 − z\| ≤ r₀            | connection formula in 1 − z                 |
//! | \|1/z\| ≤ r₀              | connection formula in 1/z                   |
//! | \|1/(1 − z)\| ≤ r₀        | connection formula in 1/(1 − z)             |
//! | remaining lens near e^{±iπ/3} | Taylor continuation of the ODE from 0.6·z/\|z\| |

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quadrature::integrate_1d_relative;

pub type ComplexValue = Complex64;

const MAX_SERIES_TERMS: usize = 10_000;
const SERIES_REL_TOL: f64 = 1e-16;
const DEFAULT_REGION_RADIUS: f64 = 0.7;
const DEFAULT_DEGENERACY_TOL: f64 = 1e-6;

/// z^β = exp(β (ln|z| + i Arg z)) with Arg z ∈ (−π, π).
pub fn principal_power(z: ComplexValue, beta: f64) -> Result<ComplexValue> {
    if !(z.re.is_finite() && z.im.is_finite() && beta.is_finite()) {
        return Err(Error::Domain(format!("non-finite power arguments z={z}, beta={beta}")));
    }
    if z.im == 0.0 {
        if z.re < 0.0 {
            return Err(Error::BranchCut(format!("base {} on the negative real axis", z.re)));
        }
        if z.re == 0.0 {
            return if beta > 0.0 {
                Ok(Complex64::new(0.0, 0.0))
            } else if beta == 0.0 {
                Ok(Complex64::new(1.0, 0.0))
            } else {
                Err(Error::BranchCut(format!("zero base with exponent {beta}")))
            };
        }
        return Ok(Complex64::new(z.re.powf(beta), 0.0));
    }
    Ok(cpow(z, beta))
}

/// Unchecked principal power for bases known to be off the cut.
#[inline]
pub(crate) fn cpow(z: ComplexValue, beta: f64) -> ComplexValue {
    let modulus = (beta * z.norm().ln()).exp();
    let (s, c) = (beta * z.im.atan2(z.re)).sin_cos();
    Complex64::new(modulus * c, modulus * s)
}

/// sin(πx) with exact argument reduction.
pub fn sin_pi(x: f64) -> f64 {
    let r = x - 2.0 * (x / 2.0).round();
    if r > 0.5 {
        (PI * (1.0 - r)).sin()
    } else if r < -0.5 {
        -(PI * (1.0 + r)).sin()
    } else {
        (PI * r).sin()
    }
}

/// cos(πx) with exact argument reduction.
pub fn cos_pi(x: f64) -> f64 {
    sin_pi(x + 0.5)
}

fn is_nonpositive_integer(x: f64) -> bool {
    x <= 0.0 && x == x.round()
}

/// Distance from x to the nearest integer.
pub fn integer_distance(x: f64) -> f64 {
    (x - x.round()).abs()
}

// Lanczos approximation, g = 7, n = 9 (Numerical Recipes / Godfrey coefficients).
const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

fn lanczos_gamma(x: f64) -> f64 {
    let x = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * ((x + 0.5) * t.ln() - t).exp() * acc
}

/// Euler gamma for real arguments; reflection below 1/2.
pub fn gamma_real(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("gamma of non-finite {x}")));
    }
    if is_nonpositive_integer(x) {
        return Err(Error::Pole(x));
    }
    let value = if x < 0.5 {
        PI / (sin_pi(x) * lanczos_gamma(1.0 - x))
    } else {
        lanczos_gamma(x)
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Range(format!("gamma overflow at {x}")))
    }
}

/// 1/Γ(x), entire; exactly zero at the poles of Γ.
pub fn rgamma(x: f64) -> f64 {
    if is_nonpositive_integer(x) {
        0.0
    } else if x < 0.5 {
        sin_pi(x) * lanczos_gamma(1.0 - x) / PI
    } else {
        1.0 / lanczos_gamma(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyp2F1Params {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Hyp2F1Params {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(Error::Domain(format!("non-finite parameters ({a}, {b}, {c})")));
        }
        if is_nonpositive_integer(c) {
            return Err(Error::DegenerateParameter(format!("c = {c} is a non-positive integer")));
        }
        Ok(Self { a, b, c })
    }

    pub fn swapped(self) -> Self {
        Self { a: self.b, b: self.a, c: self.c }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyp2F1Options {
    /// Minimum distance of b − a or c − a − b from an integer when the
    /// selected formula divides by Γ of that difference.
    pub degeneracy_tol: f64,
    pub region_radius: f64,
}

impl Default for Hyp2F1Options {
    fn default() -> Self {
        Self { degeneracy_tol: DEFAULT_DEGENERACY_TOL, region_radius: DEFAULT_REGION_RADIUS }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hyp2F1Region {
    Series,
    OneMinusZ,
    InverseZ,
    InverseOneMinusZ,
    Continuation,
}

pub fn hyp2f1_region(z: ComplexValue, radius: f64) -> Hyp2F1Region {
    let one_minus = Complex64::new(1.0, 0.0) - z;
    if z.norm() <= radius {
        Hyp2F1Region::Series
    } else if one_minus.norm() <= radius {
        Hyp2F1Region::OneMinusZ
    } else if z.norm() * radius >= 1.0 {
        Hyp2F1Region::InverseZ
    } else if one_minus.norm() * radius >= 1.0 {
        Hyp2F1Region::InverseOneMinusZ
    } else {
        Hyp2F1Region::Continuation
    }
}

fn check_argument(z: ComplexValue) -> Result<()> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::Domain(format!("non-finite argument {z}")));
    }
    if z.im == 0.0 && z.re >= 1.0 {
        return Err(Error::BranchCut(format!("argument {} on [1, inf)", z.re)));
    }
    Ok(())
}

pub fn hyp2f1(p: Hyp2F1Params, z: ComplexValue) -> Result<ComplexValue> {
    hyp2f1_with(p, z, &Hyp2F1Options::default())
}

pub fn hyp2f1_with(p: Hyp2F1Params, z: ComplexValue, opts: &Hyp2F1Options) -> Result<ComplexValue> {
    let p = Hyp2F1Params::new(p.a, p.b, p.c)?;
    check_argument(z)?;
    if p.a == 0.0 || p.b == 0.0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    hyp2f1_via(p, z, hyp2f1_region(z, opts.region_radius), opts)
}

/// Evaluates ₂F₁ through the given formula; inner ₂F₁ values are dispatched
/// by region.
pub fn hyp2f1_via(
    p: Hyp2F1Params,
    z: ComplexValue,
    region: Hyp2F1Region,
    opts: &Hyp2F1Options,
) -> Result<ComplexValue> {
    let p = Hyp2F1Params::new(p.a, p.b, p.c)?;
    check_argument(z)?;
    match region {
        Hyp2F1Region::Series => hyp2f1_series(p, z),
        Hyp2F1Region::OneMinusZ => one_minus_z_formula(p, z, opts),
        Hyp2F1Region::InverseZ => inverse_z_formula(p, z, opts),
        Hyp2F1Region::InverseOneMinusZ => inverse_one_minus_z_formula(p, z, opts),
        Hyp2F1Region::Continuation => ode_continuation(p, z),
    }
}

/// Maclaurin series; stops when the geometric tail bound drops below
/// 1e-14 of the partial sum.
pub fn hyp2f1_series(p: Hyp2F1Params, z: ComplexValue) -> Result<ComplexValue> {
    let Hyp2F1Params { a, b, c } = p;
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    let r = z.norm();
    let (abs_a, abs_b, abs_c) = (a.abs(), b.abs(), c.abs());
    let settle = 2.0 * (abs_a + abs_b + abs_c) + 2.0;
    for k in 0..MAX_SERIES_TERMS {
        let kf = k as f64;
        term *= z * ((a + kf) * (b + kf) / ((c + kf) * (kf + 1.0)));
        sum += term;
        if term.re == 0.0 && term.im == 0.0 {
            return Ok(sum);
        }
        let next = kf + 1.0;
        if next > settle {
            let g = (next + abs_a) * (next + abs_b) / ((next - abs_c) * (next + 1.0));
            let q = r * g.max(1.0);
            if q < 1.0 && term.norm() * q / (1.0 - q) <= SERIES_REL_TOL * sum.norm() {
                return finite(sum);
            }
        }
    }
    Err(Error::Convergence(format!(
        "2F1 series ({a}, {b}; {c}; {z}) not converged within {MAX_SERIES_TERMS} terms"
    )))
}

fn finite(v: ComplexValue) -> Result<ComplexValue> {
    if v.re.is_finite() && v.im.is_finite() {
        Ok(v)
    } else {
        Err(Error::Convergence(format!("non-finite value {v}")))
    }
}

fn guard(x: f64, what: &str, opts: &Hyp2F1Options) -> Result<()> {
    if integer_distance(x) < opts.degeneracy_tol {
        Err(Error::DegenerateParameter(format!("{what} = {x} is within {} of an integer", opts.degeneracy_tol)))
    } else {
        Ok(())
    }
}

/// The two gamma prefactors of the 1/z connection formula,
/// Γ(c)Γ(b−a)/(Γ(b)Γ(c−a)) and Γ(c)Γ(a−b)/(Γ(a)Γ(c−b)).
pub fn inverse_z_coefficients(p: Hyp2F1Params, opts: &Hyp2F1Options) -> Result<(f64, f64)> {
    let Hyp2F1Params { a, b, c } = p;
    guard(b - a, "b - a", opts)?;
    let gc = gamma_real(c)?;
    Ok((
        gc * gamma_real(b - a)? * rgamma(b) * rgamma(c - a),
        gc * gamma_real(a - b)? * rgamma(a) * rgamma(c - b),
    ))
}

fn inverse_z_formula(p: Hyp2F1Params, z: ComplexValue, opts: &Hyp2F1Options) -> Result<ComplexValue> {
    let Hyp2F1Params { a, b, c } = p;
    let (ca, cb) = inverse_z_coefficients(p, opts)?;
    let w = z.inv();
    let minus_z = -z;
    let mut total = Complex64::new(0.0, 0.0);
    if ca != 0.0 {
        let f = hyp2f1_with(Hyp2F1Params::new(a, 1.0 - c + a, 1.0 - b + a)?, w, opts)?;
        total += ca * principal_power(minus_z, -a)? * f;
    }
    if cb != 0.0 {
        let f = hyp2f1_with(Hyp2F1Params::new(b, 1.0 - c + b, 1.0 - a + b)?, w, opts)?;
        total += cb * principal_power(minus_z, -b)? * f;
    }
    finite(total)
}

fn inverse_one_minus_z_formula(
    p: Hyp2F1Params,
    z: ComplexValue,
    opts: &Hyp2F1Options,
) -> Result<ComplexValue> {
    let Hyp2F1Params { a, b, c } = p;
    let (ca, cb) = inverse_z_coefficients(p, opts)?;
    let one_minus = Complex64::new(1.0, 0.0) - z;
    let w = one_minus.inv();
    let mut total = Complex64::new(0.0, 0.0);
    if ca != 0.0 {
        let f = hyp2f1_with(Hyp2F1Params::new(a, c - b, a - b + 1.0)?, w, opts)?;
        total += ca * principal_power(one_minus, -a)? * f;
    }
    if cb != 0.0 {
        let f = hyp2f1_with(Hyp2F1Params::new(b, c - a, b - a + 1.0)?, w, opts)?;
        total += cb * principal_power(one_minus, -b)? * f;
    }
    finite(total)
}

fn one_minus_z_formula(p: Hyp2F1Params, z: ComplexValue, opts: &Hyp2F1Options) -> Result<ComplexValue> {
    let Hyp2F1Params { a, b, c } = p;
    let s = c - a - b;
    guard(s, "c - a - b", opts)?;
    let gc = gamma_real(c)?;
    let c1 = gc * gamma_real(s)? * rgamma(c - a) * rgamma(c - b);
    let c2 = gc * gamma_real(-s)? * rgamma(a) * rgamma(b);
    let one_minus = Complex64::new(1.0, 0.0) - z;
    let mut total = Complex64::new(0.0, 0.0);
    if c1 != 0.0 {
        total += c1 * hyp2f1_with(Hyp2F1Params::new(a, b, 1.0 - s)?, one_minus, opts)?;
    }
    if c2 != 0.0 {
        let f = hyp2f1_with(Hyp2F1Params::new(c - a, c - b, 1.0 + s)?, one_minus, opts)?;
        total += c2 * principal_power(one_minus, s)? * f;
    }
    finite(total)
}

/// Integrates z(1−z)w'' + [c − (a+b+1)z]w' − ab·w = 0 along the ray from
/// 0.6·z/|z| to z by local Taylor expansions.
fn ode_continuation(p: Hyp2F1Params, z: ComplexValue) -> Result<ComplexValue> {
    let Hyp2F1Params { a, b, c } = p;
    let z0 = z * (0.6 / z.norm());
    let mut w = hyp2f1_series(p, z0)?;
    let mut dw = hyp2f1_series(Hyp2F1Params::new(a + 1.0, b + 1.0, c + 1.0)?, z0)? * (a * b / c);
    let mut zc = z0;
    for _ in 0..1000 {
        let remaining = z - zc;
        let dist = remaining.norm();
        if dist == 0.0 {
            return finite(w);
        }
        let radius = zc.norm().min((Complex64::new(1.0, 0.0) - zc).norm());
        let hmax = 0.5 * radius;
        let last = dist <= hmax;
        let h = if last { remaining } else { remaining * (hmax / dist) };
        let (w1, dw1) = taylor_step(p, zc, w, dw, h)?;
        w = w1;
        dw = dw1;
        zc = if last { z } else { zc + h };
        if last {
            return finite(w);
        }
    }
    Err(Error::Convergence(format!("2F1 continuation to {z} did not reach the target")))
}

fn taylor_step(
    p: Hyp2F1Params,
    z0: ComplexValue,
    w0: ComplexValue,
    w1: ComplexValue,
    h: ComplexValue,
) -> Result<(ComplexValue, ComplexValue)> {
    let Hyp2F1Params { a, b, c } = p;
    let one = Complex64::new(1.0, 0.0);
    let p0 = z0 * (one - z0);
    let p1 = one - 2.0 * z0;
    let q0 = c - (a + b + 1.0) * z0;
    let q1 = -(a + b + 1.0);
    let ab = a * b;

    let mut prev = w0;
    let mut cur = w1;
    let mut hk = h; // h^(k+1) for the coefficient `cur`
    let mut value = w0 + w1 * h;
    let mut deriv = w1;
    let mut small = 0;
    for k in 0..400usize {
        let kf = k as f64;
        let next = -((p1 * (kf * (kf + 1.0)) + q0 * (kf + 1.0)) * cur
            + (-kf * (kf - 1.0) + q1 * kf - ab) * prev)
            / (p0 * ((kf + 1.0) * (kf + 2.0)));
        let h_next = hk * h;
        let term = next * h_next;
        value += term;
        deriv += next * hk * (kf + 2.0);
        if term.norm() <= 1e-17 * value.norm() {
            small += 1;
            if small >= 3 {
                return Ok((value, deriv));
            }
        } else {
            small = 0;
        }
        prev = cur;
        cur = next;
        hk = h_next;
    }
    Err(Error::Convergence("2F1 Taylor step did not converge".into()))
}

/// Γ(c)/(Γ(b)Γ(c−b)) ∫₀¹ t^{b−1}(1−t)^{c−b−1}(1−tz)^{−a} dt, by adaptive
/// quadrature with declared endpoint exponents. Test oracle only.
pub fn hyp2f1_integral_oracle(p: Hyp2F1Params, z: ComplexValue) -> Result<ComplexValue> {
    let Hyp2F1Params { a, b, c } = p;
    if !(c > b && b > 0.0) {
        return Err(Error::Precondition(format!("integral representation needs c > b > 0, got b={b}, c={c}")));
    }
    check_argument(z)?;
    let norm = gamma_real(c)? / (gamma_real(b)? * gamma_real(c - b)?);
    let one = Complex64::new(1.0, 0.0);
    // Split at 1/2 so that each singular endpoint sits at the origin of its
    // own variable and the distance to it is exact.
    let left = |t: f64| -> ComplexValue {
        let s = 1.0 - t;
        cpow(one - z * t, -a) * (t.powf(b - 1.0) * s.powf(c - b - 1.0))
    };
    let right = |s: f64| -> ComplexValue {
        let t = 1.0 - s;
        cpow(one - z * t, -a) * (t.powf(b - 1.0) * s.powf(c - b - 1.0))
    };
    let (l, _) = integrate_1d_relative(left, 0.0, 0.5, 1e-13, Some((b - 1.0, 0.0)))?;
    let (r, _) = integrate_1d_relative(right, 0.0, 0.5, 1e-13, Some((c - b - 1.0, 0.0)))?;
    finite((l + r) * norm)
}
