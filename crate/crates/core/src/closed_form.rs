//! Closed forms for the two-power integrals
//! I∓ = ∫₀ᵗ (∓i(u−a))^{β₁} (−i(u−b))^{β₂} du through ₂F₁, the non-analytic
//! coefficients C_n and C_irr, and the iterated integral F_n.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::special_functions::{
    cos_pi, gamma_real, hyp2f1, integer_distance, inverse_z_coefficients, principal_power, rgamma,
    sin_pi, ComplexValue, Hyp2F1Options, Hyp2F1Params,
};

/// Region thresholds for the expansions of Φ around s = 0 and s = t.
pub const PHI_INNER: f64 = 0.9;
pub const PHI_OUTER: f64 = 1.1;
const BAND_WIDTH: f64 = 0.1;
const DUAL_TOL: f64 = 1e-8;
const EXPONENT_SUM_TOL: f64 = 1e-8;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerPair {
    pub beta1: f64,
    pub beta2: f64,
}

impl PowerPair {
    pub fn new(beta1: f64, beta2: f64) -> Result<Self> {
        if !(beta1.is_finite() && beta2.is_finite()) {
            return Err(Error::Precondition(format!("non-finite exponents ({beta1}, {beta2})")));
        }
        if beta2 <= -1.0 {
            return Err(Error::Precondition(format!("beta2 = {beta2} must exceed -1")));
        }
        Ok(Self { beta1, beta2 })
    }

    /// β₁ + β₂ + 1.
    pub fn exponent_sum(&self) -> f64 {
        self.beta1 + self.beta2 + 1.0
    }

    fn checked_exponent_sum(&self) -> Result<f64> {
        let s = self.exponent_sum();
        if s.abs() < EXPONENT_SUM_TOL {
            return Err(Error::Precondition(format!("beta1 + beta2 + 1 = {s} is too close to 0")));
        }
        Ok(s)
    }

    /// Whether the pair lies in the divergent regime β₁ + β₂ + 1 < 0.
    pub fn is_divergent(&self) -> bool {
        self.exponent_sum() < 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// Ω⁻ₜ: Im a < Im b ≤ 0.
    Minus,
    /// Ω⁺ₜ: Im b ≤ 0 < Im a.
    Plus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralArgs {
    pub t: f64,
    pub a: ComplexValue,
    pub b: ComplexValue,
}

impl IntegralArgs {
    pub fn new(t: f64, a: ComplexValue, b: ComplexValue) -> Result<Self> {
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::Domain(format!("interval length t = {t} must be positive")));
        }
        let inside = |z: ComplexValue| z.re > 0.0 && z.re < t && z.im.is_finite();
        if !inside(a) || !inside(b) {
            return Err(Error::Domain(format!("need 0 < Re a, Re b < t; got a = {a}, b = {b}, t = {t}")));
        }
        if b.im > 0.0 {
            return Err(Error::Domain(format!("need Im b <= 0, got b = {b}")));
        }
        Ok(Self { t, a, b })
    }

    pub fn check(&self, orientation: Orientation) -> Result<()> {
        let ok = match orientation {
            Orientation::Minus => self.a.im < self.b.im,
            Orientation::Plus => self.a.im > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("(a, b) = ({}, {}) outside the {orientation:?} domain", self.a, self.b)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiForm {
    /// Hypergeometric form in (a−b)/(s−b).
    Direct,
    /// Expansion in a/b at s = 0 or (t−a)/(t−b) at s = t.
    Inner,
    /// Expansion in b/a at s = 0 or (t−b)/(t−a) at s = t.
    Outer,
}

/// Φ(β₁, β₂; s)(a, b) = (−i(s−b))^{β₁+β₂+1} ₂F₁(−β₁, −β₁−β₂−1; −β₁−β₂; (a−b)/(s−b)).
pub fn phi_block(pp: PowerPair, s: f64, args: IntegralArgs) -> Result<ComplexValue> {
    let (ratio, at_start) = phi_ratio(s, args)?;
    let r = ratio.norm();
    let form = if r < PHI_INNER {
        PhiForm::Inner
    } else if r > PHI_OUTER {
        PhiForm::Outer
    } else {
        PhiForm::Direct
    };
    let value = match phi_block_form(pp, s, args, form) {
        // Gamma poles of the regional forms; the direct form is the analytic limit.
        Err(Error::Pole(_) | Error::DegenerateParameter(_)) if form != PhiForm::Direct => {
            return phi_block_form(pp, s, args, PhiForm::Direct);
        }
        other => other?,
    };
    if cfg!(debug_assertions) && form != PhiForm::Direct {
        let in_band = (r >= PHI_INNER - BAND_WIDTH && r < PHI_INNER) || (r > PHI_OUTER && r <= PHI_OUTER + BAND_WIDTH);
        if in_band {
            let direct = phi_block_form(pp, s, args, PhiForm::Direct)?;
            debug_assert!(
                (value - direct).norm() <= DUAL_TOL * direct.norm().max(f64::MIN_POSITIVE),
                "Φ forms disagree at s = {s} (start = {at_start}): {value} vs {direct}"
            );
        }
    }
    Ok(value)
}

fn phi_ratio(s: f64, args: IntegralArgs) -> Result<(ComplexValue, bool)> {
    let IntegralArgs { t, a, b } = args;
    if s == 0.0 {
        Ok((a / b, true))
    } else if s == t {
        Ok(((t - a) / (t - b), false))
    } else {
        Err(Error::Precondition(format!("Φ is evaluated at s = 0 or s = t, got s = {s}")))
    }
}

/// Φ through a chosen expression.
pub fn phi_block_form(pp: PowerPair, s: f64, args: IntegralArgs, form: PhiForm) -> Result<ComplexValue> {
    let (b1, b2) = (pp.beta1, pp.beta2);
    let s1 = pp.exponent_sum();
    let IntegralArgs { t, a, b } = args;
    let (ratio, at_start) = phi_ratio(s, args)?;
    let base = -I * (s - b);
    let prefactor = cut_power(base, s1)?;
    match form {
        PhiForm::Direct => {
            let w = (a - b) / (s - b);
            if w.im == 0.0 && w.re >= 1.0 {
                return Err(Error::Domain(format!("argument {w} on the cut of Φ")));
            }
            if b1 == 0.0 {
                return Ok(prefactor);
            }
            Ok(prefactor * hyp2f1(Hyp2F1Params::new(-b1, -b1 - b2 - 1.0, -b1 - b2)?, w)?)
        }
        PhiForm::Inner => {
            let jump = gamma_real(-b1 - b2)? * gamma_real(1.0 + b1)? * rgamma(-b2);
            let lead = if at_start { Complex64::new(1.0, 0.0) - ratio } else { (a - b) / (t - b) };
            let tail = s1 / (b1 + 1.0)
                * cut_power(ratio, 1.0 + b1)?
                * hyp2f1(Hyp2F1Params::new(-b2, 1.0, b1 + 2.0)?, ratio)?;
            Ok(prefactor * (jump * cut_power(lead, s1)? + tail))
        }
        PhiForm::Outer => {
            let inv = ratio.inv();
            let jump = gamma_real(-b1 - b2)? * gamma_real(1.0 + b2)? * rgamma(-b1);
            let lead = if at_start { Complex64::new(1.0, 0.0) - inv } else { (b - a) / (t - a) };
            let tail = s1 / (b2 + 1.0)
                * cut_power(inv, -b1)?
                * hyp2f1(Hyp2F1Params::new(-b1, 1.0, b2 + 2.0)?, inv)?;
            Ok(prefactor * (jump * cut_power(inv, -s1)? * cut_power(lead, s1)? + tail))
        }
    }
}

fn cut_power(z: ComplexValue, beta: f64) -> Result<ComplexValue> {
    principal_power(z, beta).map_err(|e| match e {
        Error::BranchCut(msg) => Error::Domain(msg),
        other => other,
    })
}

/// I− = ∫₀ᵗ (−i(u−a))^{β₁}(−i(u−b))^{β₂} du = i/(β₁+β₂+1)·[Φ(t) − Φ(0)].
pub fn i_minus(pp: PowerPair, args: IntegralArgs) -> Result<ComplexValue> {
    args.check(Orientation::Minus)?;
    let s1 = pp.checked_exponent_sum()?;
    Ok(I / s1 * (phi_block(pp, args.t, args)? - phi_block(pp, 0.0, args)?))
}

/// Coefficient of the non-analytic term (i(b−a))^{β₁+β₂+1} subtracted in I+.
pub fn i_plus_extra_coefficient(pp: PowerPair) -> Result<f64> {
    let s1 = pp.checked_exponent_sum()?;
    let sine = sin_pi(pp.beta2);
    if sine == 0.0 {
        return Ok(0.0);
    }
    if integer_distance(pp.beta1) == 0.0 && pp.beta1 >= 0.0 {
        return Err(Error::Pole(-pp.beta1));
    }
    Ok(gamma_real(pp.beta2 + 1.0)? * gamma_real(-s1)? * rgamma(-pp.beta1) * 2.0 * sine)
}

/// The same coefficient written as the jump of the second 1/z connection
/// term of Φ's ₂F₁ across its cut: T₂·(−2 sin πβ₂)/(β₁+β₂+1).
pub fn connection_jump_coefficient(pp: PowerPair) -> Result<f64> {
    let s1 = pp.checked_exponent_sum()?;
    let p = Hyp2F1Params::new(-pp.beta1, -pp.beta1 - pp.beta2 - 1.0, -pp.beta1 - pp.beta2)?;
    let (_, second) = inverse_z_coefficients(p, &Hyp2F1Options::default())?;
    Ok(second * (-2.0 * sin_pi(pp.beta2)) / s1)
}

/// I+ = ∫₀ᵗ (i(u−a))^{β₁}(−i(u−b))^{β₂} du.
pub fn i_plus(pp: PowerPair, args: IntegralArgs) -> Result<ComplexValue> {
    args.check(Orientation::Plus)?;
    let s1 = pp.checked_exponent_sum()?;
    let rot = Complex64::from_polar(1.0, std::f64::consts::PI * pp.beta1);
    let bracket = I / s1 * (rot * phi_block(pp, args.t, args)? - rot.conj() * phi_block(pp, 0.0, args)?);
    let coef = i_plus_extra_coefficient(pp)?;
    if coef == 0.0 {
        return Ok(bracket);
    }
    Ok(bracket - coef * cut_power(I * (args.b - args.a), s1)?)
}

/// (π/2 / (cos πα Γ(−2α)))², the per-order factor shared by C_n and C_irr.
fn order_factor(alpha: f64) -> Result<f64> {
    let base = std::f64::consts::FRAC_PI_2 / (cos_pi(alpha) * gamma_real(-2.0 * alpha)?);
    Ok(base * base)
}

/// C_n = (1/2π)(π/2/(cos πα Γ(−2α)))^{2n} sin πα Γ(2α+1) Γ(−2α−4αn).
pub fn c_n_coeff(n: usize, alpha: f64) -> Result<f64> {
    let g = gamma_real(-2.0 * alpha - 4.0 * alpha * n as f64)?;
    Ok(order_factor(alpha)?.powi(n as i32) * sin_pi(alpha) * gamma_real(2.0 * alpha + 1.0)? * g
        / (2.0 * std::f64::consts::PI))
}

/// The singular coefficient in the printed normalization:
/// (π/2/(cos πα Γ(−2α)))^{2(N−1)} sin πα Γ(2α+1)/Γ(2−2α) Γ(1−4αN) (2N)^{4αN−1}.
pub fn c_irr_printed(n: usize, alpha: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Precondition("C_irr is defined for N >= 1".into()));
    }
    let nf = n as f64;
    Ok(order_factor(alpha)?.powi(n as i32 - 1) * sin_pi(alpha) * gamma_real(2.0 * alpha + 1.0)?
        * rgamma(2.0 - 2.0 * alpha)
        * gamma_real(1.0 - 4.0 * alpha * nf)?
        * (2.0 * nf).powf(4.0 * alpha * nf - 1.0))
}

/// C_irr,N in the normalization of the real kernels: the printed form times
/// α(1−2α)/cos πα.
pub fn c_irr(n: usize, alpha: f64) -> Result<f64> {
    Ok(c_irr_printed(n, alpha)? * alpha * (1.0 - 2.0 * alpha) / cos_pi(alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FnForm {
    /// Expansion in 1 − t/z.
    Exterior,
    /// Expansion in z/t, for |z| < t.
    Interior,
}

/// Radius in units of t below which the interior form is used.
pub const FN_INTERIOR_RADIUS: f64 = 0.9;

/// F_n(α, β; t; z) = ∫₀ᵗ (t−u)ⁿ/n! u^β (−i(z−u))^{2α−2} du for Im z > 0.
pub fn f_n_appendix(alpha: f64, beta: f64, n: usize, t: f64, z: ComplexValue) -> Result<ComplexValue> {
    let form = if z.norm() < FN_INTERIOR_RADIUS * t { FnForm::Interior } else { FnForm::Exterior };
    f_n_form(alpha, beta, n, t, z, form)
}

pub fn f_n_form(alpha: f64, beta: f64, n: usize, t: f64, z: ComplexValue, form: FnForm) -> Result<ComplexValue> {
    if beta <= -1.0 {
        return Err(Error::Precondition(format!("beta = {beta} must exceed -1")));
    }
    if integer_distance(2.0 * alpha) == 0.0 {
        return Err(Error::Precondition(format!("2 alpha = {} is an integer", 2.0 * alpha)));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("t = {t} must be positive")));
    }
    if !(z.im > 0.0) {
        return Err(Error::Domain(format!("z = {z} must lie in the upper half-plane")));
    }
    let nf = n as f64;
    let n_fact: f64 = (1..=n).map(|k| k as f64).product();
    let scale = t.powf(beta + nf + 1.0);
    match form {
        FnForm::Exterior => {
            let w = Complex64::new(1.0, 0.0) - t / z;
            let first = gamma_real(1.0 + beta)? * gamma_real(nf - 1.0 + 2.0 * alpha)?
                * rgamma(nf + 2.0 * alpha + beta)
                / n_fact
                * I
                * Complex64::from_polar(1.0, -std::f64::consts::PI * alpha)
                * cpow_checked(z, 2.0 * alpha - 1.0)?
                * hyp2f1(Hyp2F1Params::new(2.0 - 2.0 * alpha, 1.0 + beta, 2.0 - nf - 2.0 * alpha)?, w)?;
            let second = gamma_real(1.0 - nf - 2.0 * alpha)? * rgamma(2.0 - 2.0 * alpha)
                * cpow_checked(-I * (z - t), 2.0 * alpha - 1.0)?
                * w.powi(n as i32)
                * hyp2f1(Hyp2F1Params::new(nf + 2.0 * alpha + beta, nf + 1.0, nf + 2.0 * alpha)?, w)?;
            Ok(I / z * scale * (first + second))
        }
        FnForm::Interior => {
            let x = z / t;
            let first = Complex64::from_polar(1.0, std::f64::consts::PI * alpha)
                * gamma_real(2.0 * alpha + beta - 1.0)?
                * rgamma(2.0 * alpha + beta + nf)
                * t.powf(2.0 * alpha - 2.0)
                * hyp2f1(
                    Hyp2F1Params::new(2.0 - 2.0 * alpha, 1.0 - 2.0 * alpha - beta - nf, 2.0 - 2.0 * alpha - beta)?,
                    x,
                )?;
            let second = gamma_real(1.0 + beta)? * gamma_real(1.0 - 2.0 * alpha - beta)?
                * rgamma(2.0 - 2.0 * alpha)
                / n_fact
                * Complex64::from_polar(1.0, -std::f64::consts::PI * (alpha + beta + 1.0))
                * t.powf(-1.0 - beta)
                * cpow_checked(z, 2.0 * alpha + beta - 1.0)?
                * hyp2f1(Hyp2F1Params::new(1.0 + beta, -nf, 2.0 * alpha + beta)?, x)?;
            Ok(-scale * (first + second))
        }
    }
}

fn cpow_checked(z: ComplexValue, beta: f64) -> Result<ComplexValue> {
    cut_power(z, beta)
}
