//! Covariance kernels of the analytic approximation B(η).
//!
//! With c = cos πα and principal powers,
//!
//! ```text
//! K′±(η;x,y) = α(1−2α)/(2c) · (±i(x−y) + η)^{2α−2}
//! K±(η;x,y)  = 1/(4c) · ((±ix + η)^{2α} + (∓iy + η)^{2α} − (±i(x−y) + η)^{2α})
//! K*±(η;x,y) = −1/(4c) · (±i(x−y) + η)^{2α}
//! ```
//!
//! and the real kernels are 2·Re of either sign. The adopted normalization
//! is B_t(η) = 2 Re Γ_{t+iη/2}, under which Cov(B′_x, B′_y) = K′_real(η;x,y).
//!
//! The printed K differs from ∫₀ˣ∫₀ʸ K′ by the constant K(η;0,0) = η^{2α}/(4c);
//! [`k_increment_real`] is the covariance of B_x − B_0 and vanishes on the axes.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::special_functions::{cos_pi, cpow, ComplexValue};

/// The B(η) normalization convention, as printed in experiment metadata.
pub const B_ETA_CONVENTION: &str =
    "B_t(eta) = 2 Re Gamma_{t + i eta/2}; Cov(B'_x, B'_y) = kprime_real(eta; x, y)";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub alpha: f64,
    pub eta: f64,
}

impl ModelParams {
    pub fn new(alpha: f64, eta: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0 && alpha < 0.25) {
            return Err(Error::InvalidParams(format!("alpha = {alpha} must lie in (0, 1/4)")));
        }
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(Error::InvalidParams(format!("eta = {eta} must be finite and >= 0")));
        }
        Ok(Self { alpha, eta })
    }

    pub fn require_positive_eta(&self) -> Result<()> {
        if self.eta > 0.0 {
            Ok(())
        } else {
            Err(Error::Domain(format!("eta = {} must be > 0 for K'", self.eta)))
        }
    }

    pub fn cos_pi_alpha(&self) -> f64 {
        cos_pi(self.alpha)
    }

    /// α(1−2α)/(2 cos πα).
    pub fn kprime_coefficient(&self) -> f64 {
        self.alpha * (1.0 - 2.0 * self.alpha) / (2.0 * self.cos_pi_alpha())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelTag {
    Kprime,
    K,
    Kstar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelSign {
    Plus,
    Minus,
    RealCombined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelKind {
    pub tag: KernelTag,
    pub sign: KernelSign,
}

/// Evaluates any kernel kind; the real-combined kinds are returned with zero
/// imaginary part.
pub fn kernel_value(p: &ModelParams, kind: KernelKind, x: f64, y: f64) -> Result<ComplexValue> {
    let signed = |s: Sign| match kind.tag {
        KernelTag::Kprime => kprime_pm(p, s, x, y),
        KernelTag::K => k_pm(p, s, x, y),
        KernelTag::Kstar => kstar_pm(p, s, x, y),
    };
    match kind.sign {
        KernelSign::Plus => signed(Sign::Plus),
        KernelSign::Minus => signed(Sign::Minus),
        KernelSign::RealCombined => {
            let v = match kind.tag {
                KernelTag::Kprime => kprime_real(p, x, y)?,
                KernelTag::K => k_real(p, x, y)?,
                KernelTag::Kstar => kstar_real(p, x, y)?,
            };
            Ok(Complex64::new(v, 0.0))
        }
    }
}

fn check_point(x: f64, y: f64) -> Result<()> {
    if x.is_finite() && y.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("non-finite kernel arguments ({x}, {y})")))
    }
}

fn base(sign: Sign, d: f64, eta: f64) -> ComplexValue {
    Complex64::new(eta, sign.factor() * d)
}

pub fn kprime_pm(p: &ModelParams, sign: Sign, x: f64, y: f64) -> Result<ComplexValue> {
    p.require_positive_eta()?;
    check_point(x, y)?;
    Ok(cpow(base(sign, x - y, p.eta), 2.0 * p.alpha - 2.0) * p.kprime_coefficient())
}

pub fn k_pm(p: &ModelParams, sign: Sign, x: f64, y: f64) -> Result<ComplexValue> {
    check_point(x, y)?;
    let beta = 2.0 * p.alpha;
    let s = sign.factor();
    let total = pow0(Complex64::new(p.eta, s * x), beta) + pow0(Complex64::new(p.eta, -s * y), beta)
        - pow0(base(sign, x - y, p.eta), beta);
    Ok(total / (4.0 * p.cos_pi_alpha()))
}

pub fn kstar_pm(p: &ModelParams, sign: Sign, x: f64, y: f64) -> Result<ComplexValue> {
    check_point(x, y)?;
    Ok(-pow0(base(sign, x - y, p.eta), 2.0 * p.alpha) / (4.0 * p.cos_pi_alpha()))
}

// Positive exponent: the power is continuous at the origin.
fn pow0(z: ComplexValue, beta: f64) -> ComplexValue {
    if z.re == 0.0 && z.im == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        cpow(z, beta)
    }
}

pub fn kprime_real(p: &ModelParams, x: f64, y: f64) -> Result<f64> {
    p.require_positive_eta()?;
    check_point(x, y)?;
    Ok(fast::kprime_real(p.alpha, p.eta, x, y))
}

pub fn k_real(p: &ModelParams, x: f64, y: f64) -> Result<f64> {
    check_point(x, y)?;
    Ok(fast::k_real(p.alpha, p.eta, x, y))
}

pub fn kstar_real(p: &ModelParams, x: f64, y: f64) -> Result<f64> {
    check_point(x, y)?;
    Ok(fast::kstar_real(p.alpha, p.eta, x, y))
}

/// Cov(B_x − B_0, B_y − B_0) = k_real(x,y) − k_real(x,0) − k_real(0,y) + k_real(0,0).
pub fn k_increment_real(p: &ModelParams, x: f64, y: f64) -> Result<f64> {
    check_point(x, y)?;
    Ok(fast::k_increment_real(p.alpha, p.eta, x, y))
}

/// ½(|s|^{2α} + |t|^{2α} − |t−s|^{2α}).
pub fn fbm_covariance(alpha: f64, s: f64, t: f64) -> f64 {
    let h = 2.0 * alpha;
    0.5 * (s.abs().powf(h) + t.abs().powf(h) - (t - s).abs().powf(h))
}

/// Real-valued kernels on validated inputs, without error plumbing; used
/// inside quadrature and simulation loops.
pub(crate) mod fast {
    use crate::special_functions::cos_pi;

    // Re (η + i d)^β
    #[inline]
    pub fn re_power(eta: f64, d: f64, beta: f64) -> f64 {
        let r = eta.hypot(d);
        if r == 0.0 {
            return 0.0;
        }
        r.powf(beta) * (beta * d.atan2(eta)).cos()
    }

    #[inline]
    pub fn kprime_real(alpha: f64, eta: f64, x: f64, y: f64) -> f64 {
        let coef = alpha * (1.0 - 2.0 * alpha) / cos_pi(alpha);
        coef * re_power(eta, x - y, 2.0 * alpha - 2.0)
    }

    #[inline]
    pub fn k_real(alpha: f64, eta: f64, x: f64, y: f64) -> f64 {
        let b = 2.0 * alpha;
        (re_power(eta, x, b) + re_power(eta, y, b) - re_power(eta, x - y, b)) / (2.0 * cos_pi(alpha))
    }

    #[inline]
    pub fn kstar_real(alpha: f64, eta: f64, x: f64, y: f64) -> f64 {
        -re_power(eta, x - y, 2.0 * alpha) / (2.0 * cos_pi(alpha))
    }

    #[inline]
    pub fn k_increment_real(alpha: f64, eta: f64, x: f64, y: f64) -> f64 {
        let b = 2.0 * alpha;
        (re_power(eta, x, b) + re_power(eta, y, b) - re_power(eta, x - y, b) - re_power(eta, 0.0, b))
            / (2.0 * cos_pi(alpha))
    }

    /// ∂/∂η of [`kprime_real`].
    #[inline]
    pub fn kprime_real_deta(alpha: f64, eta: f64, x: f64, y: f64) -> f64 {
        let b = 2.0 * alpha - 2.0;
        let coef = alpha * (1.0 - 2.0 * alpha) / cos_pi(alpha);
        coef * b * re_power(eta, x - y, b - 1.0)
    }

    /// ∂/∂η of [`k_real`].
    #[inline]
    pub fn k_real_deta(alpha: f64, eta: f64, x: f64, y: f64) -> f64 {
        let b = 2.0 * alpha;
        b * (re_power(eta, x, b - 1.0) + re_power(eta, y, b - 1.0) - re_power(eta, x - y, b - 1.0))
            / (2.0 * cos_pi(alpha))
    }

    /// ∂/∂η of [`k_increment_real`].
    #[inline]
    pub fn k_increment_real_deta(alpha: f64, eta: f64, x: f64, y: f64) -> f64 {
        let b = 2.0 * alpha;
        b * (re_power(eta, x, b - 1.0) + re_power(eta, y, b - 1.0)
            - re_power(eta, x - y, b - 1.0)
            - re_power(eta, 0.0, b - 1.0))
            / (2.0 * cos_pi(alpha))
    }
}

/// Cayley image w = (z − i)/(z + i) of the upper half-plane onto the unit disc.
pub fn cayley(z: ComplexValue) -> ComplexValue {
    let i = Complex64::new(0.0, 1.0);
    (z - i) / (z + i)
}

/// 2^{α−1} √(α(1−2α)/(2 cos πα)).
pub fn basis_prefactor(alpha: f64) -> f64 {
    2f64.powf(alpha - 1.0) * (alpha * (1.0 - 2.0 * alpha) / (2.0 * cos_pi(alpha))).sqrt()
}

/// √(Γ(2−2α+k)/(Γ(2−2α) k!)) for k = 0..=kmax by the product recurrence.
pub fn pochhammer_roots(alpha: f64, kmax: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(kmax + 1);
    let mut ratio = 1.0_f64;
    out.push(1.0);
    for k in 1..=kmax {
        let kf = k as f64;
        ratio *= (1.0 - 2.0 * alpha + kf) / kf;
        out.push(ratio.sqrt());
    }
    out
}

fn check_upper(z: ComplexValue) -> Result<()> {
    if z.im > 0.0 && z.re.is_finite() && z.im.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("basis functions need Im z > 0, got {z}")))
    }
}

/// f_k(z) = 2^{α−1}√(α(1−2α)/(2cos πα)) √(Γ(2−2α+k)/(Γ(2−2α)k!))
///          ((z+i)/(2i))^{2α−2} ((z−i)/(z+i))^k.
pub fn basis_fk(alpha: f64, k: usize, z: ComplexValue) -> Result<ComplexValue> {
    Ok(basis_fk_sequence(alpha, k, z)?[k])
}

/// f_0(z), …, f_kmax(z).
pub fn basis_fk_sequence(alpha: f64, kmax: usize, z: ComplexValue) -> Result<Vec<ComplexValue>> {
    check_upper(z)?;
    let two_i = Complex64::new(0.0, 2.0);
    let head = cpow((z + Complex64::new(0.0, 1.0)) / two_i, 2.0 * alpha - 2.0) * basis_prefactor(alpha);
    let w = cayley(z);
    let roots = pochhammer_roots(alpha, kmax);
    let mut wk = Complex64::new(1.0, 0.0);
    let mut out = Vec::with_capacity(kmax + 1);
    for r in roots {
        out.push(head * wk * r);
        wk *= w;
    }
    Ok(out)
}

/// Number of terms K such that the tail of Σ_k f_k(z₁) conj f_k(z₂) is below
/// `tol`, from |f_k| = |head|·√Poch_k·|w|^k and a ratio bound on Poch_k ρ^k.
pub fn series_truncation(alpha: f64, scale: f64, rho: f64, tol: f64, max_terms: usize) -> Result<usize> {
    if !(rho >= 0.0 && rho < 1.0) {
        return Err(Error::Convergence(format!("series ratio {rho} is not below 1")));
    }
    let mut term = scale; // scale · Poch_k · rho^k at k = 0
    for k in 0..max_terms {
        let kf = k as f64;
        let q = rho * (kf + 2.0 - 2.0 * alpha) / (kf + 1.0);
        let next = term * q;
        if q < 1.0 && next / (1.0 - q) < tol {
            return Ok(k);
        }
        term = next;
    }
    Err(Error::Convergence(format!("series tail above {tol} after {max_terms} terms (rho = {rho})")))
}

/// Truncated Σ_{k≤K} f_k(x+iη/2) conj f_k(y+iη/2) with K from the tail bound.
/// Returns the partial sum and K.
pub fn kprime_series(p: &ModelParams, x: f64, y: f64, tol: f64) -> Result<(ComplexValue, usize)> {
    p.require_positive_eta()?;
    let zx = Complex64::new(x, p.eta / 2.0);
    let zy = Complex64::new(y, p.eta / 2.0);
    let i = Complex64::new(0.0, 1.0);
    let head = |z: ComplexValue| cpow((z + i) / (2.0 * i), 2.0 * p.alpha - 2.0).norm();
    let scale = basis_prefactor(p.alpha).powi(2) * head(zx) * head(zy);
    let rho = cayley(zx).norm() * cayley(zy).norm();
    let k = series_truncation(p.alpha, scale, rho, tol, 2_000_000)?;
    let fx = basis_fk_sequence(p.alpha, k, zx)?;
    let fy = basis_fk_sequence(p.alpha, k, zy)?;
    let sum = fx.iter().zip(&fy).fold(Complex64::new(0.0, 0.0), |acc, (a, b)| acc + a * b.conj());
    Ok((sum, k))
}
