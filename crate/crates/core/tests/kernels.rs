use levy_area::kernels::*;
use levy_area::quadrature::integrate_1d_relative;
use levy_area::special_functions::cos_pi;
use levy_area::{ComplexValue, Error};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

fn params(alpha: f64, eta: f64) -> ModelParams {
    ModelParams::new(alpha, eta).unwrap()
}

fn rel(a: ComplexValue, b: ComplexValue) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

#[test]
fn kprime_examples() {
    let p = params(0.2, 1.0);
    let v = kprime_real(&p, 0.3, 0.3).unwrap();
    let want = 0.2 * 0.6 / cos_pi(0.2);
    assert!((v - want).abs() < 1e-15);
    assert!((v - 0.148_328).abs() < 1e-5);
    let d = kprime_pm(&p, Sign::Minus, 0.7, 0.7).unwrap();
    assert_eq!(d.im, 0.0);
    assert!(matches!(kprime_pm(&params(0.2, 0.0), Sign::Plus, 0.1, 0.2), Err(Error::Domain(_))));
}

#[test]
fn k_examples() {
    let p = params(0.2, 0.3);
    let v = k_pm(&p, Sign::Plus, 0.0, 0.0).unwrap();
    let want = 0.3f64.powf(0.4) / (4.0 * cos_pi(0.2));
    assert!((v - Complex64::new(want, 0.0)).norm() < 1e-15);
    // η = 0 is admissible for K and gives the fBm covariance
    let v = k_real(&params(0.2, 0.0), 0.4, 1.3).unwrap();
    assert!((v - fbm_covariance(0.2, 0.4, 1.3)).abs() < 1e-14);
}

#[test]
fn k_real_tends_to_fbm() {
    let p = params(0.2, 1e-12);
    for (s, t) in [(1.0, 1.0), (0.3, 0.8), (1.5, 0.2)] {
        let v = k_real(&p, s, t).unwrap();
        assert!((v - fbm_covariance(0.2, s, t)).abs() < 1e-4, "({s},{t}): {v}");
    }
    // at η = 1e-6 the offset is η^{2α}/(2 cos πα), above 1e-4
    let p = params(0.2, 1e-6);
    let gap = 1e-6f64.powf(0.4) / (2.0 * cos_pi(0.2));
    let v = k_real(&p, 1.0, 1.0).unwrap();
    assert!((1.0 - v - gap).abs() < 1e-6);
}

#[test]
fn kstar_examples() {
    let p = params(0.2, 0.5);
    let v = kstar_pm(&p, Sign::Plus, 0.4, 0.4).unwrap();
    assert!((v.re + 0.5f64.powf(0.4) / (4.0 * cos_pi(0.2))).abs() < 1e-15 && v.im == 0.0);
    let v = kstar_pm(&p, Sign::Minus, 0.8, 0.5).unwrap();
    let r = 0.5f64.hypot(0.3);
    let theta = (-0.3f64).atan2(0.5);
    let want = -Complex64::from_polar(r.powf(0.4), 0.4 * theta) / (4.0 * cos_pi(0.2));
    assert!(rel(v, want) < 1e-14);
}

#[test]
fn k_minus_kstar_is_boundary_terms() {
    let p = params(0.17, 0.2);
    let c4 = 4.0 * cos_pi(0.17);
    for sign in [Sign::Plus, Sign::Minus] {
        let s = sign.factor();
        for (x, y) in [(0.3, 0.9), (1.2, 0.1), (0.5, 0.5)] {
            let lhs = k_pm(&p, sign, x, y).unwrap() - kstar_pm(&p, sign, x, y).unwrap();
            let rhs = (Complex64::new(0.2, s * x).powf(0.34) + Complex64::new(0.2, -s * y).powf(0.34)) / c4;
            assert!(rel(lhs, rhs) < 1e-13);
        }
    }
}

#[test]
fn real_combined_is_sum_of_signs() {
    let p = params(0.12, 0.07);
    for tag in [KernelTag::Kprime, KernelTag::K, KernelTag::Kstar] {
        let kind = |sign| KernelKind { tag, sign };
        for (x, y) in [(0.3, 0.9), (1.2, 0.1)] {
            let sum = kernel_value(&p, kind(KernelSign::Plus), x, y).unwrap()
                + kernel_value(&p, kind(KernelSign::Minus), x, y).unwrap();
            let real = kernel_value(&p, kind(KernelSign::RealCombined), x, y).unwrap();
            assert!(rel(real, sum) < 1e-13, "{tag:?}");
            assert_eq!(real.im, 0.0);
        }
    }
}

#[test]
fn fbm_examples() {
    assert_eq!(fbm_covariance(0.2, 1.0, 1.0), 1.0);
    assert_eq!(fbm_covariance(0.2, 0.7, 0.0), 0.0);
    assert!((fbm_covariance(0.25, 1.0, 2.0) - 0.5 * 2f64.sqrt()).abs() < 1e-15);
}

#[test]
fn basis_examples() {
    let i = Complex64::new(0.0, 1.0);
    let f0 = basis_fk(0.2, 0, i).unwrap();
    let want = 2f64.powf(-0.8) * (0.2 * 0.6 / (2.0 * cos_pi(0.2))).sqrt();
    assert!((f0 - Complex64::new(want, 0.0)).norm() < 1e-15);
    assert_eq!(basis_fk(0.2, 1, i).unwrap(), Complex64::new(0.0, 0.0));
    assert!(matches!(basis_fk(0.2, 0, Complex64::new(0.3, 0.0)), Err(Error::Domain(_))));
}

#[test]
fn pochhammer_recurrence_matches_gamma_ratio() {
    use levy_area::special_functions::gamma_real;
    let alpha = 0.2;
    let roots = pochhammer_roots(alpha, 60);
    for k in [0usize, 5, 30, 60] {
        let kf = k as f64;
        let direct = (gamma_real(2.0 - 2.0 * alpha + kf).unwrap()
            / (gamma_real(2.0 - 2.0 * alpha).unwrap() * gamma_real(kf + 1.0).unwrap()))
        .sqrt();
        assert!((roots[k] / direct - 1.0).abs() < 1e-12, "k={k}");
    }
}

#[test]
fn kprime_matrix_is_psd() {
    for (alpha, eta, n, t) in [(0.2, 0.01, 256, 1.5), (0.05, 0.1, 128, 1.0), (0.24, 0.001, 200, 1.0)] {
        let p = params(alpha, eta);
        let xs: Vec<f64> = (0..n).map(|i| t * i as f64 / (n - 1) as f64).collect();
        let m = DMatrix::from_fn(n, n, |i, j| kprime_real(&p, xs[i], xs[j]).unwrap());
        let max_diag = m.diagonal().max();
        let ok = [0.0, 1e-14, 1e-12, 1e-10]
            .iter()
            .any(|&j| nalgebra::Cholesky::new(&m + DMatrix::identity(n, n) * (j * max_diag)).is_some());
        assert!(ok, "alpha={alpha} eta={eta}");
    }
}

/// ∫₀ˣ∫₀ʸ K′ by nested adaptive quadrature, split at the diagonal.
fn integrated_kprime(p: &ModelParams, sign: Sign, x: f64, y: f64) -> ComplexValue {
    let outer = |u: f64| {
        let g = |v: f64| kprime_pm(p, sign, u, v).unwrap();
        if u > 0.0 && u < y {
            integrate_1d_relative(g, 0.0, u, 1e-11, None).unwrap().0 + integrate_1d_relative(g, u, y, 1e-11, None).unwrap().0
        } else {
            integrate_1d_relative(g, 0.0, y, 1e-11, None).unwrap().0
        }
    };
    if y > 0.0 && y < x {
        integrate_1d_relative(outer, 0.0, y, 1e-9, None).unwrap().0 + integrate_1d_relative(outer, y, x, 1e-9, None).unwrap().0
    } else {
        integrate_1d_relative(outer, 0.0, x, 1e-9, None).unwrap().0
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hermitian_symmetry(alpha in 0.01f64..0.249, eta in 1e-3f64..2.0, x in -2.0f64..2.0, y in -2.0f64..2.0) {
        let p = params(alpha, eta);
        let conj = |f: fn(&ModelParams, Sign, f64, f64) -> levy_area::Result<ComplexValue>| {
            let a = f(&p, Sign::Plus, x, y).unwrap();
            let b = f(&p, Sign::Minus, x, y).unwrap();
            (a - b.conj()).norm() <= 1e-14 * a.norm().max(1e-300)
        };
        prop_assert!(conj(kprime_pm));
        prop_assert!(conj(k_pm));
        prop_assert!(conj(kstar_pm));
    }

    #[test]
    fn real_kernels_symmetric(alpha in 0.01f64..0.249, eta in 1e-3f64..2.0, x in 0.0f64..2.0, y in 0.0f64..2.0) {
        let p = params(alpha, eta);
        let a = kprime_real(&p, x, y).unwrap();
        prop_assert!((a - kprime_real(&p, y, x).unwrap()).abs() <= 1e-13 * a.abs());
        let a = k_real(&p, x, y).unwrap();
        prop_assert!((a - k_real(&p, y, x).unwrap()).abs() <= 1e-13 * a.abs().max(1e-300));
    }

    #[test]
    fn real_is_twice_real_part(alpha in 0.01f64..0.249, eta in 1e-3f64..2.0, x in 0.0f64..2.0, y in 0.0f64..2.0) {
        let p = params(alpha, eta);
        let a = kprime_real(&p, x, y).unwrap();
        let b = 2.0 * kprime_pm(&p, Sign::Minus, x, y).unwrap().re;
        prop_assert!((a - b).abs() <= 1e-13 * a.abs());
    }

    #[test]
    fn series_reproduces_kprime(alpha in 0.02f64..0.249, eta in 0.2f64..2.0, x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let p = params(alpha, eta);
        let tol = 1e-10;
        let (sum, _) = kprime_series(&p, x, y, tol).unwrap();
        let want = kprime_pm(&p, Sign::Minus, x, y).unwrap();
        prop_assert!((sum - want).norm() < tol + 1e-13 * want.norm(), "{sum} vs {want}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn integrated_kernel_identity(alpha in 0.05f64..0.245, eta in 0.05f64..1.0, x in 0.05f64..1.0, y in 0.05f64..1.0) {
        // K differs from ∫∫K′ by the constant K(η;0,0) = η^{2α}/(4 cos πα)
        let p = params(alpha, eta);
        let offset = eta.powf(2.0 * alpha) / (4.0 * cos_pi(alpha));
        for sign in [Sign::Plus, Sign::Minus] {
            let lhs = k_pm(&p, sign, x, y).unwrap() - offset;
            let rhs = integrated_kprime(&p, sign, x, y);
            prop_assert!(rel(lhs, rhs) < 1e-6, "{lhs} vs {rhs}");
        }
        let inc = k_increment_real(&p, x, y).unwrap();
        let rhs = 2.0 * integrated_kprime(&p, Sign::Minus, x, y).re;
        prop_assert!((inc - rhs).abs() < 1e-6 * rhs.abs());
    }
}
