use levy_area::kernels::{k_real, ModelParams};
use levy_area::quadrature::second_moment_direct;
use levy_area::simulate::*;
use levy_area::special_functions::cos_pi;
use levy_area::Error;

fn params(alpha: f64, eta: f64) -> ModelParams {
    ModelParams::new(alpha, eta).unwrap()
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Mean of x² and its standard error.
fn second_moment(x: &[f64]) -> (f64, f64) {
    let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
    let m = mean(&sq);
    let var = sq.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (sq.len() as f64 - 1.0);
    (m, (var / sq.len() as f64).sqrt())
}

#[test]
fn variance_matches_kernel() {
    let p = params(0.2, 0.05);
    let g = TimeGrid::uniform(1.0, 0.005).unwrap();
    let e = sample_paths(&p, &g, 10_000, 42, SimulationMethod::Cholesky).unwrap();
    let col = e.column(0, g.index_of(1.0).unwrap());
    let (v, se) = second_moment(&col);
    let want = k_real(&p, 1.0, 1.0).unwrap();
    assert!((v - want).abs() < 3.0 * se, "{v} vs {want} ± {se}");
    // time-0 value under the printed kernel
    let (v0, se0) = second_moment(&e.column(1, 0));
    let want0 = 0.05f64.powf(0.4) / (2.0 * cos_pi(0.2));
    assert!((v0 - want0).abs() < 3.0 * se0, "{v0} vs {want0}");
}

#[test]
fn bit_identical_across_thread_counts() {
    let p = params(0.2, 0.05);
    let g = TimeGrid::uniform(0.5, 0.005).unwrap();
    for method in [SimulationMethod::Cholesky, SimulationMethod::Series] {
        let p = if method == SimulationMethod::Series { params(0.2, 0.3) } else { p };
        let g = if method == SimulationMethod::Series { TimeGrid::uniform(0.6, 0.03).unwrap() } else { g.clone() };
        let a = in_pool(1, || sample_paths(&p, &g, 100, 9, method).unwrap());
        let b = in_pool(4, || sample_paths(&p, &g, 100, 9, method).unwrap());
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.b1), bits(&b.b1));
        assert_eq!(bits(&a.b2), bits(&b.b2));
        // a path does not depend on the ensemble size
        let c = sample_paths(&p, &g, 37, 9, method).unwrap();
        assert_eq!(bits(c.path(36).0), bits(a.path(36).0));
        assert_ne!(bits(a.path(0).0), bits(a.path(1).0));
    }
}

#[test]
fn components_are_independent() {
    let p = params(0.2, 0.05);
    let g = TimeGrid::uniform(1.0, 0.005).unwrap();
    let n = 4000;
    let e = sample_paths(&p, &g, n, 3, SimulationMethod::Cholesky).unwrap();
    for j in [0, 50, 200] {
        let x = e.column(0, j);
        let y = e.column(1, j);
        let (c, _) = sample_covariance(&x, &y);
        let (vx, vy) = (sample_covariance(&x, &x).0, sample_covariance(&y, &y).0);
        let corr = c / (vx * vy).sqrt();
        assert!(corr.abs() < 3.0 / (n as f64).sqrt(), "j={j}: {corr}");
    }
}

#[test]
fn marginals_are_gaussian() {
    let p = params(0.2, 0.05);
    let g = TimeGrid::uniform(1.0, 0.005).unwrap();
    let n = 10_000;
    let e = sample_paths(&p, &g, n, 17, SimulationMethod::Cholesky).unwrap();
    for j in [1, 100, 200] {
        let x = e.column(1, j);
        let m2 = mean(&x.iter().map(|v| v * v).collect::<Vec<_>>());
        let m4 = mean(&x.iter().map(|v| v.powi(4)).collect::<Vec<_>>());
        let ratio = m4 / (m2 * m2);
        // the kurtosis estimator has standard error √(24/n)
        assert!((ratio - 3.0).abs() < 5.0 * (24.0 / n as f64).sqrt(), "j={j}: {ratio}");
    }
}

#[test]
fn increments_are_stationary() {
    let p = params(0.2, 0.05);
    let g = TimeGrid::uniform(1.0, 0.005).unwrap();
    let e = sample_paths(&p, &g, 10_000, 23, SimulationMethod::Cholesky).unwrap();
    let inc = |s: f64, t: f64| {
        let (i, j) = (g.index_of(s).unwrap(), g.index_of(t).unwrap());
        let a = e.column(0, i);
        let b = e.column(0, j);
        second_moment(&b.iter().zip(&a).map(|(y, x)| y - x).collect::<Vec<_>>())
    };
    let (v1, s1) = inc(0.0, 0.3);
    for (s, t) in [(0.1, 0.4), (0.35, 0.65), (0.7, 1.0)] {
        let (v2, s2) = inc(s, t);
        assert!((v1 - v2).abs() < 4.0 * s1.hypot(s2), "({s},{t}): {v1} vs {v2}");
    }
}

#[test]
fn area_basics_and_grid_errors() {
    let p = params(0.2, 0.05);
    let g = TimeGrid::uniform(1.0, 0.005).unwrap();
    let e = sample_paths(&p, &g, 20, 1, SimulationMethod::Cholesky).unwrap();
    assert!(levy_area(&e, 0.4, 0.4).unwrap().iter().all(|a| a.value == 0.0));
    assert!(matches!(levy_area(&e, 0.0, 0.5003), Err(Error::Grid(_))));
    let factor = 0.05f64.powf(0.1);
    for a in levy_area(&e, 0.1, 0.9).unwrap() {
        assert!((a.rescaled - factor * a.value).abs() <= 1e-15 * a.value.abs());
    }
    let coarse = TimeGrid::uniform(1.0, 0.01).unwrap();
    assert!(matches!(sample_paths(&p, &coarse, 5, 1, SimulationMethod::Cholesky), Err(Error::Grid(_))));
}

#[test]
fn chen_identity_per_path() {
    let p = params(0.2, 0.05);
    let g = TimeGrid::uniform(1.0, 0.005).unwrap();
    let e = sample_paths(&p, &g, 50, 8, SimulationMethod::Cholesky).unwrap();
    let (s, u, t) = (g.index_of(0.1).unwrap(), g.index_of(0.45).unwrap(), g.index_of(0.9).unwrap());
    for i in 0..50 {
        let (b1, b2) = e.path(i);
        let whole = path_area(b1, b2, s, t);
        let split = path_area(b1, b2, s, u) + path_area(b1, b2, u, t) + (b2[u] - b2[s]) * (b1[t] - b1[u]);
        assert!((whole - split).abs() <= 1e-10 * whole.abs().max(1e-12), "path {i}");
        // the printed cross term belongs to the area with the roles of the components exchanged
        let whole = path_area(b2, b1, s, t);
        let split = path_area(b2, b1, s, u) + path_area(b2, b1, u, t) + (b1[u] - b1[s]) * (b2[t] - b2[u]);
        assert!((whole - split).abs() <= 1e-10 * whole.abs().max(1e-12), "path {i}");
    }
}

#[test]
fn second_moment_matches_quadrature() {
    let p = params(0.2, 0.05);
    let g = TimeGrid::uniform(1.0, 0.005).unwrap();
    let e = sample_paths(&p, &g, 20_000, 77, SimulationMethod::Cholesky).unwrap();
    let areas: Vec<f64> = levy_area(&e, 0.0, 1.0).unwrap().iter().map(|a| a.value).collect();
    let (m, se) = second_moment(&areas);
    let want = second_moment_direct(&p, 0.0, 1.0).unwrap();
    assert!((m - want).abs() < 3.0 * se, "{m} vs {want} ± {se}");
}

#[test]
fn grid_refinement_is_stable() {
    // the even points of a fine-grid path form an exact coarse-grid path
    let p = params(0.2, 0.05);
    let fine = TimeGrid::uniform(1.0, 0.0025).unwrap();
    let e = sample_paths(&p, &fine, 400, 4, SimulationMethod::Cholesky).unwrap();
    let n = fine.len();
    let mut fine_areas = Vec::new();
    let mut coarse_areas = Vec::new();
    for i in 0..e.n_paths {
        let (b1, b2) = e.path(i);
        fine_areas.push(path_area(b1, b2, 0, n - 1));
        let c1: Vec<f64> = b1.iter().step_by(2).copied().collect();
        let c2: Vec<f64> = b2.iter().step_by(2).copied().collect();
        coarse_areas.push(path_area(&c1, &c2, 0, c1.len() - 1));
    }
    let scale = mean(&fine_areas.iter().map(|a| a * a).collect::<Vec<_>>()).sqrt();
    let diffs: Vec<f64> = fine_areas.iter().zip(&coarse_areas).map(|(f, c)| (f - c).abs() / scale).collect();
    let rms = mean(&diffs.iter().map(|d| d * d).collect::<Vec<_>>()).sqrt();
    let worst = diffs.iter().copied().fold(0.0, f64::max);
    eprintln!("relative change: rms {rms:e}, worst {worst:e}");
    assert!(rms < 1e-3, "{rms}");
}

#[test]
fn methods_agree_at_large_eta() {
    let p = params(0.2, 0.25);
    let g = TimeGrid::uniform(1.0, 0.025).unwrap();
    let n = 20_000;
    let a = sample_paths(&p, &g, n, 5, SimulationMethod::Cholesky).unwrap();
    let b = sample_paths(&p, &g, n, 6, SimulationMethod::Series).unwrap();
    let m = |e: &PathEnsemble| second_moment(&levy_area(e, 0.0, 1.0).unwrap().iter().map(|a| a.value).collect::<Vec<_>>());
    let ((ma, sa), (mb, sb)) = (m(&a), m(&b));
    assert!((ma - mb).abs() < 3.0 * sa.hypot(sb), "{ma} ± {sa} vs {mb} ± {sb}");
    // increments agree in law as well
    let inc = |e: &PathEnsemble| {
        let x = e.column(0, 0);
        let y = e.column(0, g.len() - 1);
        second_moment(&y.iter().zip(&x).map(|(b, a)| b - a).collect::<Vec<_>>())
    };
    let ((ia, ea), (ib, eb)) = (inc(&a), inc(&b));
    assert!((ia - ib).abs() < 3.0 * ea.hypot(eb), "{ia} vs {ib}");
}

#[test]
fn series_needs_convergent_tail() {
    let p = params(0.2, 0.001);
    let g = TimeGrid::uniform(1.0, 0.0001).unwrap();
    assert!(matches!(series_terms(&p, &g, 1e-10, 20_000), Err(Error::Convergence(_))));
}

#[test]
fn overlap_covariance_cases() {
    let p = params(0.2, 0.02);
    let g = TimeGrid::uniform(1.0, 0.002).unwrap();
    let e = sample_paths(&p, &g, 8000, 12, SimulationMethod::Cholesky).unwrap();
    let c = overlap_covariance(&e, (0.0, 0.4), (0.6, 1.0)).unwrap();
    assert!(c.rescaled.abs() < 3.0 * c.std_error, "{c:?}");
    let same = overlap_covariance(&e, (0.0, 0.5), (0.0, 0.5)).unwrap();
    let r: Vec<f64> = levy_area(&e, 0.0, 0.5).unwrap().iter().map(|a| a.rescaled).collect();
    assert!((same.rescaled - sample_covariance(&r, &r).0).abs() < 1e-15 * same.rescaled);
    assert!(matches!(overlap_covariance(&e, (0.0, 0.4001), (0.5, 1.0)), Err(Error::Grid(_))));
}

#[test]
fn cache_round_trip() {
    let p = params(0.2, 0.1);
    let g = TimeGrid::uniform(0.5, 0.01).unwrap();
    let opts = SimulationOptions { covariance: CovarianceModel::Increment, ..Default::default() };
    let e = sample_paths_with(&p, &g, 7, 99, &opts).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ensemble.bin");
    write_cache(&e, &path).unwrap();
    assert_eq!(read_cache(&path).unwrap(), e);
    let mut bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..8], b"LVYAREA1");
    assert_eq!(bytes.len(), 8 + 4 * 3 + 8 * 6 + 8 * (g.len() * (1 + 2 * 7)));
    bytes.push(0);
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(read_cache(&path), Err(Error::Cache(_))));
    bytes.truncate(40);
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(read_cache(&path), Err(Error::Cache(_))));
    bytes[0] = b'X';
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(read_cache(&path), Err(Error::Cache(_))));
}
