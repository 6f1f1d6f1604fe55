//! Sampling of the pair (B¹(η), B²(η)) on a time grid, Lévy areas and the
//! columnar binary cache.
//!
//! Each (seed, path, component) owns a ChaCha8 stream, `stream = 2·path +
//! component`; the standard normals of a path are the first draws of its
//! stream. Paths are produced in fixed blocks of [`LANES`] with a fixed
//! summation order, so ensembles are bit-identical for any thread count.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Cholesky, DMatrix};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{basis_prefactor, cayley, fast, pochhammer_roots, ModelParams};
use crate::special_functions::cpow;

pub const LANES: usize = 32;
pub const RNG_ALGORITHM: &str = "ChaCha8Rng(seed_from_u64)/stream=2*path+component/StandardNormal";
pub const RNG_CRATE_VERSION: &str = "rand_chacha 0.9";

const MAX_JITTER: f64 = 1e-8;
const SERIES_TOL: f64 = 1e-10;
const SERIES_MAX_TERMS: usize = 20_000;
const CACHE_MAGIC: &[u8; 8] = b"LVYAREA1";
const CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub points: Vec<f64>,
    pub step: f64,
}

impl TimeGrid {
    /// 0, h, 2h, …, T with T/h rounded to the nearest integer.
    pub fn uniform(t_end: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite() && t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::Grid(format!("need positive step and horizon, got step={step}, T={t_end}")));
        }
        let n = (t_end / step).round() as usize;
        if n == 0 || ((n as f64) * step - t_end).abs() > 1e-9 * t_end {
            return Err(Error::Grid(format!("horizon {t_end} is not a multiple of step {step}")));
        }
        Ok(Self { points: (0..=n).map(|i| i as f64 * step).collect(), step })
    }

    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Grid("a grid needs at least two points".into()));
        }
        if points.iter().any(|x| !x.is_finite() || *x < 0.0) || points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Grid("grid points must be finite, non-negative and strictly increasing".into()));
        }
        let step = points.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        Ok(Self { points, step })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of a grid point, matched to 1e-9 of the step.
    pub fn index_of(&self, x: f64) -> Result<usize> {
        let tol = 1e-9 * self.step;
        let i = self.points.partition_point(|&p| p < x - tol);
        match self.points.get(i) {
            Some(&p) if (p - x).abs() <= tol => Ok(i),
            _ => Err(Error::Grid(format!("time {x} is not a grid point"))),
        }
    }

    pub fn check_resolution(&self, p: &ModelParams) -> Result<()> {
        if self.step > p.eta / 10.0 * (1.0 + 1e-12) {
            return Err(Error::Grid(format!("step {} exceeds eta/10 = {}", self.step, p.eta / 10.0)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SimulationMethod {
    #[default]
    Cholesky,
    Series,
}

/// Covariance used by the Cholesky method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovarianceModel {
    /// k_real as printed; B at time 0 has variance η^{2α}/(2 cos πα).
    #[default]
    Literal,
    /// k_increment_real, so B₀ = 0.
    Increment,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimulationOptions {
    pub method: SimulationMethod,
    pub covariance: CovarianceModel,
    /// Fixed number of series terms; chosen from the tail bound when `None`.
    pub series_terms: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub params: ModelParams,
    pub grid: TimeGrid,
    pub seed: u64,
    pub n_paths: usize,
    /// Row-major n_paths × grid.
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
    pub method: SimulationMethod,
    pub covariance: CovarianceModel,
}

impl PathEnsemble {
    pub fn path(&self, index: usize) -> (&[f64], &[f64]) {
        let n = self.grid.len();
        let r = index * n..(index + 1) * n;
        (&self.b1[r.clone()], &self.b2[r])
    }

    /// Values of one component at grid index `j` across paths.
    pub fn column(&self, component: usize, j: usize) -> Vec<f64> {
        let data = if component == 0 { &self.b1 } else { &self.b2 };
        let n = self.grid.len();
        (0..self.n_paths).map(|i| data[i * n + j]).collect()
    }
}

/// A linear map from iid standard normals to path values, path = M · noise.
struct PathMap {
    /// Row-major n_out × n_in.
    matrix: Vec<f64>,
    n_out: usize,
    n_in: usize,
    /// Only the first `row + 1` inputs contribute to output `row`.
    lower: bool,
}

pub fn sample_paths(
    p: &ModelParams,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
    method: SimulationMethod,
) -> Result<PathEnsemble> {
    sample_paths_with(p, grid, n_paths, seed, &SimulationOptions { method, ..Default::default() })
}

pub fn sample_paths_with(
    p: &ModelParams,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
    opts: &SimulationOptions,
) -> Result<PathEnsemble> {
    p.require_positive_eta()?;
    grid.check_resolution(p)?;
    let mut ensemble = PathEnsemble {
        params: *p,
        grid: grid.clone(),
        seed,
        n_paths,
        b1: Vec::new(),
        b2: Vec::new(),
        method: opts.method,
        covariance: opts.covariance,
    };
    if n_paths == 0 {
        return Ok(ensemble);
    }
    let map = match opts.method {
        SimulationMethod::Cholesky => cholesky_map(p, grid, opts.covariance)?,
        SimulationMethod::Series => series_map(p, grid, opts.series_terms)?,
    };
    let n = grid.len();
    let mut b1 = vec![0.0; n_paths * n];
    let mut b2 = vec![0.0; n_paths * n];
    b1.par_chunks_mut(LANES * n).zip(b2.par_chunks_mut(LANES * n)).enumerate().for_each(|(block, (c1, c2))| {
        let first = block * LANES;
        apply_block(&map, seed, first, 0, c1);
        apply_block(&map, seed, first, 1, c2);
    });
    ensemble.b1 = b1;
    ensemble.b2 = b2;
    Ok(ensemble)
}

fn path_rng(seed: u64, path: usize, component: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * path as u64 + component as u64);
    rng
}

/// Fills `out` (lanes × n_out, row-major by path) for paths first.. in this block.
fn apply_block(map: &PathMap, seed: u64, first: usize, component: usize, out: &mut [f64]) {
    let lanes = out.len() / map.n_out;
    // noise[k * LANES + lane]
    let mut noise = vec![0.0; map.n_in * LANES];
    for lane in 0..lanes {
        let mut rng = path_rng(seed, first + lane, component);
        for k in 0..map.n_in {
            noise[k * LANES + lane] = rng.sample(StandardNormal);
        }
    }
    let mut acc = [0.0f64; LANES];
    for row in 0..map.n_out {
        acc.iter_mut().for_each(|a| *a = 0.0);
        let m_row = &map.matrix[row * map.n_in..(row + 1) * map.n_in];
        let width = if map.lower { (row + 1).min(map.n_in) } else { map.n_in };
        for (k, &m) in m_row[..width].iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let z = &noise[k * LANES..(k + 1) * LANES];
            for lane in 0..LANES {
                acc[lane] += m * z[lane];
            }
        }
        for lane in 0..lanes {
            out[lane * map.n_out + row] = acc[lane];
        }
    }
}

fn cholesky_map(p: &ModelParams, grid: &TimeGrid, model: CovarianceModel) -> Result<PathMap> {
    let (alpha, eta) = (p.alpha, p.eta);
    let kernel = match model {
        CovarianceModel::Literal => fast::k_real,
        CovarianceModel::Increment => fast::k_increment_real,
    };
    // Points with identically zero variance (t = 0 under the increment model)
    // are left out of the factorization and stay 0.
    let active: Vec<usize> = (0..grid.len())
        .filter(|&i| kernel(alpha, eta, grid.points[i], grid.points[i]) > 0.0)
        .collect();
    let m = active.len();
    let cov = DMatrix::from_fn(m, m, |i, j| kernel(alpha, eta, grid.points[active[i]], grid.points[active[j]]));
    let l = factor_with_jitter(cov)?;
    let n = grid.len();
    let mut matrix = vec![0.0; n * m];
    for (r, &gi) in active.iter().enumerate() {
        for k in 0..=r {
            matrix[gi * m + k] = l[(r, k)];
        }
    }
    // Rows of inactive points are zero; active indices are increasing, so
    // row gi never reaches past input gi.
    Ok(PathMap { matrix, n_out: n, n_in: m, lower: true })
}

/// Cholesky factor with diagonal jitter escalating 0, 1e-14, …, 1e-8 times
/// the mean diagonal.
pub fn factor_with_jitter(cov: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = cov.nrows();
    let mean_diag = if n == 0 { 0.0 } else { cov.diagonal().sum() / n as f64 };
    let mut rel = 0.0;
    loop {
        let mut m = cov.clone();
        for i in 0..n {
            m[(i, i)] += rel * mean_diag;
        }
        if let Some(c) = Cholesky::new(m) {
            return Ok(c.l());
        }
        rel = if rel == 0.0 { 1e-14 } else { rel * 10.0 };
        if rel > MAX_JITTER * (1.0 + 1e-9) {
            return Err(Error::Cholesky(format!("not positive definite with jitter up to {MAX_JITTER:e}")));
        }
    }
}

/// Number of series terms such that Σ_{k>K} sup_x |2·2i C_k G_k(x)| < tol,
/// with |G_k| ≤ 2T·M·ρ^k, M = max|(z+i)/2|^{2α}, ρ = max|w|.
pub fn series_terms(p: &ModelParams, grid: &TimeGrid, tol: f64, max_terms: usize) -> Result<usize> {
    let y = p.eta / 2.0;
    let zs = grid.points.iter().map(|&x| Complex64::new(x, y));
    let rho = zs.clone().map(|z| cayley(z).norm()).fold(0.0, f64::max);
    let big = zs.map(|z| (z + Complex64::new(0.0, 1.0)).norm() / 2.0).fold(0.0, f64::max);
    let span = grid.points[grid.len() - 1] - grid.points[0];
    let scale = 4.0 * basis_prefactor(p.alpha) * 2.0 * span * big.powf(2.0 * p.alpha);
    let mut term = scale; // scale · √Poch_k · ρ^k
    for k in 0..max_terms {
        let kf = k as f64;
        let q = rho * ((kf + 2.0 - 2.0 * p.alpha) / (kf + 1.0)).sqrt();
        let next = term * q;
        if q < 1.0 && next / (1.0 - q) < tol {
            return Ok(k);
        }
        term = next;
    }
    Err(Error::Convergence(format!("series tail above {tol} after {max_terms} terms (rho = {rho})")))
}

/// G_k(x) = ∫ w^k (1−w)^{−2α} dw from w(x₀) to w(x), k = 0..=kmax, for all
/// grid points, through the antiderivative recurrence.
fn series_integrals(alpha: f64, eta: f64, grid: &TimeGrid, kmax: usize) -> Vec<Vec<Complex64>> {
    let antiderivatives = |x: f64| {
        let w = cayley(Complex64::new(x, eta / 2.0));
        let one = Complex64::new(1.0, 0.0);
        let tail = cpow(one - w, 1.0 - 2.0 * alpha);
        let mut out = Vec::with_capacity(kmax + 1);
        let mut prev = -tail / (1.0 - 2.0 * alpha);
        out.push(prev);
        let mut wk = one;
        for k in 1..=kmax {
            wk *= w;
            let kf = k as f64;
            prev = (kf * prev - wk * tail) / (kf + 1.0 - 2.0 * alpha);
            out.push(prev);
        }
        out
    };
    let base = antiderivatives(grid.points[0]);
    grid.points
        .iter()
        .map(|&x| antiderivatives(x).iter().zip(&base).map(|(a, b)| a - b).collect())
        .collect()
}

fn series_map(p: &ModelParams, grid: &TimeGrid, fixed_terms: Option<usize>) -> Result<PathMap> {
    let kmax = match fixed_terms {
        Some(k) => k,
        None => series_terms(p, grid, SERIES_TOL, SERIES_MAX_TERMS)?,
    };
    let g = series_integrals(p.alpha, p.eta, grid, kmax);
    let roots = pochhammer_roots(p.alpha, kmax);
    let pre = basis_prefactor(p.alpha);
    // ξ_k = (u_k + i v_k)/√2 with u, v standard normal; noise layout
    // [u_0, v_0, u_1, v_1, …].
    // 2 Re(2i C_k G_k ξ_k) = −4 C_k/√2 (Im G_k · u_k + Re G_k · v_k)
    let n_in = 2 * (kmax + 1);
    let n = grid.len();
    let mut matrix = vec![0.0; n * n_in];
    for (row, gx) in g.iter().enumerate() {
        for k in 0..=kmax {
            let c = -4.0 * pre * roots[k] * std::f64::consts::FRAC_1_SQRT_2;
            matrix[row * n_in + 2 * k] = c * gx[k].im;
            matrix[row * n_in + 2 * k + 1] = c * gx[k].re;
        }
    }
    Ok(PathMap { matrix, n_out: n, n_in, lower: false })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaSample {
    pub s: f64,
    pub t: f64,
    pub value: f64,
    pub rescaled: f64,
}

/// η^{(1−4α)/2}.
pub fn rescale_factor(p: &ModelParams) -> f64 {
    p.eta.powf(0.5 * (1.0 - 4.0 * p.alpha))
}

/// Trapezoidal area Σᵢ (½(B²ᵢ + B²ᵢ₊₁) − B²_s)(B¹ᵢ₊₁ − B¹ᵢ) of one path.
pub fn path_area(b1: &[f64], b2: &[f64], i_s: usize, i_t: usize) -> f64 {
    let base = b2[i_s];
    let mut sum = 0.0;
    for i in i_s..i_t {
        sum += (0.5 * (b2[i] + b2[i + 1]) - base) * (b1[i + 1] - b1[i]);
    }
    sum
}

pub fn levy_area(e: &PathEnsemble, s: f64, t: f64) -> Result<Vec<AreaSample>> {
    let i_s = e.grid.index_of(s)?;
    let i_t = e.grid.index_of(t)?;
    if i_t < i_s {
        return Err(Error::Grid(format!("need s <= t, got s={s}, t={t}")));
    }
    let factor = rescale_factor(&e.params);
    Ok((0..e.n_paths)
        .into_par_iter()
        .map(|i| {
            let (b1, b2) = e.path(i);
            let value = path_area(b1, b2, i_s, i_t);
            AreaSample { s, t, value, rescaled: factor * value }
        })
        .collect())
}

/// Sample covariance (n − 1 denominator) and the standard error of the mean
/// of centered products.
pub fn sample_covariance(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len().min(y.len());
    if n < 2 {
        return (f64::NAN, f64::NAN);
    }
    let nf = n as f64;
    let mx = x[..n].iter().sum::<f64>() / nf;
    let my = y[..n].iter().sum::<f64>() / nf;
    let prods: Vec<f64> = (0..n).map(|i| (x[i] - mx) * (y[i] - my)).collect();
    let cov = prods.iter().sum::<f64>() / (nf - 1.0);
    let mean = prods.iter().sum::<f64>() / nf;
    let var = prods.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / (nf - 1.0);
    (cov, (var / nf).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapCovariance {
    pub raw: f64,
    pub rescaled: f64,
    /// Standard error of `rescaled`.
    pub std_error: f64,
}

/// Sample covariance of A_{s₁,t₁} and A_{s₂,t₂} across paths.
pub fn overlap_covariance(e: &PathEnsemble, first: (f64, f64), second: (f64, f64)) -> Result<OverlapCovariance> {
    let a = levy_area(e, first.0, first.1)?;
    let b = levy_area(e, second.0, second.1)?;
    let x: Vec<f64> = a.iter().map(|s| s.rescaled).collect();
    let y: Vec<f64> = b.iter().map(|s| s.rescaled).collect();
    let (cov, se) = sample_covariance(&x, &y);
    let factor = rescale_factor(&e.params);
    Ok(OverlapCovariance { raw: cov / (factor * factor), rescaled: cov, std_error: se })
}

fn method_code(m: SimulationMethod) -> u32 {
    match m {
        SimulationMethod::Cholesky => 0,
        SimulationMethod::Series => 1,
    }
}

fn covariance_code(c: CovarianceModel) -> u32 {
    match c {
        CovarianceModel::Literal => 0,
        CovarianceModel::Increment => 1,
    }
}

/// Writes the ensemble as: magic "LVYAREA1", u32 version, u32 method,
/// u32 covariance, f64 alpha, f64 eta, u64 seed, u64 n_paths, u64 n_grid,
/// f64 step, n_grid f64 grid points, then B1 and B2 row-major; all
/// little-endian.
pub fn write_cache(e: &PathEnsemble, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CACHE_MAGIC)?;
    w.write_all(&CACHE_VERSION.to_le_bytes())?;
    w.write_all(&method_code(e.method).to_le_bytes())?;
    w.write_all(&covariance_code(e.covariance).to_le_bytes())?;
    w.write_all(&e.params.alpha.to_le_bytes())?;
    w.write_all(&e.params.eta.to_le_bytes())?;
    w.write_all(&e.seed.to_le_bytes())?;
    w.write_all(&(e.n_paths as u64).to_le_bytes())?;
    w.write_all(&(e.grid.len() as u64).to_le_bytes())?;
    w.write_all(&e.grid.step.to_le_bytes())?;
    for v in e.grid.points.iter().chain(&e.b1).chain(&e.b2) {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| Error::Cache(format!("truncated cache: {e}")))?;
    Ok(buf)
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    (0..n).map(|_| Ok(f64::from_le_bytes(read_array::<8>(r)?))).collect()
}

pub fn read_cache(path: &Path) -> Result<PathEnsemble> {
    let mut r = BufReader::new(File::open(path)?);
    if &read_array::<8>(&mut r)? != CACHE_MAGIC {
        return Err(Error::Cache("bad magic".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != CACHE_VERSION {
        return Err(Error::Cache(format!("unsupported version {version}")));
    }
    let method = match u32::from_le_bytes(read_array(&mut r)?) {
        0 => SimulationMethod::Cholesky,
        1 => SimulationMethod::Series,
        m => return Err(Error::Cache(format!("unknown method code {m}"))),
    };
    let covariance = match u32::from_le_bytes(read_array(&mut r)?) {
        0 => CovarianceModel::Literal,
        1 => CovarianceModel::Increment,
        c => return Err(Error::Cache(format!("unknown covariance code {c}"))),
    };
    let alpha = f64::from_le_bytes(read_array(&mut r)?);
    let eta = f64::from_le_bytes(read_array(&mut r)?);
    let seed = u64::from_le_bytes(read_array(&mut r)?);
    let n_paths = u64::from_le_bytes(read_array(&mut r)?) as usize;
    let n_grid = u64::from_le_bytes(read_array(&mut r)?) as usize;
    let step = f64::from_le_bytes(read_array(&mut r)?);
    let points = read_f64s(&mut r, n_grid)?;
    let b1 = read_f64s(&mut r, n_paths * n_grid)?;
    let b2 = read_f64s(&mut r, n_paths * n_grid)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Cache("trailing bytes".into()));
    }
    let params = ModelParams::new(alpha, eta).map_err(|e| Error::Cache(e.to_string()))?;
    Ok(PathEnsemble {
        params,
        grid: TimeGrid { points, step },
        seed,
        n_paths,
        b1,
        b2,
        method,
        covariance,
    })
}
