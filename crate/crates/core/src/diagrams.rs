//! Wick calculus: pairings, diagram cycle decompositions, cumulant and moment
//! conversion, and a brute-force Isserlis oracle.
//!
//! Indices are 0-based. A diagram is a pair of perfect matchings of the 2N
//! slots, one for K′ edges and one for K edges; their union splits into
//! alternating even cycles. For the discrete bilinear model X = ξᵀ T ζ with
//! ξ ~ N(0, K′), ζ ~ N(0, K) independent, a cycle with 2L slots contributes
//! trace(Q^L) with Q = Tᵀ K′ T K, so κ_{2N}(X) = (2N−1)!·trace(Q^N).

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const MAX_PAIRING_ORDER: usize = 12;
const MAX_ISSERLIS_ORDER: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pairing {
    /// Sorted pairs (i, j) with i < j, sorted by i.
    pub pairs: Vec<(usize, usize)>,
}

impl Pairing {
    pub fn size(&self) -> usize {
        2 * self.pairs.len()
    }

    /// partner[i] for every slot.
    pub fn partners(&self) -> Vec<usize> {
        let mut out = vec![usize::MAX; self.size()];
        for &(i, j) in &self.pairs {
            out[i] = j;
            out[j] = i;
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        let n = self.size();
        let mut seen = vec![false; n];
        for &(i, j) in &self.pairs {
            if i >= n || j >= n || i == j || seen[i] || seen[j] {
                return false;
            }
            seen[i] = true;
            seen[j] = true;
        }
        true
    }
}

/// All (n2 − 1)!! perfect matchings of {0, …, n2−1}, lexicographic.
pub fn enumerate_pairings(n2: usize) -> Result<Vec<Pairing>> {
    if n2 % 2 == 1 {
        return Err(Error::Precondition(format!("pairings need an even count, got {n2}")));
    }
    if n2 > MAX_PAIRING_ORDER {
        return Err(Error::Budget(format!("{n2} indices exceed the pairing budget {MAX_PAIRING_ORDER}")));
    }
    let mut out = Vec::new();
    let mut remaining: Vec<usize> = (0..n2).collect();
    let mut current = Vec::with_capacity(n2 / 2);
    pair_up(&mut remaining, &mut current, &mut out);
    Ok(out)
}

fn pair_up(remaining: &mut Vec<usize>, current: &mut Vec<(usize, usize)>, out: &mut Vec<Pairing>) {
    if remaining.is_empty() {
        out.push(Pairing { pairs: current.clone() });
        return;
    }
    let first = remaining.remove(0);
    for k in 0..remaining.len() {
        let partner = remaining.remove(k);
        current.push((first, partner));
        pair_up(remaining, current, out);
        current.pop();
        remaining.insert(k, partner);
    }
    remaining.insert(0, first);
}

/// (2n − 1)!!
pub fn double_factorial_odd(n: usize) -> u128 {
    (1..=n as u128).map(|k| 2 * k - 1).product()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagram {
    pub kprime_pairing: Pairing,
    pub k_pairing: Pairing,
}

/// Cycle decomposition of the union of the two matchings. Each cycle starts at
/// its smallest slot and follows the K′ edge first.
pub fn diagram_cycles(d: &Diagram) -> Result<Vec<Vec<usize>>> {
    let n = d.kprime_pairing.size();
    if n != d.k_pairing.size() || !d.kprime_pairing.is_valid() || !d.k_pairing.is_valid() {
        return Err(Error::Precondition("diagram pairings must be valid and of equal size".into()));
    }
    let kp = d.kprime_pairing.partners();
    let k = d.k_pairing.partners();
    let mut seen = vec![false; n];
    let mut cycles = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut cycle = Vec::new();
        let mut v = start;
        loop {
            cycle.push(v);
            seen[v] = true;
            let u = kp[v];
            cycle.push(u);
            seen[u] = true;
            v = k[u];
            if v == start {
                break;
            }
        }
        cycles.push(cycle);
    }
    Ok(cycles)
}

/// Number of diagrams on 2N slots whose union is a single cycle.
pub fn count_single_cycle_diagrams(n: usize) -> Result<usize> {
    let pairings = enumerate_pairings(2 * n)?;
    let mut count = 0;
    for a in &pairings {
        for b in &pairings {
            let d = Diagram { kprime_pairing: a.clone(), k_pairing: b.clone() };
            if diagram_cycles(&d)?.len() == 1 {
                count += 1;
            }
        }
    }
    Ok(count)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CumulantVector {
    /// κ by order; odd orders are implicitly zero.
    pub kappa: BTreeMap<usize, f64>,
}

impl CumulantVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, order: usize, value: f64) -> Self {
        self.kappa.insert(order, value);
        self
    }

    fn get(&self, order: usize) -> Result<f64> {
        if order % 2 == 1 {
            return Ok(self.kappa.get(&order).copied().unwrap_or(0.0));
        }
        self.kappa.get(&order).copied().ok_or(Error::MissingCumulant(order))
    }

    /// κ₂ₙ = (2n − 1)!·φ^{(c)}_{2n}, from connected moments keyed by 2n.
    pub fn from_connected_moments(phi: &BTreeMap<usize, f64>) -> Self {
        let kappa = phi
            .iter()
            .map(|(&order, &v)| (order, factorial(order - 1) * v))
            .collect();
        Self { kappa }
    }
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// E[X^order] from cumulants by summing over partitions of `order` into even
/// blocks, weight order!/∏((2j)!^{N_j} N_j!).
pub fn moments_from_cumulants(c: &CumulantVector, order: usize) -> Result<f64> {
    if order == 0 {
        return Ok(1.0);
    }
    if order % 2 == 1 {
        return Ok(0.0);
    }
    let parts: Vec<usize> = (1..=order / 2).map(|j| 2 * j).collect();
    let mut kappas = Vec::with_capacity(parts.len());
    for &p in &parts {
        kappas.push(c.get(p));
    }
    let mut total = 0.0;
    let mut counts = vec![0usize; parts.len()];
    partition_sum(order, 0, &parts, &mut counts, &kappas, order, &mut total)?;
    Ok(total)
}

fn partition_sum(
    remaining: usize,
    idx: usize,
    parts: &[usize],
    counts: &mut Vec<usize>,
    kappas: &[Result<f64>],
    order: usize,
    total: &mut f64,
) -> Result<()> {
    if remaining == 0 {
        let mut term = factorial(order);
        for (j, &n) in counts.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let kappa = kappas[j].clone()?;
            term *= kappa.powi(n as i32) / (factorial(parts[j]).powi(n as i32) * factorial(n));
        }
        *total += term;
        return Ok(());
    }
    if idx == parts.len() {
        return Ok(());
    }
    let p = parts[idx];
    let max = remaining / p;
    for n in 0..=max {
        counts[idx] = n;
        partition_sum(remaining - n * p, idx + 1, parts, counts, kappas, order, total)?;
    }
    counts[idx] = 0;
    Ok(())
}

/// exp of a power series: b = exp(a) with a₀ = 0, via n·bₙ = Σ_k k·a_k·b_{n−k}.
pub fn exp_power_series(a: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut b = vec![0.0; n];
    if n == 0 {
        return b;
    }
    b[0] = a[0].exp();
    for m in 1..n {
        let s: f64 = (1..=m).map(|k| k as f64 * a[k] * b[m - k]).sum();
        b[m] = s / m as f64;
    }
    b
}

/// E[X^order] as order!·[λ^order] exp(Σ κ_n λⁿ/n!).
pub fn moments_by_exponentiation(c: &CumulantVector, order: usize) -> Result<f64> {
    let mut a = vec![0.0; order + 1];
    for (n, slot) in a.iter_mut().enumerate().skip(1) {
        if n % 2 == 0 {
            *slot = c.get(n)? / factorial(n);
        }
    }
    Ok(exp_power_series(&a)[order] * factorial(order))
}

/// Sample cumulants κ₂ and κ₄ from centered sample moments.
pub fn empirical_cumulants(samples: &[f64]) -> Result<CumulantVector> {
    if samples.len() < 2 {
        return Err(Error::Precondition("empirical cumulants need at least two samples".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for &x in samples {
        let d = (x - mean) * (x - mean);
        m2 += d;
        m4 += d * d;
    }
    m2 /= n;
    m4 /= n;
    Ok(CumulantVector::new().with(2, m2).with(4, m4 - 3.0 * m2 * m2))
}

/// E[∏ X_{m_k}] for X ~ N(0, cov): Σ over pairings of ∏ cov entries.
pub fn isserlis_oracle(cov: &DMatrix<f64>, monomial: &[usize]) -> Result<f64> {
    if monomial.len() > MAX_ISSERLIS_ORDER {
        return Err(Error::Budget(format!(
            "monomial of degree {} exceeds the Isserlis budget {MAX_ISSERLIS_ORDER}",
            monomial.len()
        )));
    }
    if cov.nrows() != cov.ncols() || monomial.iter().any(|&i| i >= cov.nrows()) {
        return Err(Error::Precondition("monomial indices must address a square covariance".into()));
    }
    if monomial.len() % 2 == 1 {
        return Ok(0.0);
    }
    let mut idx = monomial.to_vec();
    Ok(isserlis_rec(cov, &mut idx))
}

fn isserlis_rec(cov: &DMatrix<f64>, idx: &mut Vec<usize>) -> f64 {
    if idx.is_empty() {
        return 1.0;
    }
    let first = idx.remove(0);
    let mut total = 0.0;
    for k in 0..idx.len() {
        let c = cov[(first, idx[k])];
        if c != 0.0 {
            let partner = idx.remove(k);
            total += c * isserlis_rec(cov, idx);
            idx.insert(k, partner);
        }
    }
    idx.insert(0, first);
    total
}

/// E[X₀X₁X₂X₃] for a 4×4 covariance.
#[inline]
pub fn isserlis_fixed4(cov: &[[f64; 4]; 4]) -> f64 {
    cov[0][1] * cov[2][3] + cov[0][2] * cov[1][3] + cov[0][3] * cov[1][2]
}

fn check_model(t: &DMatrix<f64>, kp: &DMatrix<f64>, k: &DMatrix<f64>) -> Result<()> {
    let (m, n) = t.shape();
    if kp.shape() != (m, m) || k.shape() != (n, n) {
        return Err(Error::Precondition("model shapes: T is m×n, K′ is m×m, K is n×n".into()));
    }
    Ok(())
}

/// Q = Tᵀ K′ T K.
pub fn cycle_operator(t: &DMatrix<f64>, kp: &DMatrix<f64>, k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_model(t, kp, k)?;
    Ok(t.transpose() * kp * t * k)
}

/// Connected 2N-point value trace(Q^N) of the discrete model.
pub fn connected_value(t: &DMatrix<f64>, kp: &DMatrix<f64>, k: &DMatrix<f64>, order: usize) -> Result<f64> {
    let q = cycle_operator(t, kp, k)?;
    let mut p = q.clone();
    for _ in 1..order {
        p = &p * &q;
    }
    Ok(p.trace())
}

/// E[X^{2N}] for X = ξᵀ T ζ as the sum over all diagrams of ∏_cycles trace(Q^{L}).
pub fn wick_diagram_sum(t: &DMatrix<f64>, kp: &DMatrix<f64>, k: &DMatrix<f64>, order: usize) -> Result<f64> {
    let q = cycle_operator(t, kp, k)?;
    let mut traces = vec![0.0; order + 1];
    let mut p = DMatrix::<f64>::identity(q.nrows(), q.ncols());
    for tr in traces.iter_mut().skip(1) {
        p = &p * &q;
        *tr = p.trace();
    }
    let pairings = enumerate_pairings(2 * order)?;
    let mut total = 0.0;
    for a in &pairings {
        for b in &pairings {
            let d = Diagram { kprime_pairing: a.clone(), k_pairing: b.clone() };
            total += diagram_cycles(&d)?.iter().map(|c| traces[c.len() / 2]).product::<f64>();
        }
    }
    Ok(total)
}

/// E[X^{2N}] for X = ξᵀ T ζ by expanding the power over index tuples and
/// applying Isserlis to every monomial of ξ and of ζ (independent blocks of
/// the joint Gaussian vector).
pub fn bilinear_moment_isserlis(
    t: &DMatrix<f64>,
    kp: &DMatrix<f64>,
    k: &DMatrix<f64>,
    order: usize,
) -> Result<f64> {
    check_model(t, kp, k)?;
    let (m, n) = t.shape();
    let slots = 2 * order;
    if slots > MAX_ISSERLIS_ORDER {
        return Err(Error::Budget(format!("order {order} exceeds the Isserlis budget")));
    }
    let xi = moment_tensor(kp, m, slots)?;
    let mut y = moment_tensor(k, n, slots)?;
    // Contract every slot of the ζ tensor with T: index j → i.
    let mut dims = vec![n; slots];
    for mode in 0..slots {
        let mut new_dims = dims.clone();
        new_dims[mode] = m;
        let size: usize = new_dims.iter().product();
        let mut out = vec![0.0; size];
        let stride: usize = dims[mode + 1..].iter().product();
        let new_stride = stride; // trailing dims unchanged
        let outer: usize = dims[..mode].iter().product();
        for o in 0..outer {
            for i in 0..m {
                for s in 0..stride {
                    let mut acc = 0.0;
                    for j in 0..dims[mode] {
                        acc += t[(i, j)] * y[(o * dims[mode] + j) * stride + s];
                    }
                    out[(o * m + i) * new_stride + s] = acc;
                }
            }
        }
        y = out;
        dims = new_dims;
    }
    Ok(xi.iter().zip(&y).map(|(a, b)| a * b).sum())
}

fn moment_tensor(cov: &DMatrix<f64>, dim: usize, slots: usize) -> Result<Vec<f64>> {
    let size = dim.pow(slots as u32);
    let mut out = Vec::with_capacity(size);
    let mut idx = vec![0usize; slots];
    for flat in 0..size {
        let mut r = flat;
        for s in (0..slots).rev() {
            idx[s] = r % dim;
            r /= dim;
        }
        out.push(isserlis_oracle(cov, &idx)?);
    }
    Ok(out)
}
