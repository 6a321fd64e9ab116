//! Observables on the rank plane `(K, K*)` and power-law fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, GraphStats};
use crate::rank::RankVector;
use crate::reduce;

/// Logarithmic histogram with explicit under- and overflow bins.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogHistogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    /// Values below `lo`, zero included.
    pub underflow: u64,
    /// Values above `hi`.
    pub overflow: u64,
}

impl LogHistogram {
    pub fn new(lo: f64, hi: f64, cells: usize) -> Result<Self> {
        if cells == 0 {
            return Err(Error::config("histogram needs at least one cell"));
        }
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::config(format!("invalid histogram bounds [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi, counts: vec![0; cells], underflow: 0, overflow: 0 })
    }

    /// Cells are closed on the left; the last one also includes `hi`.
    pub fn add(&mut self, x: f64) {
        if x < self.lo || x.is_nan() {
            self.underflow += 1;
        } else if x > self.hi {
            self.overflow += 1;
        } else {
            let cells = self.counts.len();
            let t = (x / self.lo).ln() / (self.hi / self.lo).ln();
            let k = ((t * cells as f64) as usize).min(cells - 1);
            self.counts[k] += 1;
        }
    }

    /// `cells + 1` edges.
    pub fn edges(&self) -> Vec<f64> {
        let cells = self.counts.len();
        let ratio = self.hi / self.lo;
        (0..=cells).map(|k| self.lo * ratio.powf(k as f64 / cells as f64)).collect()
    }

    pub fn in_range(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub const KAPPA_HIST_LO: f64 = 1e-10;
pub const KAPPA_HIST_HI: f64 = 1e2;
pub const KAPPA_HIST_CELLS: usize = 240;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelatorReport {
    /// `κ = N Σ P(i) P*(i) - 1`
    pub kappa: f64,
    /// `κ_i = N P(i) P*(i)`
    pub components: Vec<f64>,
    pub histogram: LogHistogram,
}

pub fn correlator(p: &RankVector, pstar: &RankVector) -> Result<CorrelatorReport> {
    correlator_from(p.probabilities(), pstar.probabilities())
}

/// [`correlator`] on raw probability vectors.
pub fn correlator_from(p: &[f64], pstar: &[f64]) -> Result<CorrelatorReport> {
    if p.len() != pstar.len() {
        return Err(Error::Dimension { expected: p.len(), found: pstar.len() });
    }
    if p.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let n = p.len() as f64;
    let components: Vec<f64> = p.iter().zip(pstar).map(|(a, b)| n * a * b).collect();
    let kappa = reduce::sum(&components) - 1.0;
    let mut histogram = LogHistogram::new(KAPPA_HIST_LO, KAPPA_HIST_HI, KAPPA_HIST_CELLS)?;
    for &c in &components {
        histogram.add(c);
    }
    Ok(CorrelatorReport { kappa, components, histogram })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum GridMode {
    /// Square cells of `cell_size` ranks covering `1..=max_rank`.
    Linear { cell_size: u32, max_rank: u32 },
    /// `cells` equal steps of `ln K` from 0 to `ln N`.
    Log { cells: usize },
}

impl Default for GridMode {
    fn default() -> Self {
        GridMode::Log { cells: 100 }
    }
}

/// Node counts on a grid over the rank plane. Columns follow `K`, rows `K*`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityGrid {
    pub mode: GridMode,
    pub size: usize,
    /// Row-major `size x size`.
    pub counts: Vec<u64>,
    /// Nodes that fell inside the grid.
    pub total: u64,
}

impl DensityGrid {
    pub fn count(&self, row: usize, col: usize) -> u64 {
        self.counts[row * self.size + col]
    }

    /// `W = count / total`, all zeros if nothing fell inside.
    pub fn density(&self) -> Vec<f64> {
        if self.total == 0 {
            return vec![0.0; self.counts.len()];
        }
        let t = self.total as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }
}

fn check_ranks(k: &[u32], kstar: &[u32]) -> Result<usize> {
    if k.len() != kstar.len() {
        return Err(Error::Dimension { expected: k.len(), found: kstar.len() });
    }
    let n = k.len();
    if let Some(&r) = k.iter().chain(kstar).find(|&&r| r == 0 || r as usize > n) {
        return Err(Error::domain(format!("rank {r} outside 1..={n}")));
    }
    Ok(n)
}

/// Cell of a rank under `mode`, `None` if outside the covered range.
fn cell(mode: GridMode, n: usize, rank: u32) -> Option<usize> {
    match mode {
        GridMode::Linear { cell_size, max_rank } => {
            (rank <= max_rank).then(|| ((rank - 1) / cell_size) as usize)
        }
        GridMode::Log { cells } => {
            if n <= 1 {
                return Some(0);
            }
            let t = (rank as f64).ln() / (n as f64).ln();
            Some(((t * cells as f64) as usize).min(cells - 1))
        }
    }
}

pub fn density_2d(k: &[u32], kstar: &[u32], mode: GridMode) -> Result<DensityGrid> {
    let n = check_ranks(k, kstar)?;
    let size = match mode {
        GridMode::Linear { cell_size, max_rank } => {
            if cell_size == 0 || max_rank == 0 {
                return Err(Error::config("linear grid needs positive cell size and range"));
            }
            max_rank.div_ceil(cell_size) as usize
        }
        GridMode::Log { cells } => {
            if cells == 0 {
                return Err(Error::config("log grid needs at least one cell"));
            }
            cells
        }
    };
    let mut counts = vec![0u64; size * size];
    let mut total = 0;
    for (&a, &b) in k.iter().zip(kstar) {
        if let (Some(col), Some(row)) = (cell(mode, n, a), cell(mode, n, b)) {
            counts[row * size + col] += 1;
            total += 1;
        }
    }
    Ok(DensityGrid { mode, size, counts, total })
}

/// `N_K(k) = #{i : K(i) <= k and K*(i) <= k}` at each requested `k`.
pub fn n_k_counts(k: &[u32], kstar: &[u32], k_values: &[u64]) -> Result<Vec<(u64, u64)>> {
    let n = check_ranks(k, kstar)?;
    let mut first = vec![0u64; n + 1];
    for (&a, &b) in k.iter().zip(kstar) {
        first[a.max(b) as usize] += 1;
    }
    let cumulative = prefix_sums(&first);
    Ok(k_values.iter().map(|&kv| (kv, cumulative[(kv as usize).min(n)])).collect())
}

fn prefix_sums(h: &[u64]) -> Vec<u64> {
    let mut acc = 0;
    h.iter()
        .map(|&c| {
            acc += c;
            acc
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NgPoint {
    pub k: u64,
    /// Links among the top `k` nodes.
    pub n_g: u64,
    /// `N_G / k^2`
    pub g_k: f64,
    /// `N_G / k`
    pub per_node: f64,
}

/// Adjacency links `i -> j` with both `K(i) <= k` and `K(j) <= k`.
pub fn ng_filling(g: &DirectedGraph, k: &[u32], k_values: &[u64]) -> Result<Vec<NgPoint>> {
    let n = g.node_count();
    if k.len() != n {
        return Err(Error::Dimension { expected: n, found: k.len() });
    }
    check_ranks(k, k)?;
    let mut first = vec![0u64; n + 1];
    for (s, d) in g.edges() {
        first[k[s as usize].max(k[d as usize]) as usize] += 1;
    }
    let cumulative = prefix_sums(&first);
    Ok(k_values
        .iter()
        .map(|&kv| {
            let n_g = cumulative[(kv as usize).min(n)];
            let kf = kv as f64;
            NgPoint { k: kv, n_g, g_k: n_g as f64 / (kf * kf), per_node: n_g as f64 / kf }
        })
        .collect())
}

/// About `per_decade` log-spaced integers in `1..=n`, always including both
/// ends.
pub fn log_spaced(n: u64, per_decade: usize) -> Vec<u64> {
    if n == 0 {
        return Vec::new();
    }
    let steps = ((n as f64).log10() * per_decade as f64).ceil() as usize;
    let mut out: Vec<u64> = (0..=steps)
        .map(|s| 10f64.powf(s as f64 / per_decade as f64).round() as u64)
        .filter(|&v| v >= 1 && v <= n)
        .collect();
    out.push(n);
    out.dedup();
    out
}

/// Survival fraction of subspace dimensions in `x = d / <d>`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubspaceFraction {
    pub mean: f64,
    /// `(x, F(x))` at each distinct rescaled dimension.
    pub points: Vec<(f64, f64)>,
    dims: Vec<usize>,
}

impl SubspaceFraction {
    /// Fraction of subspaces with `d > x <d>`.
    pub fn eval(&self, x: f64) -> f64 {
        let above = self.dims.len() - self.dims.partition_point(|&d| d as f64 / self.mean <= x);
        above as f64 / self.dims.len() as f64
    }

    /// Power-law fit `F = a x^b` over `log10 x` in `log_range`.
    pub fn tail_fit(&self, log_range: (f64, f64)) -> Result<PowerLawFit> {
        let samples: Vec<(f64, f64)> = self.points.iter().copied().filter(|p| p.1 > 0.0).collect();
        powerlaw_fit(&samples, log_range)
    }
}

/// `(1 + 2x)^{-3/2}`
pub fn reference_fraction(x: f64) -> f64 {
    (1.0 + 2.0 * x).powf(-1.5)
}

pub fn subspace_fraction(dims: &[usize]) -> Result<SubspaceFraction> {
    if dims.is_empty() {
        return Err(Error::domain("no subspace dimensions"));
    }
    if dims.contains(&0) {
        return Err(Error::domain("subspace dimension 0"));
    }
    let mut dims = dims.to_vec();
    dims.sort_unstable();
    let count = dims.len() as f64;
    let mean = dims.iter().map(|&d| d as f64).sum::<f64>() / count;
    let mut points = Vec::new();
    let mut i = 0;
    while i < dims.len() {
        let d = dims[i];
        let end = dims.partition_point(|&e| e <= d);
        points.push((d as f64 / mean, (dims.len() - end) as f64 / count));
        i = end;
    }
    Ok(SubspaceFraction { mean, points, dims })
}

/// `y = a x^b` fitted by least squares on `log10 y` against `log10 x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub a: f64,
    pub b: f64,
    pub err_a: f64,
    pub err_b: f64,
    /// Range of `log10 x` that was fitted.
    pub range: (f64, f64),
    pub points: usize,
}

impl PowerLawFit {
    /// `β` in `y = a / x^β`.
    pub fn decay_exponent(&self) -> f64 {
        -self.b
    }
}

/// Fits samples whose `log10 x` lies in the closed `log_range`. Samples with
/// `x <= 0` are ignored.
pub fn powerlaw_fit(samples: &[(f64, f64)], log_range: (f64, f64)) -> Result<PowerLawFit> {
    let (lo, hi) = log_range;
    if lo.is_nan() || hi.is_nan() || lo > hi {
        return Err(Error::config(format!("invalid fit range [{lo}, {hi}]")));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(x, y) in samples {
        if x.is_nan() || x <= 0.0 {
            continue;
        }
        let lx = x.log10();
        if lx < lo || lx > hi {
            continue;
        }
        if y.is_nan() || y <= 0.0 || y.is_infinite() {
            return Err(Error::domain(format!("non-positive sample y = {y} at x = {x}")));
        }
        xs.push(lx);
        ys.push(y.log10());
    }
    let m = xs.len();
    if m < 3 {
        return Err(Error::InsufficientData { needed: 3, found: m });
    }
    let mf = m as f64;
    let mx = xs.iter().sum::<f64>() / mf;
    let my = ys.iter().sum::<f64>() / mf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData { needed: 2, found: 1 });
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    let c = my - b * mx;
    let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - c - b * x).powi(2)).sum();
    let s2 = ssr / (mf - 2.0);
    let err_b = (s2 / sxx).sqrt();
    let err_c = (s2 * (1.0 / mf + mx * mx / sxx)).sqrt();
    let a = 10f64.powf(c);
    Ok(PowerLawFit {
        a,
        b,
        err_a: a * std::f64::consts::LN_10 * err_c,
        err_b,
        range: log_range,
        points: m,
    })
}

/// Fit of `P(K)` against `K` over `log10 K` in `log_range`.
pub fn rank_fit(rv: &RankVector, log_range: (f64, f64)) -> Result<PowerLawFit> {
    let samples: Vec<(f64, f64)> = rv
        .sorted_probabilities()
        .into_iter()
        .enumerate()
        .map(|(r, p)| ((r + 1) as f64, p))
        .collect();
    powerlaw_fit(&samples, log_range)
}

/// Which degree histogram to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Degree {
    In,
    Out,
}

/// Fit of the degree distribution `w(k) ∝ k^{-μ}` (fraction of nodes with
/// degree `k`, zero degree excluded). `μ` is `-b`.
pub fn degree_fit(stats: &GraphStats, which: Degree, log_range: (f64, f64)) -> Result<PowerLawFit> {
    let hist = match which {
        Degree::In => &stats.in_degree_histogram,
        Degree::Out => &stats.out_degree_histogram,
    };
    let n = stats.nodes as f64;
    let samples: Vec<(f64, f64)> =
        hist.iter().filter(|(&k, _)| k > 0).map(|(&k, &c)| (k as f64, c as f64 / n)).collect();
    powerlaw_fit(&samples, log_range)
}

/// Rank exponent implied by a degree exponent: `β = 1 / (μ - 1)`.
pub fn rank_exponent_from_degree(mu: f64) -> f64 {
    1.0 / (mu - 1.0)
}
