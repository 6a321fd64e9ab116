//! Arnoldi iteration on the core block `S_cc`.
//!
//! A single pass of fixed Krylov dimension `n_A`, orthogonalised by modified
//! Gram-Schmidt followed by one full reorthogonalisation sweep. Ritz values
//! come from the dense Hessenberg eigenproblem.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::eigen::{self, DenseMatrix};
use crate::error::{Error, Result};
use crate::graph::{GraphView, NodeId};
use crate::operator::GoogleOperator;
use crate::reduce;
use crate::subspace::{SubspaceDecomposition, SubspaceSpectrum};
use crate::Complex64;

/// Default Krylov dimension.
pub const DEFAULT_DIM: usize = 640;

/// `h_{k+1,k}` below this ends the iteration.
pub const BREAKDOWN_TOL: f64 = 1e-14;

/// Ritz pairs with a residual estimate below this are flagged converged.
pub const CONVERGED_TOL: f64 = 1e-6;

/// A real square operator `y = A x`.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for DenseMatrix {
    fn dim(&self) -> usize {
        assert!(self.is_square());
        self.rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(&self.matvec(x));
    }
}

/// `S_cc`: embed a core vector into all nodes, apply `S`, keep core entries.
pub struct CoreOperator<'a> {
    op: GoogleOperator<'a>,
    core: &'a [NodeId],
}

impl<'a> CoreOperator<'a> {
    pub fn new(view: GraphView<'a>, decomp: &'a SubspaceDecomposition) -> Result<Self> {
        if decomp.node_count() != view.node_count() {
            return Err(Error::Dimension {
                expected: view.node_count(),
                found: decomp.node_count(),
            });
        }
        if decomp.core_nodes().is_empty() {
            return Err(Error::domain("the core space is empty"));
        }
        Ok(Self { op: GoogleOperator::new(view, 1.0)?, core: decomp.core_nodes() })
    }

    pub fn core_nodes(&self) -> &'a [NodeId] {
        self.core
    }
}

impl LinearOperator for CoreOperator<'_> {
    fn dim(&self) -> usize {
        self.core.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.op.node_count();
        let mut full = vec![0.0; n];
        for (&i, &v) in self.core.iter().zip(x) {
            full[i as usize] = v;
        }
        let mut out = vec![0.0; n];
        self.op.s_unchecked(&full, &mut out, 1.0, 0.0);
        for (&i, slot) in self.core.iter().zip(y.iter_mut()) {
            *slot = out[i as usize];
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum StartVector {
    #[default]
    Uniform,
    Given(Vec<f64>),
}

/// What to do when `h_{k+1,k}` vanishes before `n_A` steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Breakdown {
    /// Return the invariant Krylov subspace found so far.
    #[default]
    Stop,
    /// Continue with a seeded random vector orthogonal to the basis, so the
    /// full dimension is always reached.
    Restart { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArnoldiConfig {
    /// Requested Krylov dimension; clamped to the operator dimension.
    pub dim: usize,
    pub start: StartVector,
    pub breakdown: Breakdown,
    /// Indices into the sorted Ritz values whose vectors are wanted.
    pub vectors: Vec<usize>,
    /// Compute the orthonormality and Arnoldi relation defects.
    pub diagnostics: bool,
}

impl Default for ArnoldiConfig {
    fn default() -> Self {
        Self {
            dim: DEFAULT_DIM,
            start: StartVector::Uniform,
            breakdown: Breakdown::Stop,
            vectors: Vec::new(),
            diagnostics: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArnoldiResult {
    /// Sorted by descending modulus.
    pub ritz_values: Vec<Complex64>,
    /// `|h_{k+1,k}| |y_k|` per Ritz value.
    pub residuals: Vec<f64>,
    pub converged: Vec<bool>,
    /// Requested `(index, unit-norm vector)` pairs, vectors indexed by core
    /// position.
    pub ritz_vectors: Vec<(usize, Vec<Complex64>)>,
    /// Krylov dimension actually built.
    pub dim: usize,
    pub requested_dim: usize,
    /// `(dim + 1) x dim` upper Hessenberg matrix.
    pub hessenberg: DenseMatrix,
    /// Step at which an exact invariant subspace was hit.
    pub breakdown_at: Option<usize>,
    /// Number of restarts after breakdown.
    pub restarts: usize,
    /// `max |VᵀV - I|`.
    pub orthonormality_defect: Option<f64>,
    /// `max |A V_k - V_k H_k - f e_kᵀ|` with `f` the final residual vector.
    pub relation_residual: Option<f64>,
}

impl ArnoldiResult {
    pub fn converged_count(&self) -> usize {
        self.converged.iter().filter(|&&c| c).count()
    }
}

/// Arnoldi on the core block of `view` under `decomp`.
pub fn arnoldi_core(
    view: GraphView<'_>,
    decomp: &SubspaceDecomposition,
    cfg: &ArnoldiConfig,
) -> Result<ArnoldiResult> {
    arnoldi(&CoreOperator::new(view, decomp)?, cfg)
}

/// Arnoldi on an arbitrary operator.
pub fn arnoldi<A: LinearOperator>(a: &A, cfg: &ArnoldiConfig) -> Result<ArnoldiResult> {
    let n = a.dim();
    if n == 0 {
        return Err(Error::domain("operator has dimension 0"));
    }
    if cfg.dim == 0 {
        return Err(Error::config("the Krylov dimension must be at least 1"));
    }
    let m = cfg.dim.min(n);

    let mut v0 = match &cfg.start {
        StartVector::Uniform => vec![1.0; n],
        StartVector::Given(v) => {
            if v.len() != n {
                return Err(Error::Dimension { expected: n, found: v.len() });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::domain("start vector is not finite"));
            }
            v.clone()
        }
    };
    let norm = reduce::norm2(&v0);
    if norm == 0.0 {
        return Err(Error::domain("start vector is zero"));
    }
    v0.iter_mut().for_each(|x| *x /= norm);

    let mut basis = vec![v0];
    let mut h = DenseMatrix::zeros(m + 1, m);
    let mut breakdown_at = None;
    let mut restarts = 0;
    let mut rng = match cfg.breakdown {
        Breakdown::Restart { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        Breakdown::Stop => None,
    };
    let mut k = 0;
    let mut residual = vec![0.0; n];
    while k < m {
        let mut w = vec![0.0; n];
        a.apply(&basis[k], &mut w);
        for _sweep in 0..2 {
            for (j, v) in basis.iter().enumerate() {
                let c = reduce::dot(v, &w);
                h[(j, k)] += c;
                reduce::axpy(-c, v, &mut w);
            }
        }
        let beta = reduce::norm2(&w);
        h[(k + 1, k)] = beta;
        k += 1;
        if beta < BREAKDOWN_TOL {
            if k == m {
                residual = w;
                break;
            }
            match rng.as_mut() {
                None => {
                    breakdown_at = Some(k);
                    residual = w;
                    break;
                }
                Some(rng) => {
                    h[(k, k - 1)] = 0.0;
                    restarts += 1;
                    basis.push(random_orthogonal(&basis, rng)?);
                }
            }
        } else {
            if k == m {
                residual = w.clone();
            }
            w.iter_mut().for_each(|x| *x /= beta);
            basis.push(w);
        }
    }
    let dim = k;
    let hessenberg = if dim == m { h } else { h.top_left(dim + 1, dim) };
    let tail = hessenberg[(dim, dim - 1)].abs();
    let hk = hessenberg.top_left(dim, dim);

    let mut ritz_values = eigen::hessenberg_eigenvalues(&hk)?;
    eigen::sort_by_modulus_desc(&mut ritz_values);
    let ys: Vec<Vec<Complex64>> =
        ritz_values.par_iter().map(|&lambda| eigen::hessenberg_eigenvector(&hk, lambda)).collect();
    let residuals: Vec<f64> = ys.iter().map(|y| tail * y[dim - 1].norm()).collect();
    let converged = residuals.iter().map(|&r| r < CONVERGED_TOL).collect();

    let mut ritz_vectors = Vec::new();
    for &idx in &cfg.vectors {
        let Some(y) = ys.get(idx) else {
            return Err(Error::config(format!(
                "Ritz vector {idx} requested but only {dim} values exist"
            )));
        };
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        for (yj, vj) in y.iter().zip(&basis) {
            for (xi, &vi) in x.iter_mut().zip(vj) {
                *xi += yj * vi;
            }
        }
        ritz_vectors.push((idx, x));
    }

    let (orthonormality_defect, relation_residual) = if cfg.diagnostics {
        let kept = &basis[..basis.len().min(dim + 1)];
        (Some(orthonormality_defect(kept)), Some(relation_defect(a, &basis[..dim], &hk, &residual)))
    } else {
        (None, None)
    };

    Ok(ArnoldiResult {
        ritz_values,
        residuals,
        converged,
        ritz_vectors,
        dim,
        requested_dim: cfg.dim,
        hessenberg,
        breakdown_at,
        restarts,
        orthonormality_defect,
        relation_residual,
    })
}

fn random_orthogonal(basis: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let n = basis[0].len();
    for _ in 0..8 {
        let mut w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for _sweep in 0..2 {
            for v in basis {
                let c = reduce::dot(v, &w);
                reduce::axpy(-c, v, &mut w);
            }
        }
        let norm = reduce::norm2(&w);
        if norm > 1e-8 {
            w.iter_mut().for_each(|x| *x /= norm);
            return Ok(w);
        }
    }
    Err(Error::NoConvergence(basis.len()))
}

fn orthonormality_defect(basis: &[Vec<f64>]) -> f64 {
    let k = basis.len();
    (0..k)
        .into_par_iter()
        .map(|i| {
            (i..k)
                .map(|j| {
                    let target = if i == j { 1.0 } else { 0.0 };
                    (reduce::dot(&basis[i], &basis[j]) - target).abs()
                })
                .fold(0.0, f64::max)
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .fold(0.0, f64::max)
}

fn relation_defect<A: LinearOperator>(
    a: &A,
    basis: &[Vec<f64>],
    hk: &DenseMatrix,
    f: &[f64],
) -> f64 {
    let k = basis.len();
    let n = a.dim();
    let mut worst = 0.0f64;
    for j in 0..k {
        let mut r = vec![0.0; n];
        a.apply(&basis[j], &mut r);
        for i in 0..=j {
            reduce::axpy(-hk[(i, j)], &basis[i], &mut r);
        }
        if j + 1 < k {
            reduce::axpy(-hk[(j + 1, j)], &basis[j + 1], &mut r);
        } else {
            reduce::axpy(-1.0, f, &mut r);
        }
        worst = r.iter().fold(worst, |m, x| m.max(x.abs()));
    }
    worst
}

/// Step curve `(j/N, |λ_j|)` of eigenvalues sorted by descending modulus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegratedSpectrum {
    pub combined: Vec<(f64, f64)>,
    pub core: Vec<(f64, f64)>,
}

/// Merges subspace and core eigenvalues into the integrated curves, with `N`
/// the total node count.
pub fn integrated_spectrum(
    subspaces: &SubspaceSpectrum,
    core: Option<&ArnoldiResult>,
    nodes: usize,
) -> IntegratedSpectrum {
    let core_mods: Vec<f64> =
        core.map(|r| r.ritz_values.iter().map(|z| z.norm()).collect()).unwrap_or_default();
    let mut all: Vec<f64> = subspaces.eigenvalues().map(|z| z.norm()).collect();
    all.extend_from_slice(&core_mods);
    IntegratedSpectrum { combined: step_curve(all, nodes), core: step_curve(core_mods, nodes) }
}

fn step_curve(mut mods: Vec<f64>, nodes: usize) -> Vec<(f64, f64)> {
    mods.sort_by(|a, b| b.total_cmp(a));
    mods.into_iter().enumerate().map(|(j, m)| ((j + 1) as f64 / nodes as f64, m)).collect()
}

/// Eigenvector moduli normalised to unit sum and sorted in decreasing order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigvecProfile {
    /// `|ψ(n)|` at own rank `K_i = 1, 2, ...`.
    pub moduli: Vec<f64>,
    /// Position in the input vector of each entry.
    pub positions: Vec<usize>,
}

pub fn eigvec_profile(psi: &[Complex64]) -> Result<EigvecProfile> {
    let abs: Vec<f64> = psi.iter().map(|z| z.norm()).collect();
    let total: f64 = abs.iter().sum();
    if total.is_nan() || total <= 0.0 || total.is_infinite() {
        return Err(Error::domain("eigenvector profile of a zero or non-finite vector"));
    }
    let mut positions: Vec<usize> = (0..abs.len()).collect();
    positions.sort_by(|&a, &b| abs[b].total_cmp(&abs[a]).then(a.cmp(&b)));
    let moduli = positions.iter().map(|&p| abs[p] / total).collect();
    Ok(EigvecProfile { moduli, positions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::DirectedGraph;
    use crate::subspace::decompose;
    use crate::synth;

    fn stochastic(n: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = DenseMatrix::from_fn(n, n, |_, _| rng.gen::<f64>());
        for j in 0..n {
            let s: f64 = (0..n).map(|i| m[(i, j)]).sum();
            for i in 0..n {
                m[(i, j)] /= s;
            }
        }
        m
    }

    fn oracle(m: &DenseMatrix) -> Vec<Complex64> {
        let n = m.rows();
        let na = nalgebra::DMatrix::from_fn(n, n, |i, j| m[(i, j)]);
        let mut ev: Vec<Complex64> = na.complex_eigenvalues().iter().copied().collect();
        eigen::sort_by_modulus_desc(&mut ev);
        ev
    }

    fn nearest_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
        let mut used = vec![false; b.len()];
        let mut worst = 0.0f64;
        for x in a {
            let (k, d) = b
                .iter()
                .enumerate()
                .filter(|(k, _)| !used[*k])
                .map(|(k, y)| (k, (x - y).norm()))
                .min_by(|p, q| p.1.total_cmp(&q.1))
                .unwrap();
            used[k] = true;
            worst = worst.max(d);
        }
        worst
    }

    #[test]
    fn full_dimension_matches_dense_oracle() {
        let m = stochastic(50, 3);
        let r = arnoldi(&m, &ArnoldiConfig { dim: 50, ..Default::default() }).unwrap();
        assert_eq!(r.dim, 50);
        assert!(nearest_distance(&r.ritz_values, &oracle(&m)) < 1e-10);
        assert!((r.ritz_values[0] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(r.orthonormality_defect.unwrap() < 1e-10);
        assert!(r.relation_residual.unwrap() < 1e-10);
    }

    #[test]
    fn dominant_vector_profile_matches_dense() {
        let m = stochastic(50, 9);
        let cfg = ArnoldiConfig { dim: 50, vectors: vec![0], ..Default::default() };
        let r = arnoldi(&m, &cfg).unwrap();
        let got = eigvec_profile(&r.ritz_vectors[0].1).unwrap();

        // dense oracle: the Perron vector by nalgebra's LU-based solve of
        // (M - I) x = 0 with x_0 = 1
        let n = 50;
        let a = nalgebra::DMatrix::from_fn(n, n, |i, j| {
            if i == 0 {
                if j == 0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                m[(i, j)] - if i == j { 1.0 } else { 0.0 }
            }
        });
        let mut b = nalgebra::DVector::zeros(n);
        b[0] = 1.0;
        let x = a.lu().solve(&b).unwrap();
        let psi: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let want = eigvec_profile(&psi).unwrap();
        for (g, w) in got.moduli.iter().zip(&want.moduli) {
            assert!((g - w).abs() < 1e-9);
        }
        assert_eq!(got.positions, want.positions);
    }

    #[test]
    fn single_isolated_core_node() {
        // 0 -> {1, 2} and 1 <-> 2; with the cutoff at 2 the core is {0}
        // with an empty block
        let g = DirectedGraph::from_edges(3, vec![(0, 1), (0, 2), (1, 2), (2, 1)]).unwrap();
        let d = decompose(g.forward(), 2).unwrap();
        assert_eq!(d.core_nodes(), &[0]);
        let r = arnoldi_core(g.forward(), &d, &ArnoldiConfig::default()).unwrap();
        assert_eq!(r.ritz_values, vec![Complex64::new(0.0, 0.0)]);
        assert_eq!(r.dim, 1);
    }

    #[test]
    fn errors() {
        let g = DirectedGraph::from_edges(2, vec![(0, 1), (1, 0)]).unwrap();
        let d = decompose(g.forward(), 10).unwrap();
        assert!(arnoldi_core(g.forward(), &d, &ArnoldiConfig::default()).is_err());
        let m = stochastic(5, 1);
        assert!(arnoldi(&m, &ArnoldiConfig { dim: 0, ..Default::default() }).is_err());
        let zero = ArnoldiConfig { start: StartVector::Given(vec![0.0; 5]), ..Default::default() };
        assert!(arnoldi(&m, &zero).is_err());
        let short = ArnoldiConfig { start: StartVector::Given(vec![1.0; 4]), ..Default::default() };
        assert!(arnoldi(&m, &short).is_err());
        let far = ArnoldiConfig { vectors: vec![5], ..Default::default() };
        assert!(arnoldi(&m, &far).is_err());
    }

    #[test]
    fn breakdown_stop_and_restart() {
        // identity: the uniform start vector is already invariant
        let id = DenseMatrix::from_fn(6, 6, |i, j| if i == j { 1.0 } else { 0.0 });
        let r = arnoldi(&id, &ArnoldiConfig { dim: 6, ..Default::default() }).unwrap();
        assert_eq!(r.dim, 1);
        assert_eq!(r.breakdown_at, Some(1));
        assert_eq!(r.hessenberg.rows(), 2);
        assert!((r.ritz_values[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);

        let cfg = ArnoldiConfig {
            dim: 6,
            breakdown: Breakdown::Restart { seed: 1 },
            ..Default::default()
        };
        let r = arnoldi(&id, &cfg).unwrap();
        assert_eq!(r.dim, 6);
        assert_eq!(r.restarts, 5);
        for z in &r.ritz_values {
            assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
        assert!(r.orthonormality_defect.unwrap() < 1e-12);
        assert!(r.relation_residual.unwrap() < 1e-12);
    }

    #[test]
    fn core_operator_is_the_projected_block() {
        let g = synth::random_edges(80, 200, 4);
        let d = decompose(g.forward(), 8).unwrap();
        let op = CoreOperator::new(g.forward(), &d).unwrap();
        let block = crate::subspace::dense_block(g.forward(), d.core_nodes());
        let nc = d.core_size();
        let n = g.node_count() as f64;
        let dangling: Vec<usize> = d
            .core_nodes()
            .iter()
            .enumerate()
            .filter(|(_, &i)| g.out_degree(i as usize) == 0)
            .map(|(p, _)| p)
            .collect();
        let x: Vec<f64> = (0..nc).map(|i| (i as f64).sin()).collect();
        let mut y = vec![0.0; nc];
        op.apply(&x, &mut y);
        let mut want = block.matvec(&x);
        let share: f64 = dangling.iter().map(|&p| x[p]).sum::<f64>() / n;
        want.iter_mut().for_each(|w| *w += share);
        for (a, b) in y.iter().zip(&want) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn hessenberg_is_reproducible_across_pools() {
        let g = synth::price_graph(20_000, 3, 1.0, 2);
        let d = decompose(g.forward(), 100).unwrap();
        let cfg = ArnoldiConfig { dim: 20, ..Default::default() };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| arnoldi_core(g.forward(), &d, &cfg).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.hessenberg, b.hessenberg);
        assert_eq!(a.ritz_values, b.ritz_values);
    }

    #[test]
    fn integrated_examples() {
        let two = SubspaceSpectrum {
            blocks: vec![Some(vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)])],
            skipped: vec![],
            unit_modulus: 2,
            unit_value: 1,
        };
        let c = integrated_spectrum(&two, None, 2);
        assert_eq!(c.combined, vec![(0.5, 1.0), (1.0, 1.0)]);
        assert!(c.core.is_empty());

        let one = SubspaceSpectrum {
            blocks: vec![Some(vec![Complex64::new(1.0, 0.0)])],
            skipped: vec![],
            unit_modulus: 1,
            unit_value: 1,
        };
        assert_eq!(integrated_spectrum(&one, None, 1).combined, vec![(1.0, 1.0)]);
    }

    #[test]
    fn profile_examples() {
        let p = eigvec_profile(&[Complex64::new(0.6, 0.0), Complex64::new(0.0, -0.8)]).unwrap();
        assert!((p.moduli[0] - 0.8 / 1.4).abs() < 1e-15);
        assert!((p.moduli[1] - 0.6 / 1.4).abs() < 1e-15);
        assert_eq!(p.positions, vec![1, 0]);

        let flat = eigvec_profile(&[Complex64::new(1.0, 0.0); 4]).unwrap();
        assert_eq!(flat.moduli, vec![0.25; 4]);
        assert_eq!(flat.positions, vec![0, 1, 2, 3]);

        assert!(eigvec_profile(&[Complex64::new(0.0, 0.0); 3]).is_err());
    }
}
