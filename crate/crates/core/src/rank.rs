//! PageRank and CheiRank by power iteration.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, GraphView, NodeId, Orientation};
use crate::operator::GoogleOperator;
use crate::reduce;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankConfig {
    pub alpha: f64,
    /// Stop once the 1-norm of an update drops below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for RankConfig {
    fn default() -> Self {
        RankConfig { alpha: crate::DEFAULT_ALPHA, tol: 1e-12, max_iter: 1000 }
    }
}

impl RankConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!("damping factor {} is outside (0, 1)", self.alpha)));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::config(format!("tolerance {} must be positive", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::config("max_iter must be at least 1"));
        }
        Ok(())
    }
}

/// A stationary probability vector together with its rank order.
///
/// Ranks are 1-based: the most probable node has rank 1. Equal
/// probabilities are ordered by ascending node id.
#[derive(Clone, Debug, PartialEq)]
pub struct RankVector {
    probabilities: Vec<f64>,
    rank_of_node: Vec<u32>,
    node_at_rank: Vec<NodeId>,
    pub orientation: Orientation,
    pub alpha: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub iterations: usize,
    /// 1-norm of the last update.
    pub residual: f64,
    pub converged: bool,
}

impl RankVector {
    /// Wraps an arbitrary probability vector; iteration metadata is zeroed.
    pub fn from_probabilities(probabilities: Vec<f64>) -> Result<Self> {
        let (rank_of_node, node_at_rank) = rank_indices(&probabilities)?;
        Ok(RankVector {
            probabilities,
            rank_of_node,
            node_at_rank,
            orientation: Orientation::Forward,
            alpha: f64::NAN,
            tol: f64::NAN,
            max_iter: 0,
            iterations: 0,
            residual: 0.0,
            converged: true,
        })
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// `K(i)` for every node, 1-based.
    pub fn rank_of_node(&self) -> &[u32] {
        &self.rank_of_node
    }

    /// Entry `k - 1` is the node with rank `k`.
    pub fn node_at_rank(&self) -> &[NodeId] {
        &self.node_at_rank
    }

    pub fn rank_of(&self, node: NodeId) -> u32 {
        self.rank_of_node[node as usize]
    }

    pub fn node_at(&self, rank: u32) -> NodeId {
        self.node_at_rank[rank as usize - 1]
    }

    /// Probabilities in decreasing order, `P(K)` for `K = 1..=N`.
    pub fn sorted_probabilities(&self) -> Vec<f64> {
        self.node_at_rank.iter().map(|&i| self.probabilities[i as usize]).collect()
    }

    /// Upper bound on `||G P - P||_1`.
    ///
    /// The last update `P - v` has zero sum, and `G` contracts such vectors
    /// by `α` in the 1-norm, so the bound is `α · residual`. This is well
    /// inside `tol (1+α)/(1-α)` for converged runs.
    pub fn fixed_point_bound(&self) -> f64 {
        self.alpha * self.residual
    }
}

/// PageRank: the `λ = 1` right eigenvector of `G`.
pub fn pagerank(g: &DirectedGraph, cfg: &RankConfig) -> Result<RankVector> {
    power_iteration(g.forward(), cfg)
}

/// CheiRank: PageRank of the network with inverted links.
pub fn cheirank(g: &DirectedGraph, cfg: &RankConfig) -> Result<RankVector> {
    power_iteration(g.inverted(), cfg)
}

/// Iterates `v <- G v` from the uniform vector.
///
/// Hitting `max_iter` is not an error: the best vector is returned with
/// `converged == false`.
pub fn power_iteration(view: GraphView<'_>, cfg: &RankConfig) -> Result<RankVector> {
    cfg.validate()?;
    let op = GoogleOperator::new(view, cfg.alpha)?;
    let n = view.node_count();
    let mut v = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];

    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        op.s_unchecked(&v, &mut next, cfg.alpha, op.teleport(reduce::sum(&v)));
        iterations += 1;
        residual = reduce::l1_distance(&next, &v);
        std::mem::swap(&mut v, &mut next);
        if residual < cfg.tol {
            converged = true;
            break;
        }
    }

    let total = reduce::sum(&v);
    if total != 1.0 {
        v.par_iter_mut().for_each(|p| *p /= total);
    }
    let (rank_of_node, node_at_rank) = rank_indices(&v)?;
    Ok(RankVector {
        probabilities: v,
        rank_of_node,
        node_at_rank,
        orientation: view.orientation(),
        alpha: cfg.alpha,
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        iterations,
        residual,
        converged,
    })
}

/// Stable descending order of `p`, ties by ascending node id.
///
/// Returns `(rank_of_node, node_at_rank)` with 1-based ranks.
pub fn rank_indices(p: &[f64]) -> Result<(Vec<u32>, Vec<NodeId>)> {
    if p.len() > NodeId::MAX as usize {
        return Err(Error::config("vector too long for u32 node ids"));
    }
    if let Some(i) = p.iter().position(|x| x.is_nan()) {
        return Err(Error::domain(format!("component {i} is NaN")));
    }
    let mut order: Vec<NodeId> = (0..p.len() as NodeId).collect();
    order.par_sort_by(|&a, &b| {
        p[b as usize].partial_cmp(&p[a as usize]).expect("NaN excluded above").then(a.cmp(&b))
    });
    let mut rank = vec![0u32; p.len()];
    for (k, &node) in order.iter().enumerate() {
        rank[node as usize] = k as u32 + 1;
    }
    Ok((rank, order))
}

/// A run of consecutive ranks sharing one bitwise-identical probability.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Plateau {
    pub probability: f64,
    pub first_rank: u32,
    pub last_rank: u32,
    pub multiplicity: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PlateauReport {
    pub plateaus: Vec<Plateau>,
}

impl PlateauReport {
    pub fn first(&self) -> Option<&Plateau> {
        self.plateaus.first()
    }
}

/// Maximal runs of equal probability in rank order. Multiplicities below 2
/// are never reported.
pub fn find_plateaus(rv: &RankVector, min_multiplicity: usize) -> PlateauReport {
    let min = min_multiplicity.max(2);
    let sorted = rv.sorted_probabilities();
    let mut plateaus = Vec::new();
    let mut start = 0;
    while start < sorted.len() {
        let bits = sorted[start].to_bits();
        let mut end = start + 1;
        while end < sorted.len() && sorted[end].to_bits() == bits {
            end += 1;
        }
        if end - start >= min {
            plateaus.push(Plateau {
                probability: sorted[start],
                first_rank: start as u32 + 1,
                last_rank: end as u32,
                multiplicity: (end - start) as u32,
            });
        }
        start = end;
    }
    PlateauReport { plateaus }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: &[(u32, u32)]) -> DirectedGraph {
        DirectedGraph::from_edges(n, edges.to_vec()).unwrap()
    }

    /// Solves `(I - α S) P = (1-α)/N` by Gaussian elimination on the dense matrix.
    fn dense_pagerank(g: &DirectedGraph, alpha: f64) -> Vec<f64> {
        let n = g.node_count();
        let mut a = vec![vec![0.0; n + 1]; n];
        for j in 0..n {
            let d = g.out_degree(j);
            for (i, row) in a.iter_mut().enumerate() {
                let s = if d == 0 {
                    1.0 / n as f64
                } else if g.successors(j).contains(&(i as u32)) {
                    1.0 / d as f64
                } else {
                    0.0
                };
                row[j] = if i == j { 1.0 } else { 0.0 } - alpha * s;
            }
        }
        for row in a.iter_mut() {
            row[n] = (1.0 - alpha) / n as f64;
        }
        for c in 0..n {
            let p = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap();
            a.swap(c, p);
            for r in 0..n {
                if r != c {
                    let f = a[r][c] / a[c][c];
                    let pivot = a[c].clone();
                    for (v, pv) in a[r].iter_mut().zip(&pivot).skip(c) {
                        *v -= f * pv;
                    }
                }
            }
        }
        let x: Vec<f64> = (0..n).map(|i| a[i][n] / a[i][i]).collect();
        let s: f64 = x.iter().sum();
        x.iter().map(|v| v / s).collect()
    }

    #[test]
    fn two_cycle_is_uniform() {
        let g = graph(2, &[(0, 1), (1, 0)]);
        let rv = pagerank(&g, &RankConfig::default()).unwrap();
        assert!(rv.converged);
        assert_eq!(rv.probabilities(), &[0.5, 0.5]);
        assert_eq!(rv.rank_of_node(), &[1, 2]);
        let cr = cheirank(&g, &RankConfig::default()).unwrap();
        assert_eq!(cr.probabilities(), &[0.5, 0.5]);
    }

    #[test]
    fn chain_matches_dense_fixed_point() {
        let g = graph(3, &[(0, 1), (1, 2)]);
        let oracle = dense_pagerank(&g, 0.85);
        let rv = pagerank(&g, &RankConfig::default()).unwrap();
        for (p, q) in rv.probabilities().iter().zip(&oracle) {
            assert!((p - q).abs() < 1e-12);
        }
        for (p, q) in rv.probabilities().iter().zip([0.1844, 0.3412, 0.4744]) {
            assert!((p - q).abs() < 5e-5, "{:?}", rv.probabilities());
        }
        assert_eq!(rv.rank_of_node(), &[3, 2, 1]);

        let cr = cheirank(&g, &RankConfig::default()).unwrap();
        for (p, q) in cr.probabilities().iter().zip([0.4744, 0.3412, 0.1844]) {
            assert!((p - q).abs() < 5e-5);
        }
        assert_eq!(cr, {
            let mut expected = pagerank(&g.invert(), &RankConfig::default()).unwrap();
            expected.orientation = Orientation::Inverted;
            expected
        });
    }

    #[test]
    fn random_graphs_match_dense_solve() {
        for seed in 0..8 {
            let g = crate::synth::random_digraph(30 + 10 * seed as usize, 0.08, seed);
            let oracle = dense_pagerank(&g, 0.85);
            let rv = pagerank(&g, &RankConfig::default()).unwrap();
            assert!(rv.converged);
            let op = GoogleOperator::new(&g, 0.85).unwrap();
            let gp = op.apply_g(rv.probabilities()).unwrap();
            let defect: f64 = gp.iter().zip(rv.probabilities()).map(|(a, b)| (a - b).abs()).sum();
            assert!(defect < 10.0 * rv.tol);
            assert!(defect <= rv.fixed_point_bound() + 1e-15);
            for (p, q) in rv.probabilities().iter().zip(&oracle) {
                assert!((p - q).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn non_convergence_is_reported() {
        let g = crate::synth::random_digraph(50, 0.1, 1);
        let cfg = RankConfig { max_iter: 2, ..RankConfig::default() };
        let rv = pagerank(&g, &cfg).unwrap();
        assert!(!rv.converged);
        assert_eq!(rv.iterations, 2);
        let total: f64 = rv.probabilities().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let g = graph(2, &[(0, 1)]);
        for cfg in [
            RankConfig { alpha: 1.0, ..RankConfig::default() },
            RankConfig { alpha: 0.0, ..RankConfig::default() },
            RankConfig { tol: 0.0, ..RankConfig::default() },
            RankConfig { max_iter: 0, ..RankConfig::default() },
        ] {
            assert!(matches!(pagerank(&g, &cfg), Err(Error::Config(_))));
        }
    }

    #[test]
    fn rank_indices_examples() {
        let (rank, order) = rank_indices(&[0.2, 0.5, 0.3]).unwrap();
        assert_eq!(order, vec![1, 2, 0]);
        assert_eq!(rank, vec![3, 1, 2]);
        let (_, order) = rank_indices(&[0.4, 0.4, 0.2]).unwrap();
        assert_eq!(order, vec![0, 1, 2]);
        assert!(matches!(rank_indices(&[0.1, f64::NAN]), Err(Error::Domain(_))));
    }

    #[test]
    fn plateaus() {
        let rv = RankVector::from_probabilities(vec![0.25; 4]).unwrap();
        let report = find_plateaus(&rv, 2);
        assert_eq!(
            report.plateaus,
            vec![Plateau { probability: 0.25, first_rank: 1, last_rank: 4, multiplicity: 4 }]
        );

        let rv = RankVector::from_probabilities(vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        assert!(find_plateaus(&rv, 2).plateaus.is_empty());

        let rv = RankVector::from_probabilities(vec![0.1, 0.3, 0.1, 0.3, 0.2, 0.1]).unwrap();
        let report = find_plateaus(&rv, 2);
        assert_eq!(report.plateaus.len(), 2);
        assert_eq!((report.plateaus[0].first_rank, report.plateaus[0].last_rank), (1, 2));
        assert_eq!((report.plateaus[1].first_rank, report.plateaus[1].last_rank), (4, 6));
        assert_eq!(find_plateaus(&rv, 3).plateaus.len(), 1);
    }

    #[test]
    fn symmetric_nodes_form_plateau() {
        // nodes 1..=4 are interchangeable leaves of a star with back links
        let edges: Vec<(u32, u32)> = (1..=4).flat_map(|j| [(0, j), (j, 0)]).collect();
        let g = graph(5, &edges);
        let rv = pagerank(&g, &RankConfig::default()).unwrap();
        let report = find_plateaus(&rv, 2);
        assert_eq!(report.plateaus.len(), 1);
        assert_eq!(report.plateaus[0].first_rank, 2);
        assert_eq!(report.plateaus[0].multiplicity, 4);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn rank_permutations_are_inverse(p in proptest::collection::vec(0.0f64..1.0, 1..300)) {
                let (rank, order) = rank_indices(&p).unwrap();
                for (k, &node) in order.iter().enumerate() {
                    prop_assert_eq!(rank[node as usize] as usize, k + 1);
                }
                for w in order.windows(2) {
                    let (a, b) = (w[0] as usize, w[1] as usize);
                    prop_assert!(p[a] > p[b] || (p[a] == p[b] && a < b));
                }
            }

            #[test]
            fn plateaus_are_disjoint_runs(raw in proptest::collection::vec(0u8..6, 1..200)) {
                let p: Vec<f64> = raw.iter().map(|&x| x as f64 / 8.0).collect();
                let rv = RankVector::from_probabilities(p).unwrap();
                let report = find_plateaus(&rv, 2);
                let sorted = rv.sorted_probabilities();
                let mut last = 0;
                for pl in &report.plateaus {
                    prop_assert!(pl.multiplicity >= 2);
                    prop_assert!(pl.first_rank > last);
                    last = pl.last_rank;
                    for k in pl.first_rank..=pl.last_rank {
                        prop_assert_eq!(sorted[k as usize - 1].to_bits(), pl.probability.to_bits());
                    }
                }
            }
        }
    }
}
