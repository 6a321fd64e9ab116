//! The matrices `S` and `G` as implicit operators.
//!
//! `S` is the adjacency matrix with every non-empty column normalised to one
//! and every empty (dangling) column replaced by `1/N`. The Google matrix is
//! `G = αS + (1-α)/N`. Neither the dangling columns nor the damping term are
//! stored: both are rank-one corrections computed from a scalar sum.
//!
//! Every output component is owned by exactly one worker and accumulates its
//! predecessors in ascending id order, so results are bitwise identical for
//! any thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::GraphView;
use crate::reduce;

const ROW_BLOCK: usize = 4096;

#[derive(Clone, Copy, Debug)]
pub struct GoogleOperator<'a> {
    view: GraphView<'a>,
    alpha: f64,
}

impl<'a> GoogleOperator<'a> {
    pub fn new(view: impl Into<GraphView<'a>>, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::config(format!("damping factor {alpha} is outside (0, 1]")));
        }
        Ok(GoogleOperator { view: view.into(), alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn view(&self) -> GraphView<'a> {
        self.view
    }

    pub fn node_count(&self) -> usize {
        self.view.node_count()
    }

    fn check(&self, v: &[f64], out: &[f64]) -> Result<()> {
        let n = self.node_count();
        for len in [v.len(), out.len()] {
            if len != n {
                return Err(Error::Dimension { expected: n, found: len });
            }
        }
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::domain(format!("component {i} of the input vector is not finite")));
        }
        Ok(())
    }

    /// `out = S v`
    pub fn apply_s_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        self.check(v, out)?;
        self.s_unchecked(v, out, 1.0, 0.0);
        Ok(())
    }

    pub fn apply_s(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; v.len()];
        self.apply_s_into(v, &mut out)?;
        Ok(out)
    }

    /// `out = G v = α S v + (1-α) (Σ v) / N`
    pub fn apply_g_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        self.check(v, out)?;
        self.s_unchecked(v, out, self.alpha, self.teleport(reduce::sum(v)));
        Ok(())
    }

    pub fn apply_g(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; v.len()];
        self.apply_g_into(v, &mut out)?;
        Ok(out)
    }

    /// The damping term `(1-α) (Σ v) / N` for a vector with sum `total`.
    pub(crate) fn teleport(&self, total: f64) -> f64 {
        (1.0 - self.alpha) * total / self.node_count() as f64
    }

    /// `out[i] = scale * (S v)[i] + shift`; with `scale == 1` the result is
    /// exactly `(S v)[i] + shift` (the multiplication is skipped).
    pub(crate) fn s_unchecked(&self, v: &[f64], out: &mut [f64], scale: f64, shift: f64) {
        let view = self.view;
        let n = view.node_count();
        let spread: Vec<f64> = (0..n)
            .into_par_iter()
            .with_min_len(ROW_BLOCK)
            .map(|j| match view.out_degree(j) {
                0 => 0.0,
                d => v[j] / d as f64,
            })
            .collect();
        let dangling_share = reduce::sum_indexed(v, view.dangling_nodes()) / n as f64;

        out.par_chunks_mut(ROW_BLOCK).enumerate().for_each(|(block, rows)| {
            let base = block * ROW_BLOCK;
            for (k, slot) in rows.iter_mut().enumerate() {
                let mut acc = 0.0;
                for &j in view.predecessors(base + k) {
                    acc += spread[j as usize];
                }
                let s = acc + dangling_share;
                *slot = if scale == 1.0 { s + shift } else { scale * s + shift };
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::DirectedGraph;

    fn graph(n: usize, edges: &[(u32, u32)]) -> DirectedGraph {
        DirectedGraph::from_edges(n, edges.to_vec()).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn two_cycle_permutes() {
        let g = graph(2, &[(0, 1), (1, 0)]);
        let op = GoogleOperator::new(&g, 0.85).unwrap();
        assert_eq!(op.apply_s(&[1.0, 0.0]).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn lone_dangling_node() {
        let g = graph(1, &[]);
        let op = GoogleOperator::new(&g, 0.85).unwrap();
        assert_eq!(op.apply_s(&[1.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn chain_s_product() {
        // dense S for 0->1->2 with node 2 dangling:
        //   [0   0 1/3]
        //   [1   0 1/3]
        //   [0   1 1/3]
        let g = graph(3, &[(0, 1), (1, 2)]);
        let op = GoogleOperator::new(&g, 0.85).unwrap();
        let third = 1.0 / 3.0;
        let out = op.apply_s(&[third; 3]).unwrap();
        close(&out, &[1.0 / 9.0, third + 1.0 / 9.0, third + 1.0 / 9.0], 1e-15);
    }

    #[test]
    fn chain_g_product() {
        let g = graph(3, &[(0, 1), (1, 2)]);
        let op = GoogleOperator::new(&g, 0.85).unwrap();
        let third = 1.0 / 3.0;
        let out = op.apply_g(&[third; 3]).unwrap();
        // 0.85 * S v + 0.15 / 3
        let expected = [
            0.85 / 9.0 + 0.05,
            0.85 * (third + 1.0 / 9.0) + 0.05,
            0.85 * (third + 1.0 / 9.0) + 0.05,
        ];
        close(&out, &expected, 1e-15);
        close(&out, &[0.1444, 0.4278, 0.4278], 1e-4);
    }

    #[test]
    fn both_dangling() {
        let g = graph(2, &[]);
        let op = GoogleOperator::new(&g, 0.85).unwrap();
        close(&op.apply_g(&[1.0, 0.0]).unwrap(), &[0.5, 0.5], 1e-16);
    }

    #[test]
    fn undamped_g_is_s() {
        let g = crate::synth::random_digraph(40, 0.1, 9);
        let op = GoogleOperator::new(&g, 1.0).unwrap();
        let v: Vec<f64> = (0..40).map(|i| (i as f64 + 1.0) / 820.0).collect();
        assert_eq!(op.apply_g(&v).unwrap(), op.apply_s(&v).unwrap());
    }

    #[test]
    fn rejects_bad_input() {
        let g = graph(2, &[(0, 1)]);
        assert!(matches!(GoogleOperator::new(&g, 0.0), Err(Error::Config(_))));
        assert!(matches!(GoogleOperator::new(&g, 1.5), Err(Error::Config(_))));
        assert!(matches!(GoogleOperator::new(&g, f64::NAN), Err(Error::Config(_))));
        let op = GoogleOperator::new(&g, 0.85).unwrap();
        assert!(matches!(op.apply_s(&[1.0]), Err(Error::Dimension { expected: 2, found: 1 })));
        assert!(matches!(op.apply_g(&[1.0, f64::NAN]), Err(Error::Domain(_))));
        assert!(matches!(op.apply_s(&[f64::INFINITY, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn inverted_view_matches_inverted_graph() {
        let g = crate::synth::random_digraph(60, 0.05, 2);
        let inv = g.invert();
        let v: Vec<f64> = (0..60).map(|i| ((i * 7) % 13) as f64).collect();
        let a = GoogleOperator::new(g.inverted(), 0.85).unwrap().apply_g(&v).unwrap();
        let b = GoogleOperator::new(&inv, 0.85).unwrap().apply_g(&v).unwrap();
        assert_eq!(a, b);
    }
}
