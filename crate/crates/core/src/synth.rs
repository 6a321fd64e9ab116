//! Seeded synthetic graphs for tests, benchmarks and demos.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{DirectedGraph, NodeId};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Every ordered pair `i != j` is an edge with probability `density`.
pub fn random_digraph(n: usize, density: f64, seed: u64) -> DirectedGraph {
    let mut rng = rng(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen::<f64>() < density {
                edges.push((i as NodeId, j as NodeId));
            }
        }
    }
    DirectedGraph::from_edges(n, edges).expect("valid synthetic graph")
}

/// `m` uniformly drawn edges (duplicates collapse, self-loops possible).
pub fn random_edges(n: usize, m: usize, seed: u64) -> DirectedGraph {
    let mut rng = rng(seed);
    let edges =
        (0..m).map(|_| (rng.gen_range(0..n) as NodeId, rng.gen_range(0..n) as NodeId)).collect();
    DirectedGraph::from_edges(n, edges).expect("valid synthetic graph")
}

/// Price's model of directed preferential attachment.
///
/// Node `t` links to `min(m, t)` distinct older nodes chosen with probability
/// proportional to `in_degree + a`. The in-degree distribution decays as
/// `k^-(2 + a/m)`.
pub fn price_graph(n: usize, m: usize, a: f64, seed: u64) -> DirectedGraph {
    assert!(a > 0.0, "attractiveness must be positive");
    let mut rng = rng(seed);
    let mut urn: Vec<NodeId> = Vec::with_capacity(n * m);
    let mut edges = Vec::with_capacity(n * m);
    let mut picked: Vec<NodeId> = Vec::with_capacity(m);
    for t in 1..n {
        picked.clear();
        let want = m.min(t);
        while picked.len() < want {
            let total = urn.len() as f64 + a * t as f64;
            let u = rng.gen::<f64>() * total;
            let target =
                if u < urn.len() as f64 { urn[u as usize] } else { rng.gen_range(0..t) as NodeId };
            if !picked.contains(&target) {
                picked.push(target);
            }
        }
        for &target in &picked {
            edges.push((t as NodeId, target));
            urn.push(target);
        }
    }
    DirectedGraph::from_edges(n, edges).expect("valid synthetic graph")
}

/// A random background graph with planted closed node sets.
///
/// Background nodes form a path ending in a dangling node plus random extra
/// links, so none of them lies in an invariant subspace. Each planted set is
/// strongly connected internally, never links outside itself and may receive
/// links from the background. Labels are shuffled; the planted sets are
/// returned sorted in the final labelling.
pub fn planted_subspaces(
    background: usize,
    sizes: &[usize],
    density: f64,
    seed: u64,
) -> (DirectedGraph, Vec<Vec<NodeId>>) {
    assert!(background >= 1);
    let mut rng = rng(seed);
    let n = background + sizes.iter().sum::<usize>();
    let mut edges = Vec::new();
    for i in 0..background - 1 {
        edges.push((i, i + 1));
        for j in 0..n {
            if j != i && rng.gen::<f64>() < density {
                edges.push((i, j));
            }
        }
    }
    let mut blocks = Vec::new();
    let mut start = background;
    for &size in sizes {
        let block: Vec<usize> = (start..start + size).collect();
        for k in 0..size {
            edges.push((block[k], block[(k + 1) % size]));
            for l in 0..size {
                if rng.gen::<f64>() < 0.3 {
                    edges.push((block[k], block[l]));
                }
            }
        }
        blocks.push(block);
        start += size;
    }

    let mut label: Vec<NodeId> = (0..n as NodeId).collect();
    label.shuffle(&mut rng);
    let edges = edges.into_iter().map(|(s, d)| (label[s], label[d])).collect();
    let graph = DirectedGraph::from_edges(n, edges).expect("valid synthetic graph");
    let planted = blocks
        .into_iter()
        .map(|b| {
            let mut b: Vec<NodeId> = b.into_iter().map(|i| label[i]).collect();
            b.sort_unstable();
            b
        })
        .collect();
    (graph, planted)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(random_digraph(30, 0.1, 4), random_digraph(30, 0.1, 4));
        assert_eq!(price_graph(500, 3, 1.0, 4), price_graph(500, 3, 1.0, 4));
        assert_ne!(random_edges(30, 60, 1), random_edges(30, 60, 2));
    }

    #[test]
    fn price_graph_shape() {
        let g = price_graph(1000, 4, 1.0, 1);
        assert_eq!(g.dangling_nodes(), &[0]);
        assert!(g.successors(500).len() == 4);
        assert!(g.successors(500).iter().all(|&j| j < 500));
    }

    #[test]
    fn planted_sets_are_closed() {
        let (g, planted) = planted_subspaces(40, &[2, 5, 3], 0.05, 7);
        assert_eq!(g.node_count(), 50);
        for set in &planted {
            for &i in set {
                for j in g.successors(i as usize) {
                    assert!(set.binary_search(j).is_ok());
                }
            }
        }
    }
}
