//! Invariant subspaces of `S` and the core space.
//!
//! A node's closure is everything reachable from it along out-links. If the
//! closure is small and free of dangling nodes it spans a subspace that `S`
//! maps into itself. Overlapping closures are merged; everything else is the
//! core. Ordering subspace nodes first makes `S` block upper triangular:
//!
//! ```text
//!     | S_ss  S_sc |
//! S = |            |
//!     |  0    S_cc |
//! ```

use std::collections::HashSet;
use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::{self, DenseMatrix};
use crate::error::{Error, Result};
use crate::graph::{GraphView, NodeId, Orientation};
use crate::Complex64;

/// Default upper bound on subspace block size for dense diagonalisation.
pub const DEFAULT_DENSE_LIMIT: usize = 4000;

/// Tolerance for counting eigenvalues at `|λ| = 1` and `λ = 1`.
pub const UNIT_TOL: f64 = 1e-10;

/// `min(10^5, N/10)`, at least 1.
pub fn default_max_size(n: usize) -> usize {
    (n / 10).clamp(1, 100_000)
}

/// Result of a single closure search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Closure {
    /// Sorted closure members, seed included.
    Set(Vec<NodeId>),
    Overflow,
}

/// Breadth-first closure of `seed` under out-links.
///
/// Overflows once more than `max_size` nodes are collected or when a dangling
/// node is reached.
pub fn node_closure(view: GraphView<'_>, seed: NodeId, max_size: usize) -> Closure {
    let dangling = dangling_mask(view);
    closure_with(view, seed, max_size.max(1), &|j| dangling[j as usize])
}

fn dangling_mask(view: GraphView<'_>) -> Vec<bool> {
    let mut mask = vec![false; view.node_count()];
    for &d in view.dangling_nodes() {
        mask[d as usize] = true;
    }
    mask
}

fn closure_with(
    view: GraphView<'_>,
    seed: NodeId,
    max_size: usize,
    overflows: &dyn Fn(NodeId) -> bool,
) -> Closure {
    if overflows(seed) {
        return Closure::Overflow;
    }
    let mut seen = HashSet::new();
    seen.insert(seed);
    let mut order = vec![seed];
    let mut head = 0;
    while head < order.len() {
        let i = order[head];
        head += 1;
        for &j in view.successors(i as usize) {
            if seen.insert(j) {
                if overflows(j) || order.len() == max_size {
                    return Closure::Overflow;
                }
                order.push(j);
            }
        }
    }
    order.sort_unstable();
    Closure::Set(order)
}

/// Partition of the nodes into invariant subspaces and the core.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceDecomposition {
    pub orientation: Orientation,
    pub max_size: usize,
    nodes: usize,
    /// Sorted member lists, ordered by smallest member.
    subspaces: Vec<Vec<NodeId>>,
    core: Vec<NodeId>,
}

/// Marker in [`SubspaceDecomposition::labels`] for core nodes.
pub const CORE_LABEL: u32 = u32::MAX;

impl SubspaceDecomposition {
    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn subspaces(&self) -> &[Vec<NodeId>] {
        &self.subspaces
    }

    pub fn subspace_count(&self) -> usize {
        self.subspaces.len()
    }

    pub fn dimensions(&self) -> Vec<usize> {
        self.subspaces.iter().map(Vec::len).collect()
    }

    /// `N_s`.
    pub fn subspace_node_count(&self) -> usize {
        self.subspaces.iter().map(Vec::len).sum()
    }

    pub fn core_nodes(&self) -> &[NodeId] {
        &self.core
    }

    /// `N_c`.
    pub fn core_size(&self) -> usize {
        self.core.len()
    }

    /// Subspace index of every node, [`CORE_LABEL`] for core nodes.
    pub fn labels(&self) -> Vec<u32> {
        let mut labels = vec![CORE_LABEL; self.nodes];
        for (k, set) in self.subspaces.iter().enumerate() {
            for &i in set {
                labels[i as usize] = k as u32;
            }
        }
        labels
    }

    /// New position to original node: subspaces in order, then the core.
    pub fn permutation(&self) -> Vec<NodeId> {
        let mut p = Vec::with_capacity(self.nodes);
        for set in &self.subspaces {
            p.extend_from_slice(set);
        }
        p.extend_from_slice(&self.core);
        p
    }

    /// Checks that the stored sets partition `0..N` with sorted, non-empty
    /// subspaces. Useful after deserialising.
    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.nodes];
        let sets = self.subspaces.iter().chain(std::iter::once(&self.core));
        for (k, set) in sets.enumerate() {
            if k < self.subspaces.len() && set.is_empty() {
                return Err(Error::Corrupt(format!("subspace {k} is empty")));
            }
            if set.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Corrupt(format!("node set {k} is not strictly increasing")));
            }
            for &i in set {
                let slot = seen.get_mut(i as usize).ok_or_else(|| {
                    Error::Corrupt(format!("node {i} is out of range for {} nodes", self.nodes))
                })?;
                if *slot {
                    return Err(Error::Corrupt(format!("node {i} appears twice")));
                }
                *slot = true;
            }
        }
        if let Some(i) = seen.iter().position(|&s| !s) {
            return Err(Error::Corrupt(format!("node {i} is in no set")));
        }
        Ok(())
    }

    /// Edges leaving a subspace, as `(source, target)`. Empty for a valid
    /// decomposition of the same view.
    pub fn leaking_edges(&self, view: GraphView<'_>) -> Vec<(NodeId, NodeId)> {
        let labels = self.labels();
        let mut bad = Vec::new();
        for (k, set) in self.subspaces.iter().enumerate() {
            for &i in set {
                for &j in view.successors(i as usize) {
                    if labels[j as usize] != k as u32 {
                        bad.push((i, j));
                    }
                }
            }
        }
        bad
    }

    /// Summary for export. Member lists are kept for subspaces of at most
    /// `members_up_to` nodes.
    pub fn summary(&self, members_up_to: Option<usize>) -> DecompositionSummary {
        let limit = members_up_to.unwrap_or(usize::MAX);
        DecompositionSummary {
            orientation: self.orientation,
            nodes: self.nodes,
            max_size: self.max_size,
            subspace_count: self.subspaces.len(),
            subspace_nodes: self.subspace_node_count(),
            core_size: self.core.len(),
            max_dimension: self.subspaces.iter().map(Vec::len).max().unwrap_or(0),
            dimensions: self.dimensions(),
            members: self.subspaces.iter().map(|s| (s.len() <= limit).then(|| s.clone())).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSummary {
    pub orientation: Orientation,
    pub nodes: usize,
    pub max_size: usize,
    pub subspace_count: usize,
    pub subspace_nodes: usize,
    pub core_size: usize,
    pub max_dimension: usize,
    pub dimensions: Vec<usize>,
    pub members: Vec<Option<Vec<NodeId>>>,
}

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n as u32).collect() }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        let mut root = x;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        while self.parent[x as usize] != root {
            let next = self.parent[x as usize];
            self.parent[x as usize] = root;
            x = next;
        }
        root
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins, which keeps the structure independent of order
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Splits the nodes of `view` into merged invariant subspaces and the core.
pub fn decompose(view: GraphView<'_>, max_size: usize) -> Result<SubspaceDecomposition> {
    if max_size == 0 {
        return Err(Error::config("max_size must be at least 1"));
    }
    let n = view.node_count();

    // Anything that can reach a dangling node is core.
    let overflow: Vec<AtomicBool> = (0..n).map(|_| AtomicBool::new(false)).collect();
    let mut queue: Vec<NodeId> = view.dangling_nodes().to_vec();
    for &d in &queue {
        overflow[d as usize].store(true, Ordering::Relaxed);
    }
    let mut head = 0;
    while head < queue.len() {
        let j = queue[head];
        head += 1;
        for &i in view.predecessors(j as usize) {
            if !overflow[i as usize].swap(true, Ordering::Relaxed) {
                queue.push(i);
            }
        }
    }
    drop(queue);

    // Nodes inside a fitting closure need no search of their own: their
    // closure is a subset and merges into the same subspace.
    let covered: Vec<AtomicBool> = (0..n).map(|_| AtomicBool::new(false)).collect();
    let is_overflow = |j: NodeId| overflow[j as usize].load(Ordering::Relaxed);
    let closures: Vec<Vec<NodeId>> = (0..n as NodeId)
        .into_par_iter()
        .filter_map(|seed| {
            if is_overflow(seed) || covered[seed as usize].load(Ordering::Relaxed) {
                return None;
            }
            match closure_with(view, seed, max_size, &is_overflow) {
                Closure::Set(set) => {
                    for &i in &set {
                        if i != seed {
                            covered[i as usize].store(true, Ordering::Relaxed);
                        }
                    }
                    Some(set)
                }
                Closure::Overflow => {
                    overflow[seed as usize].store(true, Ordering::Relaxed);
                    None
                }
            }
        })
        .collect();

    let mut uf = UnionFind::new(n);
    let mut member = vec![false; n];
    for set in &closures {
        for &i in set {
            member[i as usize] = true;
            uf.union(set[0], i);
        }
    }
    drop(closures);

    let mut slot = vec![u32::MAX; n];
    let mut subspaces: Vec<Vec<NodeId>> = Vec::new();
    let mut core = Vec::new();
    for i in 0..n as NodeId {
        if !member[i as usize] {
            core.push(i);
            continue;
        }
        let root = uf.find(i) as usize;
        if slot[root] == u32::MAX {
            slot[root] = subspaces.len() as u32;
            subspaces.push(Vec::new());
        }
        subspaces[slot[root] as usize].push(i);
    }
    Ok(SubspaceDecomposition {
        orientation: view.orientation(),
        max_size,
        nodes: n,
        subspaces,
        core,
    })
}

/// Dense diagonal block of `S` on the sorted node set `nodes`.
///
/// Entry `(a, b)` is `1 / outdeg(nodes[b])` if `nodes[b]` links to `nodes[a]`.
/// Links leaving the set are dropped, so for a core set this is `S_cc`.
pub fn dense_block(view: GraphView<'_>, nodes: &[NodeId]) -> DenseMatrix {
    let d = nodes.len();
    let mut m = DenseMatrix::zeros(d, d);
    for (b, &j) in nodes.iter().enumerate() {
        let succ = view.successors(j as usize);
        if succ.is_empty() {
            continue;
        }
        let w = 1.0 / succ.len() as f64;
        for &i in succ {
            if let Ok(a) = nodes.binary_search(&i) {
                m[(a, b)] = w;
            }
        }
    }
    m
}

/// Exact spectra of the subspace blocks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubspaceSpectrum {
    /// Eigenvalues per subspace, sorted by descending modulus. `None` marks a
    /// block above the dense limit.
    pub blocks: Vec<Option<Vec<Complex64>>>,
    /// Indices of skipped blocks.
    pub skipped: Vec<usize>,
    pub unit_modulus: usize,
    pub unit_value: usize,
}

impl SubspaceSpectrum {
    /// All computed eigenvalues, block by block.
    pub fn eigenvalues(&self) -> impl Iterator<Item = Complex64> + '_ {
        self.blocks.iter().flatten().flatten().copied()
    }

    pub fn eigenvalue_count(&self) -> usize {
        self.blocks.iter().flatten().map(Vec::len).sum()
    }
}

/// Diagonalises every subspace block with at most `dense_limit` nodes.
pub fn subspace_spectrum(
    view: GraphView<'_>,
    decomp: &SubspaceDecomposition,
    dense_limit: usize,
) -> Result<SubspaceSpectrum> {
    if decomp.node_count() != view.node_count() {
        return Err(Error::Dimension { expected: view.node_count(), found: decomp.node_count() });
    }
    let blocks: Vec<Option<Vec<Complex64>>> = decomp
        .subspaces()
        .par_iter()
        .map(|set| {
            if set.len() > dense_limit {
                return Ok(None);
            }
            let mut ev = eigen::eigenvalues(&dense_block(view, set))?;
            eigen::sort_by_modulus_desc(&mut ev);
            Ok(Some(ev))
        })
        .collect::<Result<_>>()?;
    let skipped = blocks.iter().enumerate().filter(|(_, b)| b.is_none()).map(|(k, _)| k).collect();
    let mut unit_modulus = 0;
    let mut unit_value = 0;
    for z in blocks.iter().flatten().flatten() {
        if (z.norm() - 1.0).abs() < UNIT_TOL {
            unit_modulus += 1;
        }
        if (z - Complex64::new(1.0, 0.0)).norm() < UNIT_TOL {
            unit_value += 1;
        }
    }
    Ok(SubspaceSpectrum { blocks, skipped, unit_modulus, unit_value })
}
