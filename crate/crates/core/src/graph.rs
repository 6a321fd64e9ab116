//! Immutable directed graphs in compressed sparse row form.
//!
//! A [`DirectedGraph`] keeps the out-adjacency and the in-adjacency side by
//! side so that the link-inverted network (used for CheiRank) is available
//! without a second pass over the input. Node ids are dense in `0..N` and are
//! stored as `u32`; offsets are `u64` so edge counts beyond `2^32` are fine.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = u32;

/// One orientation of the adjacency structure.
///
/// Row `i` lists the neighbours of `i` in strictly increasing order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Csr {
    offsets: Vec<u64>,
    indices: Vec<NodeId>,
}

impl Csr {
    pub(crate) fn from_parts(offsets: Vec<u64>, indices: Vec<NodeId>) -> Self {
        Csr { offsets, indices }
    }

    /// Builds rows from edges already sorted by `(row, col)` with no duplicates.
    fn from_sorted_edges(n: usize, edges: &[(NodeId, NodeId)]) -> Self {
        let mut offsets = vec![0u64; n + 1];
        for &(src, _) in edges {
            offsets[src as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let indices = edges.iter().map(|&(_, dst)| dst).collect();
        Csr { offsets, indices }
    }

    fn transpose(&self) -> Csr {
        let n = self.rows();
        let mut offsets = vec![0u64; n + 1];
        for &j in &self.indices {
            offsets[j as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut cursor: Vec<u64> = offsets[..n].to_vec();
        let mut indices = vec![0 as NodeId; self.indices.len()];
        // rows are visited in ascending order, so every transposed row comes out sorted
        for i in 0..n {
            for &j in self.row(i) {
                let slot = &mut cursor[j as usize];
                indices[*slot as usize] = i as NodeId;
                *slot += 1;
            }
        }
        Csr { offsets, indices }
    }

    pub fn rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[NodeId] {
        let lo = self.offsets[i] as usize;
        let hi = self.offsets[i + 1] as usize;
        &self.indices[lo..hi]
    }

    #[inline]
    pub fn degree(&self, i: usize) -> usize {
        (self.offsets[i + 1] - self.offsets[i]) as usize
    }

    pub fn offsets(&self) -> &[u64] {
        &self.offsets
    }

    pub fn indices(&self) -> &[NodeId] {
        &self.indices
    }

    fn empty_rows(&self) -> Vec<NodeId> {
        (0..self.rows()).filter(|&i| self.degree(i) == 0).map(|i| i as NodeId).collect()
    }

    /// Checks the structural invariants of a row layout of `n` rows.
    pub(crate) fn validate(&self, n: usize) -> std::result::Result<(), String> {
        if self.offsets.len() != n + 1 {
            return Err(format!("expected {} offsets, found {}", n + 1, self.offsets.len()));
        }
        if self.offsets[0] != 0 || *self.offsets.last().unwrap() as usize != self.indices.len() {
            return Err("offsets do not span the index array".into());
        }
        for i in 0..n {
            if self.offsets[i] > self.offsets[i + 1] {
                return Err(format!("offsets decrease at row {i}"));
            }
            let row = self.row(i);
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(format!("row {i} is not strictly increasing"));
            }
            if row.last().is_some_and(|&j| j as usize >= n) {
                return Err(format!("row {i} references a node >= {n}"));
            }
        }
        Ok(())
    }
}

/// Direction in which links are followed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// Links as given: the matrices `S` and `G`.
    #[default]
    Forward,
    /// Links reversed: the matrices `S*` and `G*`.
    Inverted,
}

impl Orientation {
    pub fn flip(self) -> Self {
        match self {
            Orientation::Forward => Orientation::Inverted,
            Orientation::Inverted => Orientation::Forward,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DirectedGraph {
    out: Csr,
    inc: Csr,
    /// Nodes with zero out-degree.
    dangling: Vec<NodeId>,
    /// Nodes with zero in-degree (the dangling nodes of the inverted graph).
    sources: Vec<NodeId>,
}

impl DirectedGraph {
    /// Builds a graph on `n` nodes. Duplicate edges collapse; self-loops stay.
    pub fn from_edges(n: usize, mut edges: Vec<(NodeId, NodeId)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        if n > NodeId::MAX as usize {
            return Err(Error::config(format!("{n} nodes exceed the u32 id space")));
        }
        if let Some(&(s, d)) = edges.iter().find(|&&(s, d)| s as usize >= n || d as usize >= n) {
            return Err(Error::domain(format!("edge {s}->{d} references a node >= {n}")));
        }
        edges.par_sort_unstable();
        edges.dedup();
        let out = Csr::from_sorted_edges(n, &edges);
        drop(edges);
        Ok(Self::from_out_csr(out))
    }

    fn from_out_csr(out: Csr) -> Self {
        let inc = out.transpose();
        DirectedGraph { dangling: out.empty_rows(), sources: inc.empty_rows(), out, inc }
    }

    /// Reassembles a graph from both row layouts, checking every invariant.
    pub(crate) fn from_csr_pair(n: usize, out: Csr, inc: Csr) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        out.validate(n).map_err(Error::Corrupt)?;
        inc.validate(n).map_err(Error::Corrupt)?;
        if out.nnz() != inc.nnz() || out.transpose() != inc {
            return Err(Error::Corrupt(
                "in-adjacency is not the transpose of out-adjacency".into(),
            ));
        }
        Ok(DirectedGraph { dangling: out.empty_rows(), sources: inc.empty_rows(), out, inc })
    }

    pub fn node_count(&self) -> usize {
        self.out.rows()
    }

    pub fn edge_count(&self) -> usize {
        self.out.nnz()
    }

    #[inline]
    pub fn successors(&self, i: usize) -> &[NodeId] {
        self.out.row(i)
    }

    #[inline]
    pub fn predecessors(&self, i: usize) -> &[NodeId] {
        self.inc.row(i)
    }

    #[inline]
    pub fn out_degree(&self, i: usize) -> usize {
        self.out.degree(i)
    }

    #[inline]
    pub fn in_degree(&self, i: usize) -> usize {
        self.inc.degree(i)
    }

    /// Nodes with zero out-degree, ascending.
    pub fn dangling_nodes(&self) -> &[NodeId] {
        &self.dangling
    }

    pub fn out_csr(&self) -> &Csr {
        &self.out
    }

    pub fn in_csr(&self) -> &Csr {
        &self.inc
    }

    /// Edges `(src, dst)` in ascending `(src, dst)` order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.node_count())
            .flat_map(move |i| self.successors(i).iter().map(move |&j| (i as NodeId, j)))
    }

    /// The graph with every link reversed (`A_ij -> A_ji`).
    pub fn invert(&self) -> DirectedGraph {
        DirectedGraph {
            out: self.inc.clone(),
            inc: self.out.clone(),
            dangling: self.sources.clone(),
            sources: self.dangling.clone(),
        }
    }

    pub fn view(&self, orientation: Orientation) -> GraphView<'_> {
        GraphView { graph: self, orientation }
    }

    pub fn forward(&self) -> GraphView<'_> {
        self.view(Orientation::Forward)
    }

    pub fn inverted(&self) -> GraphView<'_> {
        self.view(Orientation::Inverted)
    }

    pub fn degree_stats(&self) -> GraphStats {
        self.forward().degree_stats()
    }

    /// Writes the canonical `src dst` edge list.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# nodes {} edges {}", self.node_count(), self.edge_count())?;
        for (s, d) in self.edges() {
            writeln!(w, "{s} {d}")?;
        }
        Ok(())
    }
}

/// A graph seen in one orientation, without copying it.
#[derive(Clone, Copy, Debug)]
pub struct GraphView<'a> {
    graph: &'a DirectedGraph,
    orientation: Orientation,
}

impl<'a> GraphView<'a> {
    pub fn graph(&self) -> &'a DirectedGraph {
        self.graph
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn edge_count(&self) -> usize {
        self.graph.edge_count()
    }

    #[inline]
    pub fn successors(&self, i: usize) -> &'a [NodeId] {
        match self.orientation {
            Orientation::Forward => self.graph.out.row(i),
            Orientation::Inverted => self.graph.inc.row(i),
        }
    }

    #[inline]
    pub fn predecessors(&self, i: usize) -> &'a [NodeId] {
        match self.orientation {
            Orientation::Forward => self.graph.inc.row(i),
            Orientation::Inverted => self.graph.out.row(i),
        }
    }

    #[inline]
    pub fn out_degree(&self, i: usize) -> usize {
        self.successors(i).len()
    }

    #[inline]
    pub fn in_degree(&self, i: usize) -> usize {
        self.predecessors(i).len()
    }

    /// Nodes without successors in this orientation, ascending.
    pub fn dangling_nodes(&self) -> &'a [NodeId] {
        match self.orientation {
            Orientation::Forward => &self.graph.dangling,
            Orientation::Inverted => &self.graph.sources,
        }
    }

    pub fn degree_stats(&self) -> GraphStats {
        let n = self.node_count();
        let mut out_hist = BTreeMap::new();
        let mut in_hist = BTreeMap::new();
        for i in 0..n {
            *out_hist.entry(self.out_degree(i) as u64).or_insert(0) += 1;
            *in_hist.entry(self.in_degree(i) as u64).or_insert(0) += 1;
        }
        GraphStats {
            nodes: n as u64,
            edges: self.edge_count() as u64,
            links_per_node: self.edge_count() as f64 / n as f64,
            dangling_count: self.dangling_nodes().len() as u64,
            in_degree_histogram: in_hist,
            out_degree_histogram: out_hist,
        }
    }
}

impl<'a> From<&'a DirectedGraph> for GraphView<'a> {
    fn from(graph: &'a DirectedGraph) -> Self {
        graph.forward()
    }
}

/// Size and degree statistics of a graph.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GraphStats {
    pub nodes: u64,
    pub edges: u64,
    /// `xi_l = N_l / N`.
    pub links_per_node: f64,
    pub dangling_count: u64,
    /// degree -> number of nodes with that in-degree
    pub in_degree_histogram: BTreeMap<u64, u64>,
    pub out_degree_histogram: BTreeMap<u64, u64>,
}

/// How node tokens in an edge list map onto internal ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IdMode {
    /// Tokens are the ids. `nodes` fixes `N`; otherwise `N = max id + 1`.
    Dense { nodes: Option<usize> },
    /// Tokens are arbitrary; ids are assigned in order of first appearance.
    Remap,
}

/// Internal id -> original token, produced in [`IdMode::Remap`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdMap {
    pub external: Vec<u64>,
}

impl IdMap {
    pub fn external_id(&self, node: NodeId) -> u64 {
        self.external[node as usize]
    }
}

#[derive(Clone, Debug)]
pub struct Ingested {
    pub graph: DirectedGraph,
    pub id_map: Option<IdMap>,
}

/// Reads a whitespace separated `src dst` edge list; `#` starts a comment line.
pub fn parse_edge_list<R: BufRead>(mut reader: R, mode: IdMode) -> Result<Ingested> {
    let mut edges: Vec<(NodeId, NodeId)> = Vec::new();
    let mut remap: HashMap<u64, NodeId> = HashMap::new();
    let mut external: Vec<u64> = Vec::new();
    let mut max_id: Option<u64> = None;
    let id_limit = match mode {
        IdMode::Dense { nodes: Some(n) } => n as u64,
        _ => NodeId::MAX as u64,
    };

    let mut line = String::new();
    let mut line_no = 0usize;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        line_no += 1;
        let content = line.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let mut tokens = content.split_ascii_whitespace();
        let (Some(a), Some(b), None) = (tokens.next(), tokens.next(), tokens.next()) else {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected two node ids, found {content:?}"),
            });
        };
        let parse = |tok: &str| {
            tok.parse::<u64>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("{tok:?} is not a non-negative integer"),
            })
        };
        let (src, dst) = (parse(a)?, parse(b)?);
        match mode {
            IdMode::Dense { .. } => {
                for id in [src, dst] {
                    if id >= id_limit {
                        return Err(Error::NodeOutOfRange {
                            line: line_no,
                            id,
                            nodes: id_limit as usize,
                        });
                    }
                }
                max_id = max_id.max(Some(src.max(dst)));
                edges.push((src as NodeId, dst as NodeId));
            }
            IdMode::Remap => {
                let mut intern = |tok: u64| -> Result<NodeId> {
                    if let Some(&id) = remap.get(&tok) {
                        return Ok(id);
                    }
                    if external.len() as u64 >= id_limit {
                        return Err(Error::NodeOutOfRange {
                            line: line_no,
                            id: tok,
                            nodes: id_limit as usize,
                        });
                    }
                    let id = external.len() as NodeId;
                    remap.insert(tok, id);
                    external.push(tok);
                    Ok(id)
                };
                let s = intern(src)?;
                let d = intern(dst)?;
                edges.push((s, d));
            }
        }
    }

    let (n, id_map) = match mode {
        IdMode::Dense { nodes: Some(n) } => (n, None),
        IdMode::Dense { nodes: None } => (max_id.map_or(0, |m| m as usize + 1), None),
        IdMode::Remap => (external.len(), Some(IdMap { external })),
    };
    let graph = DirectedGraph::from_edges(n, edges)?;
    Ok(Ingested { graph, id_map })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> DirectedGraph {
        parse_edge_list(text.as_bytes(), IdMode::Dense { nodes: None }).unwrap().graph
    }

    #[test]
    fn two_cycle() {
        let g = parse("0 1\n1 0");
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 2);
        assert!(g.dangling_nodes().is_empty());
        assert_eq!(g.invert(), g);
    }

    #[test]
    fn duplicates_collapse() {
        let g = parse("0 1\n0 1\n1 2");
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.dangling_nodes(), &[2]);
    }

    #[test]
    fn self_loops_are_kept() {
        let g = parse("0 0\n0 1\n1 0");
        assert_eq!(g.edge_count(), 3);
        assert_eq!(g.successors(0), &[0, 1]);
    }

    #[test]
    fn comments_whitespace_and_blank_lines() {
        let g = parse("# header\n\n0\t1\n  1   2  \n# trailing\n");
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn chain_inversion() {
        let g = parse("0 1\n1 2");
        let inv = g.invert();
        assert_eq!(inv.edges().collect::<Vec<_>>(), vec![(1, 0), (2, 1)]);
        assert_eq!(g.dangling_nodes(), &[2]);
        assert_eq!(inv.dangling_nodes(), &[0]);
        assert_eq!(g.inverted().dangling_nodes(), &[0]);
        assert_eq!(inv.invert(), g);
    }

    #[test]
    fn malformed_lines_report_line_number() {
        let err =
            parse_edge_list("0 1\n1 x\n".as_bytes(), IdMode::Dense { nodes: None }).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_edge_list("0 1 2\n".as_bytes(), IdMode::Dense { nodes: None }).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_edge_list("0\n".as_bytes(), IdMode::Dense { nodes: None }).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_edge_list("-1 0\n".as_bytes(), IdMode::Dense { nodes: None }).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn dense_mode_range_check() {
        let err = parse_edge_list("0 1\n# c\n1 5\n".as_bytes(), IdMode::Dense { nodes: Some(3) })
            .unwrap_err();
        assert!(matches!(err, Error::NodeOutOfRange { line: 3, id: 5, nodes: 3 }));
        let g =
            parse_edge_list("0 1\n".as_bytes(), IdMode::Dense { nodes: Some(4) }).unwrap().graph;
        assert_eq!(g.node_count(), 4);
        assert_eq!(g.dangling_nodes(), &[1, 2, 3]);
    }

    #[test]
    fn remap_assigns_first_appearance_order() {
        let ing = parse_edge_list("100 7\n7 42\n42 100\n".as_bytes(), IdMode::Remap).unwrap();
        let map = ing.id_map.unwrap();
        assert_eq!(map.external, vec![100, 7, 42]);
        assert_eq!(ing.graph.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2), (2, 0)]);
    }

    #[test]
    fn empty_input_is_rejected() {
        let err =
            parse_edge_list("# nothing\n".as_bytes(), IdMode::Dense { nodes: None }).unwrap_err();
        assert!(matches!(err, Error::EmptyGraph));
    }

    #[test]
    fn degree_stats_of_two_cycle_and_star() {
        let s = parse("0 1\n1 0").degree_stats();
        assert_eq!(s.links_per_node, 1.0);
        assert_eq!(s.dangling_count, 0);

        let star: String = (1..=9).map(|j| format!("0 {j}\n")).collect();
        let s = parse(&star).degree_stats();
        assert_eq!(s.out_degree_histogram, BTreeMap::from([(0, 9), (9, 1)]));
        assert_eq!(s.in_degree_histogram, BTreeMap::from([(0, 1), (1, 9)]));
        assert_eq!(s.dangling_count, 9);
    }

    #[test]
    fn validate_rejects_bad_rows() {
        let csr = Csr::from_parts(vec![0, 2, 2], vec![1, 1]);
        assert!(csr.validate(2).is_err());
        let csr = Csr::from_parts(vec![0, 1, 1], vec![7]);
        assert!(csr.validate(2).is_err());
    }
}
