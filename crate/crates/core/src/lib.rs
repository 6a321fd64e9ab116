//! Google matrix spectral analysis of large directed networks.
//!
//! The crate is organised around an immutable [`DirectedGraph`] holding both
//! link orientations. On top of it sit:
//!
//! * [`operator`]: the matrices `S` and `G = αS + (1-α)/N` as implicit,
//!   deterministic parallel matrix-vector products,
//! * [`rank`]: PageRank / CheiRank by power iteration, rank permutations and
//!   degenerate plateau detection,
//! * [`subspace`]: invariant subspaces of `S`, the core space and exact
//!   diagonalisation of the subspace blocks,
//! * [`arnoldi`]: the Arnoldi method on the core block `S_cc`,
//! * [`stats`]: the 2D ranking observables (correlator, rank-plane densities,
//!   `N_K`, `N_G`, subspace dimension statistics, power-law fits).

pub mod arnoldi;
pub mod cache;
pub mod eigen;
mod error;
pub mod export;
pub mod graph;
pub mod operator;
pub mod rank;
mod reduce;
pub mod stats;
pub mod subspace;
pub mod synth;

pub use error::{Error, Result};
pub use graph::{DirectedGraph, GraphStats, GraphView, IdMap, IdMode, Ingested, Orientation};
pub use num_complex::Complex64;
pub use operator::GoogleOperator;
pub use rank::{PlateauReport, RankConfig, RankVector};
pub use subspace::{SubspaceDecomposition, SubspaceSpectrum};

/// Default damping factor.
pub const DEFAULT_ALPHA: f64 = 0.85;
