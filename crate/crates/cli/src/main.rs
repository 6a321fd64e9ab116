//! `spectrank` command-line front end.
//!
//! Each subcommand reads cached artifacts, writes its outputs atomically into
//! an output directory and records checksums in that directory's
//! `manifest.json`.

mod artifacts;
mod commands;
mod error;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use spectrank::stats::GridMode;

use crate::error::{code, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "spectrank",
    version,
    about = "Google matrix spectral analysis of directed networks"
)]
struct Cli {
    /// Worker threads; 0 uses one per core. Outputs do not depend on it.
    #[arg(long, global = true, env = "SPECTRANK_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse an edge list into a binary graph cache.
    Ingest(IngestArgs),
    /// PageRank (or CheiRank with --chei) by power iteration.
    Rank(RankArgs),
    /// Invariant subspaces and their exact spectra.
    Subspaces(SubspacesArgs),
    /// Subspace spectra plus the Arnoldi spectrum of the core block.
    Spectrum(SpectrumArgs),
    /// Correlator, rank-plane densities, count curves and power-law fits.
    Stats(StatsArgs),
    /// Write a synthetic edge list.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Whitespace separated `src dst` lines; `#` starts a comment.
    pub edges: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
    /// Treat ids as arbitrary labels and renumber them; writes node_ids.txt.
    #[arg(long, conflicts_with = "nodes")]
    pub remap: bool,
    /// Fix the node count instead of using max id + 1.
    #[arg(long)]
    pub nodes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// graph.bin written by `ingest`.
    pub graph: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = spectrank::DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    /// Rank the graph with inverted links (CheiRank).
    #[arg(long)]
    pub chei: bool,
}

#[derive(Debug, Args)]
pub struct SubspacesArgs {
    pub graph: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
    /// Closure size beyond which a node joins the core [default: min(1e5, N/10)].
    #[arg(long)]
    pub max_size: Option<usize>,
    /// Largest subspace block diagonalised densely.
    #[arg(long, default_value_t = spectrank::subspace::DEFAULT_DENSE_LIMIT)]
    pub dense_limit: usize,
    #[arg(long)]
    pub inverted: bool,
    /// Keep member lists only for subspaces up to this size in the summary.
    #[arg(long)]
    pub members_up_to: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    pub graph: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
    /// Reuse a decomposition JSON instead of recomputing it.
    #[arg(long)]
    pub decomposition: Option<PathBuf>,
    #[arg(long, default_value_t = spectrank::arnoldi::DEFAULT_DIM)]
    pub arnoldi_dim: usize,
    #[arg(long)]
    pub inverted: bool,
    /// 1-based positions in the modulus-sorted core spectrum whose
    /// eigenvector profiles are written.
    #[arg(long, value_delimiter = ',')]
    pub vectors: Vec<usize>,
    #[arg(long)]
    pub max_size: Option<usize>,
    #[arg(long, default_value_t = spectrank::subspace::DEFAULT_DENSE_LIMIT)]
    pub dense_limit: usize,
    /// Refuse to start if the Krylov basis would exceed this (e.g. 512M, 8G).
    #[arg(long, value_parser = parse_bytes)]
    pub max_ram: Option<u64>,
    /// Continue past breakdowns with seeded random vectors.
    #[arg(long)]
    pub restart_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    pub graph: PathBuf,
    #[arg(long)]
    pub pagerank: PathBuf,
    #[arg(long)]
    pub cheirank: PathBuf,
    #[arg(long)]
    pub decomposition: Option<PathBuf>,
    #[arg(short, long)]
    pub out: PathBuf,
    /// `log:CELLS` or `linear:CELL_SIZE:MAX_RANK`, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "log:100")]
    pub grids: Vec<GridSpec>,
    /// `TARGET:LO:HI` with log10 bounds; targets pagerank, cheirank,
    /// in-degree, out-degree, fraction.
    #[arg(long, value_delimiter = ',')]
    pub fits: Option<Vec<FitSpec>>,
    /// Sample points per decade for the N_K and N_G curves.
    #[arg(long, default_value_t = 10)]
    pub per_decade: usize,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(subcommand)]
    pub model: GenerateModel,
    #[arg(short, long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// File name of the edge list inside the output directory.
    #[arg(long, global = true, default_value = "edges.txt")]
    pub name: String,
}

#[derive(Debug, Clone, Subcommand)]
pub enum GenerateModel {
    /// Price preferential attachment: m links per new node, offset a.
    Price {
        #[arg(long)]
        nodes: usize,
        #[arg(long, default_value_t = 10)]
        m: usize,
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Uniform random directed edges.
    Random {
        #[arg(long)]
        nodes: usize,
        #[arg(long)]
        edges: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec(pub GridMode);

impl FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| t.parse::<u32>().map_err(|_| format!("bad number {t:?} in grid {s:?}"));
        match parts.as_slice() {
            ["log", cells] => {
                let cells = num(cells)?;
                if cells == 0 {
                    return Err("log grid needs at least one cell".into());
                }
                Ok(GridSpec(GridMode::Log { cells: cells as usize }))
            }
            ["linear", size, max] => {
                let (cell_size, max_rank) = (num(size)?, num(max)?);
                if cell_size == 0 || max_rank == 0 {
                    return Err("linear grid needs positive cell size and max rank".into());
                }
                Ok(GridSpec(GridMode::Linear { cell_size, max_rank }))
            }
            _ => Err(format!("grid {s:?} is neither log:CELLS nor linear:SIZE:MAX")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitTarget {
    Pagerank,
    Cheirank,
    InDegree,
    OutDegree,
    Fraction,
}

impl FitTarget {
    pub fn name(self) -> &'static str {
        match self {
            FitTarget::Pagerank => "pagerank",
            FitTarget::Cheirank => "cheirank",
            FitTarget::InDegree => "in-degree",
            FitTarget::OutDegree => "out-degree",
            FitTarget::Fraction => "fraction",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSpec {
    pub target: FitTarget,
    pub range: (f64, f64),
}

impl fmt::Display for FitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.target.name(), self.range.0, self.range.1)
    }
}

impl FromStr for FitSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [target, lo, hi] = parts.as_slice() else {
            return Err(format!("fit {s:?} is not TARGET:LO:HI"));
        };
        let target = match *target {
            "pagerank" => FitTarget::Pagerank,
            "cheirank" => FitTarget::Cheirank,
            "in-degree" => FitTarget::InDegree,
            "out-degree" => FitTarget::OutDegree,
            "fraction" => FitTarget::Fraction,
            other => return Err(format!("unknown fit target {other:?}")),
        };
        let num = |t: &str| t.parse::<f64>().map_err(|_| format!("bad bound {t:?} in fit {s:?}"));
        let range = (num(lo)?, num(hi)?);
        if !range.0.is_finite() || !range.1.is_finite() || range.0 >= range.1 {
            return Err(format!("fit range in {s:?} must satisfy LO < HI"));
        }
        Ok(FitSpec { target, range })
    }
}

/// Byte count with an optional binary suffix K, M, G or T.
fn parse_bytes(s: &str) -> Result<u64, String> {
    let t = s.trim().trim_end_matches(['B', 'b']);
    let (digits, shift) = match t.char_indices().last() {
        Some((i, c)) if c.is_ascii_alphabetic() => {
            let shift = match c.to_ascii_uppercase() {
                'K' => 10,
                'M' => 20,
                'G' => 30,
                'T' => 40,
                _ => return Err(format!("unknown size suffix in {s:?}")),
            };
            (&t[..i], shift)
        }
        _ => (t, 0),
    };
    let value: f64 = digits.trim().parse().map_err(|_| format!("bad size {s:?}"))?;
    if !value.is_finite() || value < 0.0 {
        return Err(format!("bad size {s:?}"));
    }
    let bytes = value * (1u64 << shift) as f64;
    if bytes > u64::MAX as f64 {
        return Err(format!("size {s:?} is too large"));
    }
    Ok(bytes as u64)
}

fn run(cli: Cli) -> CliResult<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| error::param(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Rank(a) => commands::rank(a),
        Command::Subspaces(a) => commands::subspaces(a),
        Command::Spectrum(a) => commands::spectrum(a),
        Command::Stats(a) => commands::stats(a),
        Command::Generate(a) => commands::generate(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(code::PARAMETER as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spectrank: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_sizes() {
        assert_eq!(parse_bytes("1024").unwrap(), 1024);
        assert_eq!(parse_bytes("8G").unwrap(), 8 << 30);
        assert_eq!(parse_bytes("1.5k").unwrap(), 1536);
        assert_eq!(parse_bytes("512MB").unwrap(), 512 << 20);
        assert!(parse_bytes("12X").is_err());
        assert!(parse_bytes("-1").is_err());
    }

    #[test]
    fn grid_and_fit_specs() {
        assert_eq!("log:100".parse::<GridSpec>().unwrap().0, GridMode::Log { cells: 100 });
        assert_eq!(
            "linear:10:1000".parse::<GridSpec>().unwrap().0,
            GridMode::Linear { cell_size: 10, max_rank: 1000 }
        );
        assert!("log:0".parse::<GridSpec>().is_err());
        assert!("cubic:3".parse::<GridSpec>().is_err());

        let f: FitSpec = "in-degree:0.5:3".parse().unwrap();
        assert_eq!(f.target, FitTarget::InDegree);
        assert_eq!(f.range, (0.5, 3.0));
        assert_eq!(f.to_string(), "in-degree:0.5:3");
        assert!("pagerank:3:1".parse::<FitSpec>().is_err());
        assert!("bogus:0:1".parse::<FitSpec>().is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn krylov_estimate() {
        assert_eq!(commands::krylov_bytes(2, 10, 20), 8 * (3 * 10 + 3 * 2 + 40));
    }
}
