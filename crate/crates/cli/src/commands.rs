use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use spectrank::arnoldi::{
    arnoldi_core, eigvec_profile, integrated_spectrum, ArnoldiConfig, ArnoldiResult, Breakdown,
};
use spectrank::graph::{parse_edge_list, IdMode};
use spectrank::rank::{find_plateaus, power_iteration, RankConfig};
use spectrank::stats::{
    correlator, degree_fit, density_2d, log_spaced, n_k_counts, ng_filling, rank_fit,
    reference_fraction, subspace_fraction, Degree, GridMode, PowerLawFit,
};
use spectrank::subspace::{decompose, default_max_size, subspace_spectrum};
use spectrank::{cache, export, synth, DirectedGraph, IdMap, Orientation, RankVector};
use spectrank::{SubspaceDecomposition, SubspaceSpectrum};

use crate::artifacts::{require_file, StageRun};
use crate::error::{param, CliError, CliResult};
use crate::{
    FitSpec, FitTarget, GenerateArgs, GenerateModel, GridSpec, IngestArgs, RankArgs, SpectrumArgs,
    StatsArgs, SubspacesArgs,
};

pub const NODE_IDS: &str = "node_ids.txt";

fn suffix(inverted: bool) -> &'static str {
    if inverted {
        "_inverted"
    } else {
        ""
    }
}

fn orientation(inverted: bool) -> Orientation {
    if inverted {
        Orientation::Inverted
    } else {
        Orientation::Forward
    }
}

fn json_to(w: &mut dyn Write, value: &impl Serialize) -> CliResult<()> {
    export::write_json(w, value)?;
    Ok(())
}

fn load_graph(run: &mut StageRun, path: &Path) -> CliResult<DirectedGraph> {
    run.input(path)?;
    Ok(cache::load_graph(path)?)
}

/// Node id map written by `ingest --remap`, looked up next to the graph cache.
fn load_ids(run: &mut StageRun, graph_path: &Path, nodes: usize) -> CliResult<Option<IdMap>> {
    let path = graph_path.with_file_name(NODE_IDS);
    if !path.is_file() {
        return Ok(None);
    }
    run.input(&path)?;
    let mut external = Vec::with_capacity(nodes);
    for (k, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
        let line = line?;
        let id = line.trim().parse::<u64>().map_err(|_| spectrank::Error::Parse {
            line: k + 1,
            message: format!("bad node id {line:?}"),
        })?;
        external.push(id);
    }
    if external.len() != nodes {
        return Err(spectrank::Error::Dimension { expected: nodes, found: external.len() }.into());
    }
    Ok(Some(IdMap { external }))
}

fn load_rank(run: &mut StageRun, path: &Path, nodes: usize) -> CliResult<RankVector> {
    run.input(path)?;
    let rv = cache::load_rank(path)?;
    if rv.len() != nodes {
        return Err(spectrank::Error::Dimension { expected: nodes, found: rv.len() }.into());
    }
    Ok(rv)
}

fn load_decomposition(
    run: &mut StageRun,
    path: &Path,
    nodes: usize,
) -> CliResult<SubspaceDecomposition> {
    run.input(path)?;
    let d: SubspaceDecomposition = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    if d.node_count() != nodes {
        return Err(spectrank::Error::Dimension { expected: nodes, found: d.node_count() }.into());
    }
    d.validate()?;
    Ok(d)
}

pub fn ingest(a: &IngestArgs) -> CliResult<()> {
    require_file(&a.edges)?;
    let params = json!({ "remap": a.remap, "nodes": a.nodes });
    let mut run = StageRun::begin(&a.out, "ingest", "ingest", params)?;
    run.input(&a.edges)?;
    let mode = if a.remap { IdMode::Remap } else { IdMode::Dense { nodes: a.nodes } };
    let ingested = parse_edge_list(BufReader::new(File::open(&a.edges)?), mode)?;
    let g = ingested.graph;

    run.write("graph.bin", |w| {
        cache::write_graph(&g, w)?;
        Ok(())
    })?;
    if let Some(ids) = &ingested.id_map {
        run.write(NODE_IDS, |w| {
            for id in &ids.external {
                writeln!(w, "{id}")?;
            }
            Ok(())
        })?;
    }
    let stats = g.degree_stats();
    run.write("graph_stats.json", |w| json_to(w, &stats))?;
    eprintln!(
        "ingested {} nodes, {} edges, {} dangling",
        stats.nodes, stats.edges, stats.dangling_count
    );
    run.finish()?;
    Ok(())
}

#[derive(Serialize)]
struct RankSummary<'a> {
    orientation: Orientation,
    nodes: usize,
    alpha: f64,
    tol: f64,
    max_iter: usize,
    iterations: usize,
    residual: f64,
    converged: bool,
    top: Vec<(u32, u64, f64)>,
    plateaus: &'a spectrank::PlateauReport,
}

pub fn rank(a: &RankArgs) -> CliResult<()> {
    require_file(&a.graph)?;
    let cfg = RankConfig { alpha: a.alpha, tol: a.tol, max_iter: a.max_iter };
    cfg.validate()?;
    let name = if a.chei { "cheirank" } else { "pagerank" };
    let params = json!({ "alpha": a.alpha, "tol": a.tol, "max_iter": a.max_iter, "chei": a.chei });
    let mut run = StageRun::begin(&a.out, &format!("rank:{name}"), "rank", params)?;
    let g = load_graph(&mut run, &a.graph)?;
    let ids = load_ids(&mut run, &a.graph, g.node_count())?;

    let rv = power_iteration(g.view(orientation(a.chei)), &cfg)?;
    if !rv.converged {
        run.warn(format!(
            "{name} did not converge in {} iterations (residual {:e}, tol {:e})",
            rv.iterations, rv.residual, rv.tol
        ));
    }

    run.write(&format!("{name}.bin"), |w| {
        cache::write_rank(&rv, w)?;
        Ok(())
    })?;
    run.write(&format!("{name}.csv"), |w| Ok(export::write_rank_csv(w, &rv, ids.as_ref())?))?;
    let plateaus = find_plateaus(&rv, 2);
    let top = (1..=rv.len().min(20) as u32)
        .map(|k| {
            let node = rv.node_at(k);
            let ext = ids.as_ref().map_or(node as u64, |m| m.external_id(node));
            (k, ext, rv.probabilities()[node as usize])
        })
        .collect();
    let summary = RankSummary {
        orientation: rv.orientation,
        nodes: rv.len(),
        alpha: rv.alpha,
        tol: rv.tol,
        max_iter: rv.max_iter,
        iterations: rv.iterations,
        residual: rv.residual,
        converged: rv.converged,
        top,
        plateaus: &plateaus,
    };
    run.write(&format!("{name}_summary.json"), |w| json_to(w, &summary))?;
    eprintln!("{name}: {} iterations, residual {:e}", rv.iterations, rv.residual);
    run.finish()?;
    Ok(())
}

fn max_size_for(requested: Option<usize>, nodes: usize) -> CliResult<usize> {
    match requested {
        Some(0) => Err(param("--max-size must be at least 1")),
        Some(m) => Ok(m),
        None => Ok(default_max_size(nodes)),
    }
}

#[derive(Serialize)]
struct SpectrumCounts {
    subspace_eigenvalues: usize,
    unit_modulus: usize,
    unit_value: usize,
    skipped_blocks: Vec<usize>,
}

impl From<&SubspaceSpectrum> for SpectrumCounts {
    fn from(s: &SubspaceSpectrum) -> Self {
        Self {
            subspace_eigenvalues: s.eigenvalue_count(),
            unit_modulus: s.unit_modulus,
            unit_value: s.unit_value,
            skipped_blocks: s.skipped.clone(),
        }
    }
}

pub fn subspaces(a: &SubspacesArgs) -> CliResult<()> {
    require_file(&a.graph)?;
    if a.dense_limit == 0 {
        return Err(param("--dense-limit must be at least 1"));
    }
    let sfx = suffix(a.inverted);
    let params = json!({
        "max_size": a.max_size,
        "dense_limit": a.dense_limit,
        "inverted": a.inverted,
        "members_up_to": a.members_up_to,
    });
    let mut run = StageRun::begin(&a.out, &format!("subspaces{sfx}"), "subspaces", params)?;
    let g = load_graph(&mut run, &a.graph)?;
    let view = g.view(orientation(a.inverted));
    let max_size = max_size_for(a.max_size, g.node_count())?;

    let d = decompose(view, max_size)?;
    let spec = subspace_spectrum(view, &d, a.dense_limit)?;
    if !spec.skipped.is_empty() {
        run.warn(format!(
            "{} subspaces exceed --dense-limit {} and were not diagonalised",
            spec.skipped.len(),
            a.dense_limit
        ));
    }

    run.write(&format!("decomposition{sfx}.json"), |w| {
        serde_json::to_writer(&mut *w, &d)?;
        writeln!(w)?;
        Ok(())
    })?;
    let mut summary = serde_json::to_value(d.summary(a.members_up_to))?;
    summary["spectrum"] = serde_json::to_value(SpectrumCounts::from(&spec))?;
    run.write(&format!("subspaces{sfx}.json"), |w| json_to(w, &summary))?;
    run.write(&format!("subspace_spectrum{sfx}.csv"), |w| {
        Ok(export::write_spectrum_csv(w, Some(&spec), None)?)
    })?;
    eprintln!(
        "{} subspaces covering {} nodes, core {} nodes",
        d.subspace_count(),
        d.subspace_node_count(),
        d.core_size()
    );
    run.finish()?;
    Ok(())
}

/// Bytes held by the Krylov basis and Hessenberg matrix for `dim` steps on a
/// core of `core` nodes, plus one work vector per node of the graph.
pub fn krylov_bytes(dim: usize, core: usize, nodes: usize) -> u128 {
    let (d, c, n) = (dim as u128, core as u128, nodes as u128);
    8 * ((d + 1) * c + (d + 1) * d + 2 * n)
}

#[derive(Serialize)]
struct ArnoldiReport {
    core_size: usize,
    requested_dim: usize,
    dim: usize,
    breakdown_at: Option<usize>,
    restarts: usize,
    converged: usize,
    orthonormality_defect: Option<f64>,
    relation_residual: Option<f64>,
    estimated_bytes: u128,
}

pub fn spectrum(a: &SpectrumArgs) -> CliResult<()> {
    require_file(&a.graph)?;
    if let Some(d) = &a.decomposition {
        require_file(d)?;
    }
    if a.arnoldi_dim == 0 {
        return Err(param("--arnoldi-dim must be at least 1"));
    }
    if a.dense_limit == 0 {
        return Err(param("--dense-limit must be at least 1"));
    }
    if a.vectors.contains(&0) {
        return Err(param("--vectors indices are 1-based"));
    }
    let sfx = suffix(a.inverted);
    let params = json!({
        "arnoldi_dim": a.arnoldi_dim,
        "inverted": a.inverted,
        "vectors": a.vectors,
        "max_size": a.max_size,
        "dense_limit": a.dense_limit,
        "max_ram": a.max_ram,
        "restart_seed": a.restart_seed,
        "decomposition": a.decomposition.is_some(),
    });
    let mut run = StageRun::begin(&a.out, &format!("spectrum{sfx}"), "spectrum", params)?;
    let g = load_graph(&mut run, &a.graph)?;
    let ids = load_ids(&mut run, &a.graph, g.node_count())?;
    let view = g.view(orientation(a.inverted));
    let d = match &a.decomposition {
        Some(path) => {
            let d = load_decomposition(&mut run, path, g.node_count())?;
            if d.orientation != view.orientation() {
                return Err(param(format!(
                    "decomposition is for the {:?} view; pass --inverted accordingly",
                    d.orientation
                )));
            }
            d
        }
        None => decompose(view, max_size_for(a.max_size, g.node_count())?)?,
    };

    let dim = a.arnoldi_dim.min(d.core_size());
    let estimate = krylov_bytes(dim, d.core_size(), g.node_count());
    if let Some(limit) = a.max_ram {
        if estimate > limit as u128 {
            return Err(param(format!(
                "Arnoldi with n_A = {dim} on a core of {} nodes needs about {} bytes, above --max-ram {limit}",
                d.core_size(),
                estimate
            )));
        }
    }

    let spec = subspace_spectrum(view, &d, a.dense_limit)?;
    if !spec.skipped.is_empty() {
        run.warn(format!(
            "{} subspaces exceed --dense-limit {} and were not diagonalised",
            spec.skipped.len(),
            a.dense_limit
        ));
    }

    let core: Option<ArnoldiResult> = if d.core_size() == 0 {
        run.warn("core space is empty; no Arnoldi run");
        None
    } else {
        let cfg = ArnoldiConfig {
            dim: a.arnoldi_dim,
            breakdown: match a.restart_seed {
                Some(seed) => Breakdown::Restart { seed },
                None => Breakdown::Stop,
            },
            vectors: a.vectors.iter().map(|&k| k - 1).collect(),
            ..Default::default()
        };
        let r = arnoldi_core(view, &d, &cfg)?;
        if let Some(at) = r.breakdown_at {
            run.warn(format!("Krylov space became invariant at step {at}"));
        }
        Some(r)
    };

    run.write(&format!("spectrum{sfx}.csv"), |w| {
        Ok(export::write_spectrum_csv(w, Some(&spec), core.as_ref())?)
    })?;
    let curves = integrated_spectrum(&spec, core.as_ref(), g.node_count());
    run.write(&format!("integrated{sfx}.csv"), |w| {
        Ok(export::write_curve_csv(w, "j_over_n,modulus", &curves.combined)?)
    })?;
    run.write(&format!("integrated_core{sfx}.csv"), |w| {
        Ok(export::write_curve_csv(w, "j_over_n,modulus", &curves.core)?)
    })?;

    if let Some(r) = &core {
        for (idx, vector) in &r.ritz_vectors {
            let profile = eigvec_profile(vector)?;
            run.write(&format!("profile{sfx}_{}.csv", idx + 1), |w| {
                Ok(export::write_profile_csv(w, &profile, d.core_nodes(), ids.as_ref())?)
            })?;
        }
    }
    let report = json!({
        "orientation": view.orientation(),
        "nodes": g.node_count(),
        "subspace_count": d.subspace_count(),
        "subspace_nodes": d.subspace_node_count(),
        "subspaces": SpectrumCounts::from(&spec),
        "arnoldi": core.as_ref().map(|r| ArnoldiReport {
            core_size: d.core_size(),
            requested_dim: r.requested_dim,
            dim: r.dim,
            breakdown_at: r.breakdown_at,
            restarts: r.restarts,
            converged: r.converged_count(),
            orthonormality_defect: r.orthonormality_defect,
            relation_residual: r.relation_residual,
            estimated_bytes: estimate,
        }),
    });
    run.write(&format!("arnoldi{sfx}.json"), |w| json_to(w, &report))?;
    if let Some(r) = &core {
        eprintln!(
            "core {} nodes: {} Ritz values, {} converged",
            d.core_size(),
            r.ritz_values.len(),
            r.converged_count()
        );
    }
    run.finish()?;
    Ok(())
}

fn grid_name(spec: &GridSpec) -> String {
    match spec.0 {
        GridMode::Log { cells } => format!("grid_log_{cells}.csv"),
        GridMode::Linear { cell_size, max_rank } => {
            format!("grid_linear_{cell_size}_{max_rank}.csv")
        }
    }
}

#[derive(Serialize)]
struct CorrelatorSummary {
    nodes: usize,
    kappa: f64,
    histogram_lo: f64,
    histogram_hi: f64,
    histogram_cells: usize,
    underflow: u64,
    overflow: u64,
    in_range: u64,
}

/// Fit ranges chosen when `--fits` is not given: everything but the first
/// and last decade of the rank axis, the full positive degree range.
fn default_fits(nodes: usize) -> Vec<FitSpec> {
    let top = (nodes as f64).log10();
    let rank_range = if top >= 3.0 { (1.0, top - 1.0) } else { (0.0, top) };
    vec![
        FitSpec { target: FitTarget::Pagerank, range: rank_range },
        FitSpec { target: FitTarget::Cheirank, range: rank_range },
        FitSpec { target: FitTarget::InDegree, range: (0.0, top) },
        FitSpec { target: FitTarget::OutDegree, range: (0.0, top) },
    ]
}

pub fn stats(a: &StatsArgs) -> CliResult<()> {
    for p in [&a.graph, &a.pagerank, &a.cheirank] {
        require_file(p)?;
    }
    if let Some(d) = &a.decomposition {
        require_file(d)?;
    }
    if a.per_decade == 0 {
        return Err(param("--per-decade must be at least 1"));
    }
    let params = json!({
        "grids": a.grids.iter().map(|g| g.0).collect::<Vec<_>>(),
        "fits": a.fits.as_ref().map(|f| f.iter().map(FitSpec::to_string).collect::<Vec<_>>()),
        "per_decade": a.per_decade,
        "decomposition": a.decomposition.is_some(),
    });
    let mut run = StageRun::begin(&a.out, "stats", "stats", params)?;
    let g = load_graph(&mut run, &a.graph)?;
    let n = g.node_count();
    let p = load_rank(&mut run, &a.pagerank, n)?;
    let pstar = load_rank(&mut run, &a.cheirank, n)?;
    if p.orientation != Orientation::Forward {
        run.warn("--pagerank file holds a vector of the inverted graph");
    }
    if pstar.orientation != Orientation::Inverted {
        run.warn("--cheirank file holds a vector of the forward graph");
    }
    let decomp = match &a.decomposition {
        Some(path) => Some(load_decomposition(&mut run, path, n)?),
        None => None,
    };

    let corr = correlator(&p, &pstar)?;
    let summary = CorrelatorSummary {
        nodes: n,
        kappa: corr.kappa,
        histogram_lo: corr.histogram.lo,
        histogram_hi: corr.histogram.hi,
        histogram_cells: corr.histogram.counts.len(),
        underflow: corr.histogram.underflow,
        overflow: corr.histogram.overflow,
        in_range: corr.histogram.in_range(),
    };
    run.write("correlator.json", |w| json_to(w, &summary))?;
    run.write("kappa_histogram.csv", |w| Ok(export::write_histogram_csv(w, &corr.histogram)?))?;

    let (k, kstar) = (p.rank_of_node(), pstar.rank_of_node());
    for spec in &a.grids {
        let grid = density_2d(k, kstar, spec.0)?;
        run.write(&grid_name(spec), |w| Ok(export::write_grid_csv(w, &grid)?))?;
    }
    let k_values = log_spaced(n as u64, a.per_decade);
    let nk = n_k_counts(k, kstar, &k_values)?;
    run.write("nk.csv", |w| Ok(export::write_nk_csv(w, &nk)?))?;
    let ng = ng_filling(&g, k, &k_values)?;
    run.write("ng.csv", |w| Ok(export::write_ng_csv(w, &ng)?))?;

    let fraction = match &decomp {
        Some(d) if d.subspace_count() > 0 => {
            let f = subspace_fraction(&d.dimensions())?;
            run.write("subspace_fraction.csv", |w| {
                writeln!(w, "x,fraction,reference")?;
                for &(x, y) in &f.points {
                    writeln!(w, "{x},{y},{}", reference_fraction(x))?;
                }
                Ok(())
            })?;
            Some(f)
        }
        Some(_) => {
            run.warn("decomposition has no subspaces; subspace fraction skipped");
            None
        }
        None => None,
    };

    let explicit = a.fits.is_some();
    let fit_specs = a.fits.clone().unwrap_or_else(|| default_fits(n));
    let degrees = g.degree_stats();
    let mut fits: BTreeMap<String, PowerLawFit> = BTreeMap::new();
    for spec in &fit_specs {
        let result = match spec.target {
            FitTarget::Pagerank => rank_fit(&p, spec.range),
            FitTarget::Cheirank => rank_fit(&pstar, spec.range),
            FitTarget::InDegree => degree_fit(&degrees, Degree::In, spec.range),
            FitTarget::OutDegree => degree_fit(&degrees, Degree::Out, spec.range),
            FitTarget::Fraction => match &fraction {
                Some(f) => f.tail_fit(spec.range),
                None => {
                    if explicit {
                        return Err(param("fraction fit needs --decomposition with subspaces"));
                    }
                    continue;
                }
            },
        };
        match result {
            Ok(fit) => {
                fits.insert(spec.target.name().to_string(), fit);
            }
            Err(e) if !explicit => run.warn(format!("fit {spec} skipped: {e}")),
            Err(e) => return Err(CliError::Lib(e)),
        }
    }
    run.write("fits.json", |w| json_to(w, &fits))?;
    eprintln!("kappa = {}", corr.kappa);
    run.finish()?;
    Ok(())
}

pub fn generate(a: &GenerateArgs) -> CliResult<()> {
    let params = match &a.model {
        GenerateModel::Price { nodes, m, a: attach, seed } => {
            json!({ "model": "price", "nodes": nodes, "m": m, "a": attach, "seed": seed })
        }
        GenerateModel::Random { nodes, edges, seed } => {
            json!({ "model": "random", "nodes": nodes, "edges": edges, "seed": seed })
        }
    };
    let g = match a.model {
        GenerateModel::Price { nodes, m, a: attach, seed } => {
            if nodes == 0 || m == 0 || !(attach > 0.0 && attach.is_finite()) {
                return Err(param("price model needs nodes >= 1, m >= 1 and a > 0"));
            }
            synth::price_graph(nodes, m, attach, seed)
        }
        GenerateModel::Random { nodes, edges, seed } => {
            if nodes == 0 {
                return Err(param("random model needs nodes >= 1"));
            }
            synth::random_edges(nodes, edges, seed)
        }
    };
    let mut run = StageRun::begin(&a.out, "generate", "generate", params)?;
    run.write(&a.name, |w| Ok(g.write_edge_list(w)?))?;
    eprintln!("generated {} nodes, {} edges", g.node_count(), g.edge_count());
    run.finish()?;
    Ok(())
}
