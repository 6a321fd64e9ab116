//! CSV and JSON writers. Every CSV starts with a one-line header; floats use
//! the shortest representation that round-trips.

use std::io::{self, Write};

use serde::Serialize;

use crate::arnoldi::{ArnoldiResult, EigvecProfile};
use crate::graph::{IdMap, NodeId};
use crate::rank::RankVector;
use crate::stats::{DensityGrid, LogHistogram, NgPoint};
use crate::subspace::SubspaceSpectrum;

fn external(ids: Option<&IdMap>, node: NodeId) -> u64 {
    ids.map_or(node as u64, |m| m.external_id(node))
}

/// `node_id,probability,rank` in node order.
pub fn write_rank_csv<W: Write>(mut w: W, rv: &RankVector, ids: Option<&IdMap>) -> io::Result<()> {
    writeln!(w, "node_id,probability,rank")?;
    for (i, (&p, &k)) in rv.probabilities().iter().zip(rv.rank_of_node()).enumerate() {
        writeln!(w, "{},{},{}", external(ids, i as NodeId), p, k)?;
    }
    Ok(())
}

/// `row,col,count,density` for every cell.
pub fn write_grid_csv<W: Write>(mut w: W, grid: &DensityGrid) -> io::Result<()> {
    writeln!(w, "row,col,count,density")?;
    let density = grid.density();
    for row in 0..grid.size {
        for col in 0..grid.size {
            let idx = row * grid.size + col;
            writeln!(w, "{row},{col},{},{}", grid.counts[idx], density[idx])?;
        }
    }
    Ok(())
}

/// `lower,upper,count`, with the underflow and overflow bins first and last.
pub fn write_histogram_csv<W: Write>(mut w: W, h: &LogHistogram) -> io::Result<()> {
    writeln!(w, "lower,upper,count")?;
    writeln!(w, "0,{},{}", h.lo, h.underflow)?;
    let edges = h.edges();
    for (k, &c) in h.counts.iter().enumerate() {
        writeln!(w, "{},{},{}", edges[k], edges[k + 1], c)?;
    }
    writeln!(w, "{},inf,{}", h.hi, h.overflow)?;
    Ok(())
}

/// Two-column curve with the given header, e.g. `"x,f"`.
pub fn write_curve_csv<W: Write>(mut w: W, header: &str, points: &[(f64, f64)]) -> io::Result<()> {
    writeln!(w, "{header}")?;
    for (x, y) in points {
        writeln!(w, "{x},{y}")?;
    }
    Ok(())
}

/// `k,n_k`
pub fn write_nk_csv<W: Write>(mut w: W, points: &[(u64, u64)]) -> io::Result<()> {
    writeln!(w, "k,n_k")?;
    for (k, c) in points {
        writeln!(w, "{k},{c}")?;
    }
    Ok(())
}

/// `k,n_g,g_k,n_g_per_k`
pub fn write_ng_csv<W: Write>(mut w: W, points: &[NgPoint]) -> io::Result<()> {
    writeln!(w, "k,n_g,g_k,n_g_per_k")?;
    for p in points {
        writeln!(w, "{},{},{},{}", p.k, p.n_g, p.g_k, p.per_node)?;
    }
    Ok(())
}

/// `re,im,modulus,residual,origin`. Subspace eigenvalues are exact and get
/// residual 0; core Ritz values carry their estimates.
pub fn write_spectrum_csv<W: Write>(
    mut w: W,
    subspaces: Option<&SubspaceSpectrum>,
    core: Option<&ArnoldiResult>,
) -> io::Result<()> {
    writeln!(w, "re,im,modulus,residual,origin")?;
    if let Some(s) = subspaces {
        for z in s.eigenvalues() {
            writeln!(w, "{},{},{},0,subspace", z.re, z.im, z.norm())?;
        }
    }
    if let Some(r) = core {
        for (z, res) in r.ritz_values.iter().zip(&r.residuals) {
            writeln!(w, "{},{},{},{},core", z.re, z.im, z.norm(), res)?;
        }
    }
    Ok(())
}

/// `rank,node_id,modulus`; `nodes` maps vector positions to node ids.
pub fn write_profile_csv<W: Write>(
    mut w: W,
    profile: &EigvecProfile,
    nodes: &[NodeId],
    ids: Option<&IdMap>,
) -> io::Result<()> {
    writeln!(w, "rank,node_id,modulus")?;
    for (r, (&pos, m)) in profile.positions.iter().zip(&profile.moduli).enumerate() {
        writeln!(w, "{},{},{}", r + 1, external(ids, nodes[pos]), m)?;
    }
    Ok(())
}

/// Pretty JSON followed by a newline.
pub fn write_json<W: Write, T: Serialize + ?Sized>(mut w: W, value: &T) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::DirectedGraph;
    use crate::rank::{pagerank, RankConfig};
    use crate::stats::{density_2d, powerlaw_fit, GridMode};
    use crate::Complex64;

    fn text(f: impl FnOnce(&mut Vec<u8>) -> io::Result<()>) -> String {
        let mut buf = Vec::new();
        f(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn rank_csv_for_two_cycle() {
        let g = DirectedGraph::from_edges(2, vec![(0, 1), (1, 0)]).unwrap();
        let rv = pagerank(&g, &RankConfig::default()).unwrap();
        let s = text(|b| write_rank_csv(b, &rv, None));
        assert_eq!(s, "node_id,probability,rank\n0,0.5,1\n1,0.5,2\n");
        let ids = IdMap { external: vec![70, 9] };
        let s = text(|b| write_rank_csv(b, &rv, Some(&ids)));
        assert_eq!(s, "node_id,probability,rank\n70,0.5,1\n9,0.5,2\n");
    }

    #[test]
    fn grid_and_spectrum_csv() {
        let g =
            density_2d(&[1, 2], &[2, 1], GridMode::Linear { cell_size: 1, max_rank: 2 }).unwrap();
        let s = text(|b| write_grid_csv(b, &g));
        assert_eq!(s, "row,col,count,density\n0,0,0,0\n0,1,1,0.5\n1,0,1,0.5\n1,1,0,0\n");

        let spec = SubspaceSpectrum {
            blocks: vec![Some(vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)])],
            skipped: vec![],
            unit_modulus: 2,
            unit_value: 1,
        };
        let s = text(|b| write_spectrum_csv(b, Some(&spec), None));
        assert_eq!(s, "re,im,modulus,residual,origin\n1,0,1,0,subspace\n-1,0,1,0,subspace\n");
    }

    #[test]
    fn fit_json_fields() {
        let pts: Vec<(f64, f64)> = (1..=10).map(|x| (x as f64, 2.0 / x as f64)).collect();
        let fit = powerlaw_fit(&pts, (0.0, 1.0)).unwrap();
        let s = text(|b| write_json(b, &fit));
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        for key in ["a", "b", "err_a", "err_b", "range"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn histogram_csv_rows() {
        let mut h = LogHistogram::new(1.0, 100.0, 2).unwrap();
        for x in [0.5, 1.0, 50.0, 1000.0] {
            h.add(x);
        }
        let s = text(|b| write_histogram_csv(b, &h));
        assert_eq!(s, "lower,upper,count\n0,1,1\n1,10,1\n10,100,1\n100,inf,1\n");
    }
}
