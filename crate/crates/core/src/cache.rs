//! Binary caches for graphs and rank vectors.
//!
//! Graph cache layout (all integers little-endian):
//!
//! ```text
//! "SNRK" | version u32 | N u64 | N_l u64
//! out offsets (N+1) x u64 | out indices N_l x u32
//! in offsets  (N+1) x u64 | in indices  N_l x u32
//! crc32 of everything above, u32
//! ```
//!
//! Rank vector cache layout:
//!
//! ```text
//! "SNRV" | version u32 | N u64 | alpha f64 | tol f64 | max_iter u64
//! iterations u64 | residual f64 | orientation u8 | converged u8
//! probabilities N x f64 | crc32 u32
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{Csr, DirectedGraph, NodeId, Orientation};
use crate::rank::RankVector;

pub const GRAPH_MAGIC: [u8; 4] = *b"SNRK";
pub const RANK_MAGIC: [u8; 4] = *b"SNRV";
pub const GRAPH_FORMAT_VERSION: u32 = 1;
pub const RANK_FORMAT_VERSION: u32 = 1;

const GRAPH_HEADER_LEN: u64 = 4 + 4 + 8 + 8;
const RANK_HEADER_LEN: u64 = 4 + 4 + 8 + 8 + 8 + 8 + 8 + 8 + 1 + 1;
const BLOCK: usize = 1 << 16;

struct HashingWriter<W> {
    inner: W,
    hasher: crc32fast::Hasher,
}

impl<W: Write> HashingWriter<W> {
    fn new(inner: W) -> Self {
        HashingWriter { inner, hasher: crc32fast::Hasher::new() }
    }

    fn put(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.hasher.update(bytes);
        self.inner.write_all(bytes)
    }

    fn finish(mut self) -> io::Result<W> {
        let crc = self.hasher.clone().finalize();
        self.inner.write_all(&crc.to_le_bytes())?;
        self.inner.flush()?;
        Ok(self.inner)
    }
}

struct HashingReader<R> {
    inner: R,
    hasher: crc32fast::Hasher,
}

impl<R: Read> HashingReader<R> {
    fn new(inner: R) -> Self {
        HashingReader { inner, hasher: crc32fast::Hasher::new() }
    }

    fn take(&mut self, buf: &mut [u8]) -> Result<()> {
        read_exact(&mut self.inner, buf)?;
        self.hasher.update(buf);
        Ok(())
    }

    fn u8(&mut self) -> Result<u8> {
        let mut b = [0u8; 1];
        self.take(&mut b)?;
        Ok(b[0])
    }

    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.take(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.take(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn array<T, const W: usize>(
        &mut self,
        count: usize,
        decode: fn([u8; W]) -> T,
    ) -> Result<Vec<T>> {
        let mut out = Vec::with_capacity(count);
        let mut buf = vec![0u8; BLOCK * W];
        let mut left = count;
        while left > 0 {
            let take = left.min(BLOCK);
            let bytes = &mut buf[..take * W];
            self.take(bytes)?;
            out.extend(bytes.chunks_exact(W).map(|c| decode(c.try_into().unwrap())));
            left -= take;
        }
        Ok(out)
    }

    /// Reads the stored checksum and requires end of input.
    fn verify(mut self) -> Result<()> {
        let computed = self.hasher.clone().finalize();
        let mut b = [0u8; 4];
        read_exact(&mut self.inner, &mut b)?;
        let stored = u32::from_le_bytes(b);
        if stored != computed {
            return Err(Error::ChecksumMismatch { stored, computed });
        }
        let mut probe = [0u8; 1];
        if self.inner.read(&mut probe)? != 0 {
            return Err(Error::Corrupt("trailing bytes after checksum".into()));
        }
        Ok(())
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::Truncated,
        _ => Error::Io(e),
    })
}

fn put_u64s<W: Write>(w: &mut HashingWriter<W>, xs: &[u64]) -> io::Result<()> {
    let mut buf = Vec::with_capacity(BLOCK * 8);
    for chunk in xs.chunks(BLOCK) {
        buf.clear();
        chunk.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes()));
        w.put(&buf)?;
    }
    Ok(())
}

fn put_u32s<W: Write>(w: &mut HashingWriter<W>, xs: &[u32]) -> io::Result<()> {
    let mut buf = Vec::with_capacity(BLOCK * 4);
    for chunk in xs.chunks(BLOCK) {
        buf.clear();
        chunk.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes()));
        w.put(&buf)?;
    }
    Ok(())
}

fn check_magic(found: [u8; 4], expected: [u8; 4]) -> Result<()> {
    if found != expected {
        return Err(Error::BadMagic(found));
    }
    Ok(())
}

pub fn write_graph<W: Write>(g: &DirectedGraph, w: W) -> Result<W> {
    let mut w = HashingWriter::new(w);
    w.put(&GRAPH_MAGIC)?;
    w.put(&GRAPH_FORMAT_VERSION.to_le_bytes())?;
    w.put(&(g.node_count() as u64).to_le_bytes())?;
    w.put(&(g.edge_count() as u64).to_le_bytes())?;
    for csr in [g.out_csr(), g.in_csr()] {
        put_u64s(&mut w, csr.offsets())?;
        put_u32s(&mut w, csr.indices())?;
    }
    Ok(w.finish()?)
}

/// Reads a graph cache. `len`, when known, is checked against the header
/// before any large allocation.
pub fn read_graph<R: Read>(r: R, len: Option<u64>) -> Result<DirectedGraph> {
    let mut r = HashingReader::new(r);
    let mut magic = [0u8; 4];
    r.take(&mut magic)?;
    check_magic(magic, GRAPH_MAGIC)?;
    let version = r.u32()?;
    if version != GRAPH_FORMAT_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: GRAPH_FORMAT_VERSION });
    }
    let n = r.u64()?;
    let m = r.u64()?;
    let expected = (n.checked_add(1).and_then(|x| x.checked_mul(16)))
        .and_then(|off| m.checked_mul(8).and_then(|idx| off.checked_add(idx)))
        .and_then(|body| body.checked_add(GRAPH_HEADER_LEN + 4))
        .ok_or_else(|| Error::Corrupt(format!("header sizes overflow: N={n}, N_l={m}")))?;
    if let Some(len) = len {
        if len < expected {
            return Err(Error::Truncated);
        }
        if len > expected {
            return Err(Error::Corrupt("trailing bytes after checksum".into()));
        }
    }
    let (n, m) = (n as usize, m as usize);
    let mut csrs = Vec::with_capacity(2);
    for _ in 0..2 {
        let offsets = r.array(n + 1, u64::from_le_bytes)?;
        let indices: Vec<NodeId> = r.array(m, u32::from_le_bytes)?;
        csrs.push(Csr::from_parts(offsets, indices));
    }
    r.verify()?;
    let inc = csrs.pop().unwrap();
    let out = csrs.pop().unwrap();
    DirectedGraph::from_csr_pair(n, out, inc)
}

pub fn save_graph(g: &DirectedGraph, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    write_graph(g, BufWriter::new(file))?;
    Ok(())
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<DirectedGraph> {
    let file = File::open(path)?;
    let len = file.metadata()?.len();
    read_graph(BufReader::new(file), Some(len))
}

pub fn write_rank<W: Write>(rv: &RankVector, w: W) -> Result<W> {
    let mut w = HashingWriter::new(w);
    w.put(&RANK_MAGIC)?;
    w.put(&RANK_FORMAT_VERSION.to_le_bytes())?;
    w.put(&(rv.len() as u64).to_le_bytes())?;
    w.put(&rv.alpha.to_le_bytes())?;
    w.put(&rv.tol.to_le_bytes())?;
    w.put(&(rv.max_iter as u64).to_le_bytes())?;
    w.put(&(rv.iterations as u64).to_le_bytes())?;
    w.put(&rv.residual.to_le_bytes())?;
    let orientation = match rv.orientation {
        Orientation::Forward => 0u8,
        Orientation::Inverted => 1u8,
    };
    w.put(&[orientation, rv.converged as u8])?;
    let bits: Vec<u64> = rv.probabilities().iter().map(|p| p.to_bits()).collect();
    put_u64s(&mut w, &bits)?;
    Ok(w.finish()?)
}

pub fn read_rank<R: Read>(r: R, len: Option<u64>) -> Result<RankVector> {
    let mut r = HashingReader::new(r);
    let mut magic = [0u8; 4];
    r.take(&mut magic)?;
    check_magic(magic, RANK_MAGIC)?;
    let version = r.u32()?;
    if version != RANK_FORMAT_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: RANK_FORMAT_VERSION });
    }
    let n = r.u64()?;
    let expected = n
        .checked_mul(8)
        .and_then(|body| body.checked_add(RANK_HEADER_LEN + 4))
        .ok_or_else(|| Error::Corrupt(format!("header size overflows: N={n}")))?;
    if let Some(len) = len {
        if len < expected {
            return Err(Error::Truncated);
        }
        if len > expected {
            return Err(Error::Corrupt("trailing bytes after checksum".into()));
        }
    }
    let alpha = r.f64()?;
    let tol = r.f64()?;
    let max_iter = r.u64()? as usize;
    let iterations = r.u64()? as usize;
    let residual = r.f64()?;
    let orientation = match r.u8()? {
        0 => Orientation::Forward,
        1 => Orientation::Inverted,
        other => return Err(Error::Corrupt(format!("unknown orientation tag {other}"))),
    };
    let converged = match r.u8()? {
        0 => false,
        1 => true,
        other => return Err(Error::Corrupt(format!("bad converged flag {other}"))),
    };
    let probabilities = r.array(n as usize, |b| f64::from_bits(u64::from_le_bytes(b)))?;
    r.verify()?;
    let mut rv = RankVector::from_probabilities(probabilities)?;
    rv.alpha = alpha;
    rv.tol = tol;
    rv.max_iter = max_iter;
    rv.iterations = iterations;
    rv.residual = residual;
    rv.orientation = orientation;
    rv.converged = converged;
    Ok(rv)
}

pub fn save_rank(rv: &RankVector, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    write_rank(rv, BufWriter::new(file))?;
    Ok(())
}

pub fn load_rank(path: impl AsRef<Path>) -> Result<RankVector> {
    let file = File::open(path)?;
    let len = file.metadata()?.len();
    read_rank(BufReader::new(file), Some(len))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rank::{pagerank, RankConfig};
    use crate::synth;

    fn two_cycle() -> DirectedGraph {
        DirectedGraph::from_edges(2, vec![(0, 1), (1, 0)]).unwrap()
    }

    fn bytes(g: &DirectedGraph) -> Vec<u8> {
        write_graph(g, Vec::new()).unwrap()
    }

    fn load(b: &[u8]) -> Result<DirectedGraph> {
        read_graph(b, Some(b.len() as u64))
    }

    #[test]
    fn roundtrip_small_graphs() {
        let g = two_cycle();
        assert_eq!(load(&bytes(&g)).unwrap(), g);

        let lonely = DirectedGraph::from_edges(1, vec![]).unwrap();
        let back = load(&bytes(&lonely)).unwrap();
        assert_eq!(back.dangling_nodes(), &[0]);
        assert_eq!(back, lonely);
    }

    #[test]
    fn header_fields() {
        let b = bytes(&two_cycle());
        assert_eq!(&b[..4], b"SNRK");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), GRAPH_FORMAT_VERSION);
        assert_eq!(u64::from_le_bytes(b[8..16].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(b[16..24].try_into().unwrap()), 2);
        assert_eq!(b.len(), 24 + 2 * (3 * 8 + 2 * 4) + 4);
    }

    #[test]
    fn distinct_load_errors() {
        let good = bytes(&two_cycle());

        let mut versioned = good.clone();
        versioned[4] = 99;
        assert!(matches!(load(&versioned), Err(Error::VersionMismatch { found: 99, .. })));

        let mut flipped = good.clone();
        let last_payload = good.len() - 5;
        flipped[last_payload] ^= 0x01;
        assert!(matches!(load(&flipped), Err(Error::ChecksumMismatch { .. })));

        let truncated = &good[..good.len() - 3];
        assert!(matches!(load(truncated), Err(Error::Truncated)));
        // without a length hint truncation is still detected while streaming
        assert!(matches!(read_graph(truncated, None), Err(Error::Truncated)));

        let mut magic = good.clone();
        magic[0] = b'X';
        assert!(matches!(load(&magic), Err(Error::BadMagic(_))));
    }

    #[test]
    fn large_random_graph_reserializes_identically() {
        let g = synth::random_edges(200_000, 1_000_000, 11);
        let first = bytes(&g);
        let back = load(&first).unwrap();
        assert_eq!(back, g);
        assert_eq!(bytes(&back), first);
    }

    #[test]
    fn rank_roundtrip() {
        let g = synth::random_digraph(50, 0.1, 3);
        let rv = pagerank(&g, &RankConfig::default()).unwrap();
        let b = write_rank(&rv, Vec::new()).unwrap();
        let back = read_rank(&b[..], Some(b.len() as u64)).unwrap();
        assert_eq!(back, rv);

        let mut bad = b.clone();
        bad[b.len() - 10] ^= 0x40;
        assert!(matches!(
            read_rank(&bad[..], Some(bad.len() as u64)),
            Err(Error::ChecksumMismatch { .. })
        ));
        assert!(matches!(read_rank(&b[..b.len() - 1], None), Err(Error::Truncated)));
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.snrk");
        let g = synth::random_digraph(30, 0.2, 5);
        save_graph(&g, &path).unwrap();
        assert_eq!(load_graph(&path).unwrap(), g);
    }
}
