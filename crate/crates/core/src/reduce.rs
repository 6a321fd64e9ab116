//! Reductions whose rounding does not depend on the worker count.
//!
//! Inputs are cut into fixed-size chunks, each chunk is summed sequentially
//! and the per-chunk partials are then combined left to right.

use rayon::prelude::*;

pub(crate) const CHUNK: usize = 1 << 13;

pub(crate) fn sum(xs: &[f64]) -> f64 {
    if xs.len() <= CHUNK {
        return xs.iter().sum();
    }
    let partials: Vec<f64> = xs.par_chunks(CHUNK).map(|c| c.iter().sum()).collect();
    partials.iter().sum()
}

/// Sum of `xs[i]` over `idx`, in the order of `idx`.
pub(crate) fn sum_indexed(xs: &[f64], idx: &[u32]) -> f64 {
    let chunk = |c: &[u32]| c.iter().map(|&i| xs[i as usize]).sum::<f64>();
    if idx.len() <= CHUNK {
        return chunk(idx);
    }
    let partials: Vec<f64> = idx.par_chunks(CHUNK).map(chunk).collect();
    partials.iter().sum()
}

pub(crate) fn dot(xs: &[f64], ys: &[f64]) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    let chunk = |(a, b): (&[f64], &[f64])| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    if xs.len() <= CHUNK {
        return chunk((xs, ys));
    }
    let partials: Vec<f64> = xs.par_chunks(CHUNK).zip(ys.par_chunks(CHUNK)).map(chunk).collect();
    partials.iter().sum()
}

/// Sum of `|x - y|`.
pub(crate) fn l1_distance(xs: &[f64], ys: &[f64]) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    let chunk = |(a, b): (&[f64], &[f64])| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
    if xs.len() <= CHUNK {
        return chunk((xs, ys));
    }
    let partials: Vec<f64> = xs.par_chunks(CHUNK).zip(ys.par_chunks(CHUNK)).map(chunk).collect();
    partials.iter().sum()
}

/// `y += a * x`
pub(crate) fn axpy(a: f64, xs: &[f64], ys: &mut [f64]) {
    debug_assert_eq!(xs.len(), ys.len());
    ys.par_chunks_mut(CHUNK)
        .zip(xs.par_chunks(CHUNK))
        .for_each(|(y, x)| y.iter_mut().zip(x).for_each(|(y, x)| *y += a * x));
}

pub(crate) fn norm2(xs: &[f64]) -> f64 {
    dot(xs, xs).sqrt()
}
