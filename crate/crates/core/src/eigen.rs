//! Dense nonsymmetric eigenvalue problems.
//!
//! Eigenvalues come from balancing, reduction to upper Hessenberg form by
//! stabilised elementary similarity transforms, and the Francis double-shift
//! QR iteration. Eigenvectors of Hessenberg matrices are obtained by inverse
//! iteration in complex arithmetic, which is all the Arnoldi driver needs.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// The leading `rows x cols` block.
    pub fn top_left(&self, rows: usize, cols: usize) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |i, j| self[(i, j)])
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Orders eigenvalues by decreasing modulus; equal moduli by decreasing real
/// then imaginary part.
pub fn sort_by_modulus_desc(values: &mut [Complex64]) {
    values.sort_by(|a, b| {
        b.norm().total_cmp(&a.norm()).then(b.re.total_cmp(&a.re)).then(b.im.total_cmp(&a.im))
    });
}

/// All eigenvalues of a square matrix, in no particular order.
pub fn eigenvalues(a: &DenseMatrix) -> Result<Vec<Complex64>> {
    if !a.is_square() {
        return Err(Error::Dimension { expected: a.rows, found: a.cols });
    }
    let n = a.rows;
    let mut work = Padded::from_dense(a, n);
    work.balance();
    work.reduce_to_hessenberg();
    work.hqr()
}

/// All eigenvalues of a square upper Hessenberg matrix.
pub fn hessenberg_eigenvalues(h: &DenseMatrix) -> Result<Vec<Complex64>> {
    if !h.is_square() {
        return Err(Error::Dimension { expected: h.rows, found: h.cols });
    }
    let mut work = Padded::from_dense(h, h.rows);
    work.clear_below_subdiagonal();
    work.hqr()
}

/// 1-based square work array with one row and column of padding.
struct Padded {
    n: usize,
    a: Vec<f64>,
}

impl Padded {
    fn from_dense(m: &DenseMatrix, n: usize) -> Self {
        let stride = n + 1;
        let mut a = vec![0.0; stride * stride];
        for i in 0..n {
            for j in 0..n {
                a[(i + 1) * stride + j + 1] = m[(i, j)];
            }
        }
        Padded { n, a }
    }

    fn clear_below_subdiagonal(&mut self) {
        let s = self.n + 1;
        for i in 3..=self.n {
            for j in 1..i - 1 {
                self.a[i * s + j] = 0.0;
            }
        }
    }

    /// Diagonal similarity by powers of two that equalises row and column norms.
    fn balance(&mut self) {
        const RADIX: f64 = 2.0;
        let n = self.n;
        let s = n + 1;
        let a = &mut self.a;
        let sqrdx = RADIX * RADIX;
        let mut done = false;
        while !done {
            done = true;
            for i in 1..=n {
                let mut r = 0.0;
                let mut c = 0.0;
                for j in 1..=n {
                    if j != i {
                        c += a[j * s + i].abs();
                        r += a[i * s + j].abs();
                    }
                }
                if c != 0.0 && r != 0.0 {
                    let mut g = r / RADIX;
                    let mut f = 1.0;
                    let total = c + r;
                    while c < g {
                        f *= RADIX;
                        c *= sqrdx;
                    }
                    g = r * RADIX;
                    while c > g {
                        f /= RADIX;
                        c /= sqrdx;
                    }
                    if (c + r) / f < 0.95 * total {
                        done = false;
                        let g = 1.0 / f;
                        for j in 1..=n {
                            a[i * s + j] *= g;
                        }
                        for j in 1..=n {
                            a[j * s + i] *= f;
                        }
                    }
                }
            }
        }
    }

    /// Gaussian elimination with pivoting, applied as a similarity.
    fn reduce_to_hessenberg(&mut self) {
        let n = self.n;
        let s = n + 1;
        let a = &mut self.a;
        for m in 2..n {
            let mut x = 0.0f64;
            let mut piv = m;
            for j in m..=n {
                if a[j * s + m - 1].abs() > x.abs() {
                    x = a[j * s + m - 1];
                    piv = j;
                }
            }
            if piv != m {
                for j in m - 1..=n {
                    a.swap(piv * s + j, m * s + j);
                }
                for j in 1..=n {
                    a.swap(j * s + piv, j * s + m);
                }
            }
            if x != 0.0 {
                for i in m + 1..=n {
                    let mut y = a[i * s + m - 1];
                    if y != 0.0 {
                        y /= x;
                        a[i * s + m - 1] = y;
                        for j in m..=n {
                            a[i * s + j] -= y * a[m * s + j];
                        }
                        for j in 1..=n {
                            a[j * s + m] += y * a[j * s + i];
                        }
                    }
                }
            }
        }
        self.clear_below_subdiagonal();
    }

    /// Francis double-shift QR on the upper Hessenberg work array.
    fn hqr(mut self) -> Result<Vec<Complex64>> {
        const MAX_ITS: usize = 100;
        let n = self.n;
        let s = n + 1;
        let a = &mut self.a;
        let mut wr = vec![0.0; n + 1];
        let mut wi = vec![0.0; n + 1];

        let mut anorm = 0.0;
        for i in 1..=n {
            for j in (i.max(2) - 1)..=n {
                anorm += a[i * s + j].abs();
            }
        }

        let mut nn = n;
        let mut t = 0.0;
        while nn >= 1 {
            let mut its = 0;
            loop {
                let mut l = nn;
                while l >= 2 {
                    let mut ss = a[(l - 1) * s + l - 1].abs() + a[l * s + l].abs();
                    if ss == 0.0 {
                        ss = anorm;
                    }
                    if a[l * s + l - 1].abs() <= f64::EPSILON * ss {
                        a[l * s + l - 1] = 0.0;
                        break;
                    }
                    l -= 1;
                }
                let mut x = a[nn * s + nn];
                if l == nn {
                    wr[nn] = x + t;
                    wi[nn] = 0.0;
                    nn -= 1;
                    break;
                }
                let mut y = a[(nn - 1) * s + nn - 1];
                let mut w = a[nn * s + nn - 1] * a[(nn - 1) * s + nn];
                if l == nn - 1 {
                    let p = 0.5 * (y - x);
                    let q = p * p + w;
                    let mut z = q.abs().sqrt();
                    x += t;
                    if q >= 0.0 {
                        z = p + z.copysign(p);
                        wr[nn - 1] = x + z;
                        wr[nn] = x + z;
                        if z != 0.0 {
                            wr[nn] = x - w / z;
                        }
                        wi[nn - 1] = 0.0;
                        wi[nn] = 0.0;
                    } else {
                        wr[nn - 1] = x + p;
                        wr[nn] = x + p;
                        wi[nn - 1] = -z;
                        wi[nn] = z;
                    }
                    nn -= 2;
                    break;
                }

                if its == MAX_ITS {
                    return Err(Error::NoConvergence(n));
                }
                if its > 0 && its % 10 == 0 {
                    // exceptional shift
                    t += x;
                    for i in 1..=nn {
                        a[i * s + i] -= x;
                    }
                    let sh = a[nn * s + nn - 1].abs() + a[(nn - 1) * s + nn - 2].abs();
                    x = 0.75 * sh;
                    y = x;
                    w = -0.4375 * sh * sh;
                }
                its += 1;

                let (mut p, mut q, mut r);
                let mut z;
                let mut m = nn - 2;
                loop {
                    z = a[m * s + m];
                    let rr = x - z;
                    let ss = y - z;
                    p = (rr * ss - w) / a[(m + 1) * s + m] + a[m * s + m + 1];
                    q = a[(m + 1) * s + m + 1] - z - rr - ss;
                    r = a[(m + 2) * s + m + 1];
                    let scale = p.abs() + q.abs() + r.abs();
                    p /= scale;
                    q /= scale;
                    r /= scale;
                    if m == l {
                        break;
                    }
                    let u = a[m * s + m - 1].abs() * (q.abs() + r.abs());
                    let v = p.abs()
                        * (a[(m - 1) * s + m - 1].abs() + z.abs() + a[(m + 1) * s + m + 1].abs());
                    if u <= f64::EPSILON * v {
                        break;
                    }
                    m -= 1;
                }
                for i in m + 2..=nn {
                    a[i * s + i - 2] = 0.0;
                    if i != m + 2 {
                        a[i * s + i - 3] = 0.0;
                    }
                }
                let mut k = m;
                while k < nn {
                    if k != m {
                        p = a[k * s + k - 1];
                        q = a[(k + 1) * s + k - 1];
                        r = 0.0;
                        if k != nn - 1 {
                            r = a[(k + 2) * s + k - 1];
                        }
                        x = p.abs() + q.abs() + r.abs();
                        if x != 0.0 {
                            p /= x;
                            q /= x;
                            r /= x;
                        }
                    }
                    let sg = (p * p + q * q + r * r).sqrt().copysign(p);
                    if sg != 0.0 {
                        if k == m {
                            if l != m {
                                a[k * s + k - 1] = -a[k * s + k - 1];
                            }
                        } else {
                            a[k * s + k - 1] = -sg * x;
                        }
                        p += sg;
                        x = p / sg;
                        y = q / sg;
                        z = r / sg;
                        q /= p;
                        r /= p;
                        for j in k..=nn {
                            let mut pp = a[k * s + j] + q * a[(k + 1) * s + j];
                            if k != nn - 1 {
                                pp += r * a[(k + 2) * s + j];
                                a[(k + 2) * s + j] -= pp * z;
                            }
                            a[(k + 1) * s + j] -= pp * y;
                            a[k * s + j] -= pp * x;
                        }
                        let mmin = nn.min(k + 3);
                        for i in l..=mmin {
                            let mut pp = x * a[i * s + k] + y * a[i * s + k + 1];
                            if k != nn - 1 {
                                pp += z * a[i * s + k + 2];
                                a[i * s + k + 2] -= pp * r;
                            }
                            a[i * s + k + 1] -= pp * q;
                            a[i * s + k] -= pp;
                        }
                    }
                    k += 1;
                }
            }
        }
        Ok((1..=n).map(|i| Complex64::new(wr[i], wi[i])).collect())
    }
}

/// Unit-norm eigenvector of the square upper Hessenberg `h` for the
/// (approximate) eigenvalue `lambda`, by inverse iteration.
///
/// The phase is fixed so that the largest component is real and positive.
pub fn hessenberg_eigenvector(h: &DenseMatrix, lambda: Complex64) -> Vec<Complex64> {
    let n = h.rows;
    assert!(h.is_square(), "eigenvector of a non-square matrix");
    if n == 0 {
        return Vec::new();
    }
    let norm = (0..n)
        .map(|i| h.row(i).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let tiny = f64::EPSILON * norm;
    let shift = lambda + Complex64::new(tiny, 0.0);

    // LU of H - shift I with adjacent-row pivoting; U overwrites m.
    let mut m: Vec<Complex64> = (0..n * n)
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            let v =
                if j + 1 >= i { Complex64::new(h[(i, j)], 0.0) } else { Complex64::new(0.0, 0.0) };
            if i == j {
                v - shift
            } else {
                v
            }
        })
        .collect();
    let mut swapped = vec![false; n];
    let mut mult = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..n - 1 {
        if m[(k + 1) * n + k].norm() > m[k * n + k].norm() {
            for j in k..n {
                m.swap(k * n + j, (k + 1) * n + j);
            }
            swapped[k] = true;
        }
        if m[k * n + k].norm() == 0.0 {
            m[k * n + k] = Complex64::new(tiny, 0.0);
        }
        let f = m[(k + 1) * n + k] / m[k * n + k];
        mult[k] = f;
        m[(k + 1) * n + k] = Complex64::new(0.0, 0.0);
        if f.norm() != 0.0 {
            for j in k + 1..n {
                let u = m[k * n + j];
                m[(k + 1) * n + j] -= f * u;
            }
        }
    }
    if m[(n - 1) * n + n - 1].norm() == 0.0 {
        m[(n - 1) * n + n - 1] = Complex64::new(tiny, 0.0);
    }

    let solve = |x: &mut [Complex64]| {
        for k in 0..n - 1 {
            if swapped[k] {
                x.swap(k, k + 1);
            }
            let xk = x[k];
            x[k + 1] -= mult[k] * xk;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= m[i * n + j] * x[j];
            }
            x[i] = acc / m[i * n + i];
            // rescale on overflow risk; direction is all that matters
            if !x[i].norm().is_finite() || x[i].norm() > 1e150 {
                let big = x[i..].iter().map(|c| c.norm()).fold(0.0, f64::max);
                let fix = if big.is_finite() && big > 0.0 { 1.0 / big } else { 0.0 };
                x[i..].iter_mut().for_each(|c| *c *= fix);
            }
        }
    };
    let normalise = |x: &mut [Complex64]| {
        let s = x.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if s > 0.0 && s.is_finite() {
            x.iter_mut().for_each(|c| *c /= s);
        } else {
            x.iter_mut().for_each(|c| *c = Complex64::new(1.0 / (n as f64).sqrt(), 0.0));
        }
    };

    let mut x = vec![Complex64::new(1.0, 0.0); n];
    for _ in 0..3 {
        solve(&mut x);
        normalise(&mut x);
    }
    let (big, _) =
        x.iter().enumerate().fold(
            (0, 0.0),
            |(bi, bv), (i, c)| if c.norm() > bv { (i, c.norm()) } else { (bi, bv) },
        );
    let phase = x[big].conj() / x[big].norm();
    x.iter_mut().for_each(|c| *c *= phase);
    x[big] = Complex64::new(x[big].re, 0.0);
    x
}
