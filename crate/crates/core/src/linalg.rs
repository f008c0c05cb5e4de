//! Small direct solvers: banded LU without pivoting, CSR products and
//! (cyclic) tridiagonal elimination.

use num_complex::Complex64;

use crate::error::{LabError, Result};

/// Compressed sparse rows.
#[derive(Debug, Clone, Default)]
pub struct Csr {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    pub fn with_capacity(n: usize, nnz: usize) -> Self {
        let mut indptr = Vec::with_capacity(n + 1);
        indptr.push(0);
        Csr {
            n,
            indptr,
            indices: Vec::with_capacity(nnz),
            values: Vec::with_capacity(nnz),
        }
    }
    pub fn clear(&mut self) {
        self.indptr.clear();
        self.indptr.push(0);
        self.indices.clear();
        self.values.clear();
    }
    pub fn push(&mut self, col: usize, v: f64) {
        self.indices.push(col);
        self.values.push(v);
    }
    pub fn end_row(&mut self) {
        self.indptr.push(self.indices.len());
    }
    /// y = A x
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for p in self.indptr[i]..self.indptr[i + 1] {
                s += self.values[p] * x[self.indices[p]];
            }
            y[i] = s;
        }
    }
    /// y = A^T x
    pub fn matvec_t(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let xi = x[i];
            for p in self.indptr[i]..self.indptr[i + 1] {
                y[self.indices[p]] += self.values[p] * xi;
            }
        }
    }
    pub fn same_values(&self, other: &Csr) -> bool {
        self.n == other.n && self.indices == other.indices && self.values == other.values
    }
}

/// LU factors of a banded matrix (lower bandwidth p, upper bandwidth q),
/// stored row-major with row i holding columns i - p ..= i + q.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    p: usize,
    q: usize,
    band: Vec<f64>,
}

impl BandedLu {
    fn w(&self) -> usize {
        self.p + self.q + 1
    }

    pub fn factor(a: &Csr, p: usize, q: usize) -> Result<Self> {
        let n = a.n;
        let w = p + q + 1;
        let mut band = vec![0.0; n * w];
        for i in 0..n {
            for idx in a.indptr[i]..a.indptr[i + 1] {
                let j = a.indices[idx];
                debug_assert!(j + p >= i && j <= i + q);
                band[i * w + (j + p - i)] += a.values[idx];
            }
        }
        let mut min_pivot = f64::INFINITY;
        for k in 0..n {
            let piv = band[k * w + p];
            min_pivot = min_pivot.min(piv.abs());
            if piv.abs() < 1e-300 {
                return Err(LabError::Singular(piv.abs()));
            }
            let jmax = (k + q).min(n - 1);
            let imax = (k + p).min(n - 1);
            for i in k + 1..=imax {
                let lik = band[i * w + (k + p - i)] / piv;
                band[i * w + (k + p - i)] = lik;
                if lik != 0.0 {
                    let (head, tail) = band.split_at_mut(i * w);
                    let rowk = &head[k * w..k * w + w];
                    let rowi = &mut tail[..w];
                    for j in k + 1..=jmax {
                        rowi[j + p - i] -= lik * rowk[j + p - k];
                    }
                }
            }
        }
        let _ = min_pivot;
        Ok(BandedLu { n, p, q, band })
    }

    /// Solve A x = b in place.
    pub fn solve(&self, b: &mut [f64]) {
        let (n, p, q, w) = (self.n, self.p, self.q, self.w());
        for i in 0..n {
            let row = &self.band[i * w..i * w + w];
            let j0 = i.saturating_sub(p);
            b[i] -= dot(&row[j0 + p - i..p], &b[j0..i]);
        }
        for i in (0..n).rev() {
            let row = &self.band[i * w..i * w + w];
            let j1 = (i + q).min(n - 1);
            let s = b[i] - dot(&row[p + 1..j1 + p - i + 1], &b[i + 1..=j1]);
            b[i] = s / row[p];
        }
    }

    /// Solve A^T x = b in place.
    pub fn solve_transpose(&self, b: &mut [f64]) {
        let (n, p, q, w) = (self.n, self.p, self.q, self.w());
        for i in 0..n {
            let row = &self.band[i * w..i * w + w];
            let zi = b[i] / row[p];
            b[i] = zi;
            let j1 = (i + q).min(n - 1);
            axpy(-zi, &row[p + 1..j1 + p - i + 1], &mut b[i + 1..=j1]);
        }
        for i in (0..n).rev() {
            let row = &self.band[i * w..i * w + w];
            let xi = b[i];
            let j0 = i.saturating_sub(p);
            let (lo, _) = b.split_at_mut(i);
            axpy(-xi, &row[j0 + p - i..p], &mut lo[j0..]);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    acc.iter().sum::<f64>() + tail
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Thomas algorithm for a tridiagonal system (sub a, diag b, super c).
/// `a[0]` and `c[n-1]` are ignored.
pub fn tridiag_solve<T>(a: &[T], b: &[T], c: &[T], d: &mut [T], scratch: &mut Vec<T>) -> Result<()>
where
    T: Copy
        + std::ops::Sub<Output = T>
        + std::ops::Mul<Output = T>
        + std::ops::Div<Output = T>
        + Norm,
{
    let n = d.len();
    scratch.clear();
    scratch.extend_from_slice(c);
    if b[0].norm1() < 1e-300 {
        return Err(LabError::Singular(0.0));
    }
    scratch[0] = c[0] / b[0];
    d[0] = d[0] / b[0];
    for i in 1..n {
        let m = b[i] - a[i] * scratch[i - 1];
        if m.norm1() < 1e-300 {
            return Err(LabError::Singular(m.norm1()));
        }
        if i + 1 < n {
            scratch[i] = c[i] / m;
        }
        d[i] = (d[i] - a[i] * d[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        d[i] = d[i] - scratch[i] * d[i + 1];
    }
    Ok(())
}

pub trait Norm {
    fn norm1(&self) -> f64;
}

impl Norm for f64 {
    fn norm1(&self) -> f64 {
        self.abs()
    }
}

impl Norm for Complex64 {
    fn norm1(&self) -> f64 {
        self.norm()
    }
}

/// Periodic tridiagonal system: row i couples i-1, i, i+1 modulo n, with
/// coefficients (a[i], b[i], c[i]). Solved by Sherman-Morrison.
pub fn cyclic_tridiag_solve<T>(a: &[T], b: &[T], c: &[T], d: &mut [T]) -> Result<()>
where
    T: Copy
        + std::ops::Add<Output = T>
        + std::ops::Sub<Output = T>
        + std::ops::Mul<Output = T>
        + std::ops::Div<Output = T>
        + std::ops::Neg<Output = T>
        + Norm,
{
    let n = d.len();
    assert!(n >= 3);
    let gamma = -b[0];
    let alpha = c[n - 1];
    let beta = a[0];
    let mut bb = b.to_vec();
    bb[0] = b[0] - gamma;
    bb[n - 1] = b[n - 1] - alpha * beta / gamma;
    let mut scratch = Vec::with_capacity(n);
    tridiag_solve(a, &bb, c, d, &mut scratch)?;
    let zero = a[0] - a[0];
    let mut u = vec![zero; n];
    u[0] = gamma;
    u[n - 1] = alpha;
    tridiag_solve(a, &bb, c, &mut u, &mut scratch)?;
    let fact_num = d[0] + beta * d[n - 1] / gamma;
    let fact_den = (gamma - gamma) + gamma / gamma + u[0] + beta * u[n - 1] / gamma;
    if fact_den.norm1() < 1e-300 {
        return Err(LabError::Singular(fact_den.norm1()));
    }
    let f = fact_num / fact_den;
    for i in 0..n {
        d[i] = d[i] - f * u[i];
    }
    Ok(())
}

/// Pre-factored real periodic tridiagonal matrix for repeated solves.
#[derive(Debug, Clone)]
pub struct CyclicFactor {
    a: Vec<f64>,
    cp: Vec<f64>,
    piv: Vec<f64>,
    u: Vec<f64>,
    beta: f64,
    gamma: f64,
    den: f64,
}

impl CyclicFactor {
    pub fn new(a: &[f64], b: &[f64], c: &[f64]) -> Result<Self> {
        let n = b.len();
        assert!(n >= 3);
        let gamma = -b[0];
        let beta = a[0];
        let alpha = c[n - 1];
        let mut bb = b.to_vec();
        bb[0] = b[0] - gamma;
        bb[n - 1] = b[n - 1] - alpha * beta / gamma;
        let mut cp = vec![0.0; n];
        let mut piv = vec![0.0; n];
        piv[0] = bb[0];
        for i in 0..n {
            if i > 0 {
                piv[i] = bb[i] - a[i] * cp[i - 1];
            }
            if piv[i].abs() < 1e-300 {
                return Err(LabError::Singular(piv[i].abs()));
            }
            cp[i] = if i + 1 < n { c[i] / piv[i] } else { 0.0 };
        }
        let mut f = CyclicFactor {
            a: a.to_vec(),
            cp,
            piv,
            u: vec![0.0; n],
            beta,
            gamma,
            den: 0.0,
        };
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = alpha;
        f.thomas(&mut u);
        let den = 1.0 + u[0] + beta * u[n - 1] / gamma;
        if den.abs() < 1e-300 {
            return Err(LabError::Singular(den.abs()));
        }
        f.u = u;
        f.den = den;
        Ok(f)
    }

    fn thomas(&self, d: &mut [f64]) {
        let n = d.len();
        d[0] /= self.piv[0];
        for i in 1..n {
            d[i] = (d[i] - self.a[i] * d[i - 1]) / self.piv[i];
        }
        for i in (0..n - 1).rev() {
            d[i] -= self.cp[i] * d[i + 1];
        }
    }

    pub fn solve(&self, d: &mut [f64]) {
        let n = d.len();
        self.thomas(d);
        let f = (d[0] + self.beta * d[n - 1] / self.gamma) / self.den;
        for (di, ui) in d.iter_mut().zip(&self.u) {
            *di -= f * ui;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_mul(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter().map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
    }

    #[test]
    fn banded_roundtrip() {
        let n = 12;
        let (p, q) = (3, 2);
        let mut dense = vec![vec![0.0; n]; n];
        let mut csr = Csr::with_capacity(n, n * 6);
        for i in 0..n {
            for j in i.saturating_sub(p)..=(i + q).min(n - 1) {
                let v = if i == j { 6.0 } else { ((i * 7 + j * 3) % 5) as f64 * 0.3 - 0.6 };
                dense[i][j] = v;
                csr.push(j, v);
            }
            csr.end_row();
        }
        let lu = BandedLu::factor(&csr, p, q).unwrap();
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut b = dense_mul(&dense, &x);
        lu.solve(&mut b);
        for i in 0..n {
            assert!((b[i] - x[i]).abs() < 1e-12);
        }
        let dt: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| dense[j][i]).collect()).collect();
        let mut b = dense_mul(&dt, &x);
        lu.solve_transpose(&mut b);
        for i in 0..n {
            assert!((b[i] - x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cyclic_matches_dense() {
        let n = 7;
        let a: Vec<f64> = (0..n).map(|i| -1.0 - 0.1 * i as f64).collect();
        let c: Vec<f64> = (0..n).map(|i| -0.7 + 0.05 * i as f64).collect();
        let b: Vec<f64> = (0..n).map(|i| 4.0 + 0.2 * i as f64).collect();
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.9).cos()).collect();
        let mut d: Vec<f64> = (0..n)
            .map(|i| a[i] * x[(i + n - 1) % n] + b[i] * x[i] + c[i] * x[(i + 1) % n])
            .collect();
        let mut e = d.clone();
        cyclic_tridiag_solve(&a, &b, &c, &mut d).unwrap();
        CyclicFactor::new(&a, &b, &c).unwrap().solve(&mut e);
        for i in 0..n {
            assert!((d[i] - x[i]).abs() < 1e-12);
            assert!((e[i] - x[i]).abs() < 1e-12);
        }
    }
}
