//! Dense complex matrices and a one-sided Jacobi SVD.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use num_traits::Zero;

pub type C64 = Complex64;

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds from row-major data; `None` if the length does not match.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Option<Self> {
        (data.len() == rows * cols).then_some(Self { rows, cols, data })
    }

    /// Builds from a list of equally sized columns.
    pub fn from_columns(rows: usize, columns: &[Vec<C64>]) -> Self {
        Self::from_fn(rows, columns.len(), |i, j| columns[j][i])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Leading `k` columns.
    pub fn leading_columns(&self, k: usize) -> CMatrix {
        CMatrix::from_fn(self.rows, k, |i, j| self[(i, j)])
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn matmul(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let mut out = CMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                let rrow = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, b) in orow.iter_mut().zip(rrow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, x.len(), "mul_vec shape mismatch");
        self.data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `selfᴴ · x` without forming the adjoint.
    pub fn adjoint_mul_vec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(self.rows, x.len(), "adjoint_mul_vec shape mismatch");
        let mut out = vec![C64::zero(); self.cols];
        for (row, xi) in self.data.chunks_exact(self.cols).zip(x) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a.conj() * xi;
            }
        }
        out
    }

    pub fn sub(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, s: C64) -> CMatrix {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    pub fn frobenius_norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sqr().sqrt()
    }

    /// Largest deviation of `selfᴴ·self` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.adjoint().matmul(self);
        let mut worst = 0.0f64;
        for i in 0..gram.rows {
            for j in 0..gram.cols {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - C64::new(target, 0.0)).norm());
            }
        }
        worst
    }

    /// Inverse of a small square matrix by Gauss-Jordan elimination with
    /// partial pivoting. `None` when singular to working precision.
    pub fn inverse(&self) -> Option<CMatrix> {
        assert_eq!(self.rows, self.cols, "inverse of non-square matrix");
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = CMatrix::identity(n);
        let scale = self.data.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return None;
        }
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&p, &q| a[(p, col)].norm().total_cmp(&a[(q, col)].norm()))
                .unwrap();
            if a[(pivot, col)].norm() <= scale * 1e-14 {
                return None;
            }
            if pivot != col {
                for j in 0..n {
                    a.data.swap(pivot * n + j, col * n + j);
                    inv.data.swap(pivot * n + j, col * n + j);
                }
            }
            let p = a[(col, col)].inv();
            for j in 0..n {
                a[(col, j)] *= p;
                inv[(col, j)] *= p;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[(r, col)];
                if f.is_zero() {
                    continue;
                }
                for j in 0..n {
                    let (ac, ic) = (a[(col, j)], inv[(col, j)]);
                    a[(r, j)] -= f * ac;
                    inv[(r, j)] -= f * ic;
                }
            }
        }
        Some(inv)
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// `aᴴ·b`.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Full singular value decomposition `A = U·diag(σ)·Vᴴ`.
///
/// `u` is `m×m`, `v` is `n×n`, `sigma` has `min(m, n)` entries in descending
/// order. Each left singular vector is rotated so that its largest-magnitude
/// entry is real and positive (the paired right vector gets the same phase).
#[derive(Debug, Clone, PartialEq)]
pub struct Svd {
    pub u: CMatrix,
    pub sigma: Vec<f64>,
    pub v: CMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> CMatrix {
        let (m, n) = (self.u.rows(), self.v.rows());
        let mut out = CMatrix::zeros(m, n);
        for (k, &s) in self.sigma.iter().enumerate() {
            for i in 0..m {
                let us = self.u[(i, k)] * s;
                for j in 0..n {
                    out[(i, j)] += us * self.v[(j, k)].conj();
                }
            }
        }
        out
    }
}

const JACOBI_TOL: f64 = 1e-15;
const MAX_SWEEPS: usize = 100;

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd(a: &CMatrix) -> Svd {
    let (m, n) = (a.rows(), a.cols());
    let mut w: Vec<Vec<C64>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<C64>> = (0..n)
        .map(|j| {
            let mut e = vec![C64::zero(); n];
            e[j] = C64::new(1.0, 0.0);
            e
        })
        .collect();

    // Columns this small are numerically zero; rotating them only churns noise.
    let floor = {
        let f = a.frobenius_norm() * f64::EPSILON;
        f * f
    };
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = norm_sqr(&w[p]);
                let beta = norm_sqr(&w[q]);
                let gamma = inner(&w[p], &w[q]);
                let g = gamma.norm();
                if g == 0.0 || g <= JACOBI_TOL * (alpha * beta).sqrt() || alpha.min(beta) <= floor {
                    continue;
                }
                rotated = true;
                // Rotate q by the phase of gamma so the pair becomes a real
                // symmetric 2x2 problem.
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let pc = phase.conj();
                rotate(&mut w, p, q, c, s, pc);
                rotate(&mut v, p, q, c, s, pc);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = w.iter().map(|c| norm_sqr(c).sqrt()).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let k = m.min(n);
    let sigma: Vec<f64> = order.iter().take(k).map(|&j| norms[j]).collect();
    let sigma_max = sigma.first().copied().unwrap_or(0.0);
    let negligible = sigma_max * (m.max(n) as f64) * f64::EPSILON;

    let mut u_cols: Vec<Vec<C64>> = Vec::with_capacity(m);
    for (slot, &j) in order.iter().take(k).enumerate() {
        if sigma[slot] > negligible && sigma[slot] > 0.0 {
            let inv = 1.0 / sigma[slot];
            u_cols.push(w[j].iter().map(|z| z * inv).collect());
        } else {
            break;
        }
    }
    complete_basis(&mut u_cols, m);

    let mut v_cols: Vec<Vec<C64>> = order.iter().map(|&j| v[j].clone()).collect();

    for (j, col) in u_cols.iter_mut().enumerate() {
        let lead = col
            .iter()
            .enumerate()
            .fold((0usize, -1.0f64), |best, (i, z)| {
                let mag = z.norm();
                if mag > best.1 {
                    (i, mag)
                } else {
                    best
                }
            })
            .0;
        let mag = col[lead].norm();
        if mag == 0.0 {
            continue;
        }
        let fix = col[lead].conj() / mag;
        col.iter_mut().for_each(|z| *z *= fix);
        if j < k {
            v_cols[j].iter_mut().for_each(|z| *z *= fix);
        }
    }

    Svd {
        u: CMatrix::from_columns(m, &u_cols),
        sigma,
        v: CMatrix::from_columns(n, &v_cols),
    }
}

fn rotate(cols: &mut [Vec<C64>], p: usize, q: usize, c: f64, s: f64, pc: C64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (cp, cq) = (&mut lo[p], &mut hi[0]);
    for (a, b) in cp.iter_mut().zip(cq.iter_mut()) {
        let bq = *b * pc;
        let na = *a * c - bq * s;
        let nb = *a * s + bq * c;
        *a = na;
        *b = nb;
    }
}

/// Extends an orthonormal set of columns to a basis of `C^m` by
/// Gram-Schmidt against the standard basis.
fn complete_basis(cols: &mut Vec<Vec<C64>>, m: usize) {
    while cols.len() < m {
        let mut best: Option<(f64, Vec<C64>)> = None;
        for e in 0..m {
            let mut cand = vec![C64::zero(); m];
            cand[e] = C64::new(1.0, 0.0);
            for _ in 0..2 {
                for c in cols.iter() {
                    let proj = inner(c, &cand);
                    for (x, y) in cand.iter_mut().zip(c) {
                        *x -= proj * y;
                    }
                }
            }
            let nrm = norm_sqr(&cand).sqrt();
            if best.as_ref().is_none_or(|(b, _)| nrm > *b) {
                best = Some((nrm, cand));
            }
        }
        let (nrm, mut cand) = best.expect("m > 0");
        let inv = 1.0 / nrm;
        cand.iter_mut().for_each(|z| *z *= inv);
        cols.push(cand);
    }
}
