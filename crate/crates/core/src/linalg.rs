//! Small dense linear algebra kernels generic over the scalar type.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::num::{fabs, Real};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, v: &[T]) {
        for (i, &x) in v.iter().enumerate() {
            self[(i, j)] = x;
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Mat<T>) -> Mat<T> {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                for (o, &b) in orow.iter_mut().zip(other.row(k)) {
                    *o = *o + a * b;
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(fabs(x)))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl<T> Index<(usize, usize)> for Mat<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

#[inline]
pub fn norm2<T: Real>(a: &[T]) -> T {
    let scale = a.iter().fold(T::zero(), |m, &x| m.max(fabs(x)));
    if scale == T::zero() {
        return T::zero();
    }
    let s: T = a.iter().map(|&x| (x / scale) * (x / scale)).sum();
    scale * s.sqrt()
}

/// LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    lu: Mat<T>,
    perm: Vec<usize>,
}

impl<T: Real> Lu<T> {
    pub fn new(mut a: Mat<T>) -> Result<Self> {
        let n = a.rows;
        if n != a.cols {
            return Err(Error::Mismatch(format!("LU of non-square {}x{} matrix", a.rows, a.cols)));
        }
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs();
        for k in 0..n {
            let mut p = k;
            let mut best = fabs(a[(k, k)]);
            for i in k + 1..n {
                let v = fabs(a[(i, k)]);
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= scale * T::epsilon() * T::idx(n) || best == T::zero() {
                return Err(Error::Singular { condition: f64::INFINITY });
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    a.data.swap(p * n + j, k * n + j);
                }
            }
            let pivot = a[(k, k)];
            let (upper, lower) = a.data.split_at_mut((k + 1) * n);
            let prow = &upper[k * n + k + 1..k * n + n];
            for i in 0..n - k - 1 {
                let row = &mut lower[i * n..(i + 1) * n];
                let l = row[k] / pivot;
                row[k] = l;
                if l != T::zero() {
                    for (r, &u) in row[k + 1..].iter_mut().zip(prow) {
                        *r = *r - l * u;
                    }
                }
            }
        }
        Ok(Self { lu: a, perm })
    }

    pub fn dim(&self) -> usize {
        self.lu.rows
    }

    /// Ratio of largest to smallest pivot magnitude.
    pub fn pivot_ratio(&self) -> f64 {
        let n = self.lu.rows;
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..n {
            let v = fabs(self.lu[(i, i)]).to_f64_lossy();
            lo = lo.min(v);
            hi = hi.max(v);
        }
        hi / lo
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.rows;
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let s = dot(&row[..i], &x[..i]);
            x[i] = x[i] - s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let s = dot(&row[i + 1..], &x[i + 1..]);
            x[i] = (x[i] - s) / row[i];
        }
        x
    }

    /// Solves for every column of `b` at once.
    pub fn solve_columns(&self, b: &Mat<T>) -> Mat<T> {
        let n = self.lu.rows;
        let nc = b.cols;
        let mut x = Mat::zeros(n, nc);
        for (i, &p) in self.perm.iter().enumerate() {
            x.row_mut(i).copy_from_slice(b.row(p));
        }
        for i in 0..n {
            for k in 0..i {
                let l = self.lu[(i, k)];
                if l == T::zero() {
                    continue;
                }
                let (head, tail) = x.data.split_at_mut(i * nc);
                let src = &head[k * nc..(k + 1) * nc];
                for (d, &s) in tail[..nc].iter_mut().zip(src) {
                    *d = *d - l * s;
                }
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let u = self.lu[(i, k)];
                if u == T::zero() {
                    continue;
                }
                let (head, tail) = x.data.split_at_mut(k * nc);
                let dst = &mut head[i * nc..(i + 1) * nc];
                for (d, &s) in dst.iter_mut().zip(&tail[..nc]) {
                    *d = *d - u * s;
                }
            }
            let piv = self.lu[(i, i)];
            for d in x.row_mut(i) {
                *d = *d / piv;
            }
        }
        x
    }
}

/// Minimizes `‖A x - b‖₂` by Householder QR. Requires full column rank.
pub fn least_squares<T: Real>(a: &Mat<T>, b: &[T]) -> Result<Vec<T>> {
    let (m, n) = (a.rows, a.cols);
    if m < n || b.len() != m {
        return Err(Error::Mismatch(format!("least squares with {m}x{n} matrix and {} rhs", b.len())));
    }
    let mut r = a.clone();
    let mut y = b.to_vec();
    let scale = r.max_abs();
    for k in 0..n {
        let col: Vec<T> = (k..m).map(|i| r[(i, k)]).collect();
        let alpha = norm2(&col);
        if alpha <= scale * T::epsilon() || alpha == T::zero() {
            return Err(Error::Singular { condition: f64::INFINITY });
        }
        let alpha = if col[0] > T::zero() { -alpha } else { alpha };
        let mut v = col;
        v[0] = v[0] - alpha;
        let vnorm2 = dot(&v, &v);
        if vnorm2 == T::zero() {
            continue;
        }
        let two = T::lit(2.0);
        for j in k..n {
            let s: T = (k..m).map(|i| v[i - k] * r[(i, j)]).sum();
            let f = two * s / vnorm2;
            for i in k..m {
                r[(i, j)] = r[(i, j)] - f * v[i - k];
            }
        }
        let s: T = (k..m).map(|i| v[i - k] * y[i]).sum();
        let f = two * s / vnorm2;
        for i in k..m {
            y[i] = y[i] - f * v[i - k];
        }
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let s: T = (i + 1..n).map(|j| r[(i, j)] * x[j]).sum();
        x[i] = (y[i] - s) / r[(i, i)];
    }
    Ok(x)
}

/// Unrestarted GMRES for `A x = b` with relative tolerance `tol`.
pub fn gmres<T: Real, F>(apply: F, b: &[T], tol: T, max_iter: usize) -> Result<Vec<T>>
where
    F: Fn(&[T]) -> Vec<T>,
{
    let n = b.len();
    let beta = norm2(b);
    if beta == T::zero() {
        return Ok(vec![T::zero(); n]);
    }
    let mut basis: Vec<Vec<T>> = vec![b.iter().map(|&x| x / beta).collect()];
    let mut h: Vec<Vec<T>> = Vec::new();
    let mut cs: Vec<T> = Vec::new();
    let mut sn: Vec<T> = Vec::new();
    let mut g = vec![beta];
    let mut resid = beta;
    let limit = max_iter.min(n);
    for j in 0..limit {
        let mut w = apply(&basis[j]);
        let mut col = vec![T::zero(); j + 2];
        for _ in 0..2 {
            for (i, v) in basis.iter().enumerate() {
                let c = dot(&w, v);
                col[i] = col[i] + c;
                for (wk, &vk) in w.iter_mut().zip(v) {
                    *wk = *wk - c * vk;
                }
            }
        }
        let hn = norm2(&w);
        col[j + 1] = hn;
        for i in 0..j {
            let t = cs[i] * col[i] + sn[i] * col[i + 1];
            col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
            col[i] = t;
        }
        let d = (col[j] * col[j] + col[j + 1] * col[j + 1]).sqrt();
        let (c, s) = if d == T::zero() { (T::one(), T::zero()) } else { (col[j] / d, col[j + 1] / d) };
        col[j] = d;
        col[j + 1] = T::zero();
        cs.push(c);
        sn.push(s);
        let gj = g[j];
        g[j] = c * gj;
        g.push(-s * gj);
        resid = fabs(g[j + 1]);
        h.push(col);
        let done = resid <= tol * beta || hn == T::zero();
        if !done {
            basis.push(w.iter().map(|&x| x / hn).collect());
        }
        if done {
            let k = j + 1;
            let mut y = vec![T::zero(); k];
            for i in (0..k).rev() {
                let s: T = (i + 1..k).map(|l| h[l][i] * y[l]).sum();
                y[i] = (g[i] - s) / h[i][i];
            }
            let mut x = vec![T::zero(); n];
            for (yi, v) in y.iter().zip(&basis) {
                for (xk, &vk) in x.iter_mut().zip(v) {
                    *xk = *xk + *yi * vk;
                }
            }
            return Ok(x);
        }
    }
    Err(Error::KrylovStall { iterations: limit, residual: (resid / beta).to_f64_lossy() })
}
