//! Dense complex linear algebra.
//!
//! Matrices are row-major `Vec<Complex<T>>`. The LU factorization is a plain
//! dense partial-pivoting factorization that skips exact zeros and records
//! the nonzero envelope of its factors, so windows of exponentially decaying
//! long-range operators factor in time proportional to their effective band
//! while the storage stays dense. Skipping exact zeros also keeps tiny
//! entries of inverses free of rounding noise from unrelated entries.

use num_complex::Complex;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::scalar::{abs1, Real, C};

#[derive(Clone, Debug, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<C<T>>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_real_diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C::new(d, T::zero());
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

    pub fn row(&self, i: usize) -> &[C<T>] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [C<T>] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<C<T>> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn as_slice(&self) -> &[C<T>] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(C<T>) -> C<T>) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    /// Product skipping exact zeros of `self`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a.is_zero() {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o = *o + a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[C<T>]) -> Vec<C<T>> {
        assert_eq!(self.cols, x.len());
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(x)
                    .filter(|(a, _)| !a.is_zero())
                    .fold(C::zero(), |acc, (&a, &b)| acc + a * b)
            })
            .collect()
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect(),
        }
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().map(|z| z.norm()).fold(T::zero(), T::max)
    }

    /// Maximum absolute column sum.
    pub fn norm_1(&self) -> T {
        let mut sums = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            for (s, z) in sums.iter_mut().zip(self.row(i)) {
                *s = *s + z.norm();
            }
        }
        sums.into_iter().fold(T::zero(), T::max)
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> T {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|z| z.norm()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    /// `√(‖A‖₁ ‖A‖∞)`, an upper bound for the spectral norm.
    pub fn norm_bound(&self) -> T {
        (self.norm_1() * self.norm_inf()).sqrt()
    }

    /// Spectral norm by power iteration on `A*A`.
    pub fn norm_2(&self, iterations: usize) -> T {
        if self.data.is_empty() {
            return T::zero();
        }
        let n = self.cols;
        let scale = T::one() / T::from_len(n).sqrt();
        let mut v: Vec<C<T>> = (0..n)
            .map(|j| C::new(scale * (T::one() + T::lit(0.01) * T::from_len(j % 7)), T::zero()))
            .collect();
        let adj = self.adjoint();
        let mut sigma = T::zero();
        for _ in 0..iterations.max(1) {
            let w = adj.mul_vec(&self.mul_vec(&v));
            let nrm = w.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
            if nrm == T::zero() {
                return T::zero();
            }
            sigma = nrm.sqrt();
            v = w.into_iter().map(|z| z / nrm).collect();
        }
        sigma
    }

    /// `max |A(i,j) − conj(A(j,i))|`.
    pub fn hermitian_residual(&self) -> T {
        let mut r = T::zero();
        for i in 0..self.rows {
            for j in 0..self.cols {
                r = r.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        r
    }

    /// Last column index holding a nonzero entry in each row.
    fn row_ends(&self) -> Vec<usize> {
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .rposition(|z| !z.is_zero())
                    .unwrap_or(0)
            })
            .collect()
    }
}

impl<T> std::ops::Index<(usize, usize)> for Mat<T> {
    type Output = C<T>;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C<T> {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C<T> {
        &mut self.data[i * self.cols + j]
    }
}

/// `P A = L U` with unit lower `L`, stored in place.
#[derive(Clone, Debug)]
pub struct Lu<T> {
    n: usize,
    lu: Mat<T>,
    /// `perm[i]` is the original row placed at position `i`.
    perm: Vec<usize>,
    /// Last nonzero row of each column of `L`.
    l_col_end: Vec<usize>,
    /// First nonzero row of each column of `U`.
    u_col_start: Vec<usize>,
    anorm_1: T,
}

impl<T: Real> Lu<T> {
    pub fn factor(a: &Mat<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::InvalidInput("LU of a non-square matrix".into()));
        }
        let n = a.rows();
        let anorm_1 = a.norm_1();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut row_end = lu.row_ends();

        for k in 0..n {
            let mut p = k;
            let mut best = abs1(lu[(k, k)]);
            for i in k + 1..n {
                let v = abs1(lu[(i, k)]);
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == T::zero() {
                return Err(Error::IllConditioned {
                    condition: f64::INFINITY,
                    cap: f64::INFINITY,
                });
            }
            if p != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                row_end.swap(k, p);
            }
            let pivot = lu[(k, k)];
            let end = row_end[k];
            let (head, tail) = lu.data.split_at_mut((k + 1) * n);
            let pivot_row = &head[k * n..(k + 1) * n];
            for i in k + 1..n {
                let row = &mut tail[(i - k - 1) * n..(i - k) * n];
                if row[k].is_zero() {
                    continue;
                }
                let l = row[k] / pivot;
                row[k] = l;
                if end > k {
                    for (x, &u) in row[k + 1..=end].iter_mut().zip(&pivot_row[k + 1..=end]) {
                        *x = *x - l * u;
                    }
                    row_end[i] = row_end[i].max(end);
                }
            }
        }

        let l_col_end = (0..n)
            .map(|j| (j + 1..n).rev().find(|&i| !lu[(i, j)].is_zero()).unwrap_or(j))
            .collect();
        let u_col_start = (0..n)
            .map(|j| (0..j).find(|&i| !lu[(i, j)].is_zero()).unwrap_or(j))
            .collect();
        Ok(Self {
            n,
            lu,
            perm,
            l_col_end,
            u_col_start,
            anorm_1,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [C<T>]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut y: Vec<C<T>> = self.perm.iter().map(|&p| b[p]).collect();
        for k in 0..n {
            let yk = y[k];
            if yk.is_zero() {
                continue;
            }
            for i in k + 1..=self.l_col_end[k] {
                y[i] = y[i] - self.lu[(i, k)] * yk;
            }
        }
        for k in (0..n).rev() {
            if y[k].is_zero() {
                continue;
            }
            let xk = y[k] / self.lu[(k, k)];
            y[k] = xk;
            for i in self.u_col_start[k]..k {
                y[i] = y[i] - self.lu[(i, k)] * xk;
            }
        }
        b.copy_from_slice(&y);
    }

    /// Solves `A* x = b` in place.
    pub fn solve_adjoint_in_place(&self, b: &mut [C<T>]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        // U* z = b
        for k in 0..n {
            let mut s = b[k];
            for i in self.u_col_start[k]..k {
                s = s - self.lu[(i, k)].conj() * b[i];
            }
            b[k] = s / self.lu[(k, k)].conj();
        }
        // L* w = z
        for k in (0..n).rev() {
            let mut s = b[k];
            for i in k + 1..=self.l_col_end[k] {
                s = s - self.lu[(i, k)].conj() * b[i];
            }
            b[k] = s;
        }
        let mut x = vec![C::zero(); n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = b[i];
        }
        b.copy_from_slice(&x);
    }

    /// Hager–Higham estimate of `‖A⁻¹‖₁`.
    pub fn inverse_norm_1_estimate(&self) -> T {
        let n = self.n;
        if n == 0 {
            return T::zero();
        }
        let nf = T::from_len(n);
        let mut x = vec![C::new(T::one() / nf, T::zero()); n];
        self.solve_in_place(&mut x);
        let mut est = x.iter().map(|z| z.norm()).sum::<T>();
        let mut last_j = usize::MAX;
        for _ in 0..5 {
            let mut z: Vec<C<T>> = x
                .iter()
                .map(|&v| {
                    let a = v.norm();
                    if a == T::zero() {
                        C::one()
                    } else {
                        v / a
                    }
                })
                .collect();
            self.solve_adjoint_in_place(&mut z);
            let (j, zmax) = z
                .iter()
                .enumerate()
                .map(|(j, v)| (j, v.norm()))
                .fold((0, T::zero()), |acc, v| if v.1 > acc.1 { v } else { acc });
            if j == last_j || zmax <= z.iter().map(|v| v.norm()).sum::<T>() / nf {
                break;
            }
            last_j = j;
            x = vec![C::zero(); n];
            x[j] = C::one();
            self.solve_in_place(&mut x);
            let new_est = x.iter().map(|z| z.norm()).sum::<T>();
            if new_est <= est {
                break;
            }
            est = new_est;
        }
        // Higham's alternating-sign safeguard
        let mut alt: Vec<C<T>> = (0..n)
            .map(|i| {
                let sign = if i % 2 == 0 { T::one() } else { -T::one() };
                let v = T::one() + T::from_len(i) / T::from_len((n - 1).max(1));
                C::new(sign * v, T::zero())
            })
            .collect();
        self.solve_in_place(&mut alt);
        let alt_est = T::two() * alt.iter().map(|z| z.norm()).sum::<T>() / (T::lit(3.0) * nf);
        est.max(alt_est)
    }

    /// Estimated 1-norm condition number.
    pub fn condition_estimate(&self) -> T {
        self.anorm_1 * self.inverse_norm_1_estimate()
    }

    /// Explicit inverse, optionally with one step of iterative refinement
    /// per column against the original matrix.
    pub fn inverse(&self, refine_against: Option<&Mat<T>>) -> Mat<T> {
        let n = self.n;
        let mut inv = Mat::zeros(n, n);
        let mut col = vec![C::zero(); n];
        let mut resid = vec![C::zero(); n];
        let row_span = refine_against.map(|a| {
            (0..n)
                .map(|i| {
                    let r = a.row(i);
                    let first = r.iter().position(|z| !z.is_zero()).unwrap_or(0);
                    let last = r.iter().rposition(|z| !z.is_zero()).unwrap_or(0);
                    (first, last)
                })
                .collect::<Vec<_>>()
        });
        for j in 0..n {
            col.iter_mut().for_each(|z| *z = C::zero());
            col[j] = C::one();
            self.solve_in_place(&mut col);
            if let (Some(a), Some(span)) = (refine_against, row_span.as_ref()) {
                for i in 0..n {
                    let (first, last) = span[i];
                    let mut s = if i == j { C::one() } else { C::zero() };
                    for k in first..=last {
                        s = s - a[(i, k)] * col[k];
                    }
                    resid[i] = s;
                }
                self.solve_in_place(&mut resid);
                for (c, r) in col.iter_mut().zip(&resid) {
                    *c = *c + *r;
                }
            }
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }
}

/// `max |A·X − I|` entrywise.
pub fn inverse_residual<T: Real>(a: &Mat<T>, x: &Mat<T>) -> T {
    let prod = a.matmul(x);
    let mut r = T::zero();
    for i in 0..prod.rows() {
        for j in 0..prod.cols() {
            let target = if i == j { C::one() } else { C::zero() };
            r = r.max((prod[(i, j)] - target).norm());
        }
    }
    r
}

/// Eigen-decomposition of a Hermitian matrix.
///
/// Householder reduction to a real symmetric tridiagonal matrix followed by
/// implicit QL with Wilkinson shifts. Eigenvalues are ascending; column `k`
/// of the returned matrix is the eigenvector of eigenvalue `k`.
pub fn hermitian_eigen<T: Real>(a: &Mat<T>) -> Result<(Vec<T>, Mat<T>)> {
    if !a.is_square() {
        return Err(Error::InvalidInput("eigen-decomposition of a non-square matrix".into()));
    }
    let n = a.rows();
    if n == 0 {
        return Ok((Vec::new(), Mat::zeros(0, 0)));
    }
    let mut h = a.clone();
    // reflectors v_k acting on indices k+1..n, with H_k = I − 2 v v*
    let mut reflectors: Vec<Option<Vec<C<T>>>> = Vec::with_capacity(n.saturating_sub(2));
    for k in 0..n.saturating_sub(2) {
        let m = n - k - 1;
        let x: Vec<C<T>> = (0..m).map(|i| h[(k + 1 + i, k)]).collect();
        let tail_norm = x[1..].iter().map(|z| z.norm_sqr()).sum::<T>();
        if tail_norm == T::zero() {
            reflectors.push(None);
            continue;
        }
        let xnorm = (x[0].norm_sqr() + tail_norm).sqrt();
        let phase = if x[0].is_zero() {
            C::one()
        } else {
            x[0] / x[0].norm()
        };
        let alpha = -phase * xnorm;
        let mut v = x;
        v[0] = v[0] - alpha;
        let vnorm = v.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
        v.iter_mut().for_each(|z| *z = *z / vnorm);

        // p = A v on the trailing block, q = p − (v* p) v, A −= 2 v q* + 2 q v*
        let off = k + 1;
        let mut p = vec![C::<T>::new(T::zero(), T::zero()); m];
        for i in 0..m {
            let row = &h.row(off + i)[off..];
            p[i] = row.iter().zip(&v).fold(C::<T>::new(T::zero(), T::zero()), |acc, (&a, &b)| acc + a * b);
        }
        let kappa = v.iter().zip(&p).fold(C::<T>::new(T::zero(), T::zero()), |acc, (a, &b)| acc + a.conj() * b);
        let q: Vec<C<T>> = p.iter().zip(&v).map(|(&pi, &vi)| pi - kappa * vi).collect();
        let two = T::two();
        for i in 0..m {
            let vi = v[i];
            let qi = q[i];
            let row = &mut h.row_mut(off + i)[off..];
            for j in 0..m {
                row[j] = row[j] - (vi * q[j].conj() + qi * v[j].conj()).scale(two);
            }
        }
        // the column below the subdiagonal is annihilated
        h[(k + 1, k)] = alpha;
        h[(k, k + 1)] = alpha.conj();
        for i in k + 2..n {
            h[(i, k)] = C::zero();
            h[(k, i)] = C::zero();
        }
        reflectors.push(Some(v));
    }

    let mut diag: Vec<T> = (0..n).map(|i| h[(i, i)].re).collect();
    let mut off = vec![T::zero(); n];
    // unitary diagonal making the subdiagonal real and nonnegative
    let mut phases = vec![C::<T>::one(); n];
    for k in 0..n - 1 {
        let e = h[(k + 1, k)];
        let r = e.norm();
        off[k] = r;
        phases[k + 1] = if r == T::zero() {
            phases[k]
        } else {
            phases[k] * e / r
        };
    }

    let mut z = vec![T::zero(); n * n];
    for i in 0..n {
        z[i * n + i] = T::one();
    }
    tridiagonal_ql(&mut diag, &mut off, &mut z, n)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).unwrap_or(std::cmp::Ordering::Equal));
    let values: Vec<T> = order.iter().map(|&i| diag[i]).collect();

    let mut vectors = Mat::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        let mut y: Vec<C<T>> = (0..n).map(|i| phases[i].scale(z[i * n + src])).collect();
        for (k, refl) in reflectors.iter().enumerate().rev() {
            if let Some(v) = refl {
                let off = k + 1;
                let dot = v
                    .iter()
                    .zip(&y[off..])
                    .fold(C::zero(), |acc, (a, &b)| acc + a.conj() * b);
                let two_dot = dot.scale(T::two());
                for (yi, &vi) in y[off..].iter_mut().zip(v) {
                    *yi = *yi - vi * two_dot;
                }
            }
        }
        for i in 0..n {
            vectors[(i, col)] = y[i];
        }
    }
    Ok((values, vectors))
}

/// Implicit QL on a symmetric tridiagonal matrix (`diag`, subdiagonal `off`
/// with `off[k]` coupling `k` and `k+1`), accumulating rotations into the
/// row-major `z`.
fn tridiagonal_ql<T: Real>(diag: &mut [T], off: &mut [T], z: &mut [T], n: usize) -> Result<()> {
    const MAX_ITER: usize = 60;
    // shift so e[i] couples i-1 and i as in the classical formulation
    let mut e = vec![T::zero(); n];
    e[..n - 1].copy_from_slice(&off[..n - 1]);
    let eps = T::epsilon();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if e[m].abs() <= eps * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_ITER {
                return Err(Error::ConvergenceFailure { iterations: MAX_ITER });
            }
            let mut g = (diag[l + 1] - diag[l]) / (T::two() * e[l]);
            let mut r = g.hypot(T::one());
            g = diag[m] - diag[l] + e[l] / (g + r.copysign(g));
            let mut s = T::one();
            let mut c = T::one();
            let mut p = T::zero();
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    diag[i + 1] = diag[i + 1] - p;
                    e[m] = T::zero();
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + T::two() * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    let zk1 = z[k * n + i + 1];
                    let zk = z[k * n + i];
                    z[k * n + i + 1] = s * zk + c * zk1;
                    z[k * n + i] = c * zk - s * zk1;
                }
            }
            if deflated {
                continue;
            }
            diag[l] = diag[l] - p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    off.copy_from_slice(&e);
    Ok(())
}

/// Complex number from a real.
#[inline]
pub fn re<T: Real>(x: T) -> C<T> {
    Complex::new(x, T::zero())
}
