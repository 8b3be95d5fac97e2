//! Validation-grade dense linear algebra: row-major matrices, Cholesky,
//! Householder tridiagonalization with implicit-shift QL, and a cyclic
//! Jacobi eigensolver kept as an independent reference.
//!
//! Estimators never touch this module; it exists so tests and the truth
//! reports can materialize operators the black box hides.

use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// A^T x without forming the transpose.
    pub fn t_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for i in 0..self.rows {
            axpy(&mut y, x[i], self.row(i));
        }
        y
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows);
        let mut c = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a != 0.0 {
                    let (ci, ok) = (i, k);
                    let dst = c.row_mut(ci);
                    axpy(dst, a, other.row(ok));
                }
            }
        }
        c
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scale_in_place(&mut self, a: f64) {
        for v in &mut self.data {
            *v *= a;
        }
    }

    pub fn add_scaled(&mut self, a: f64, other: &Mat) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
    }

    /// Averages A with A^T; the pencil transform is symmetric only up to
    /// rounding while the eigensolvers assume exact stored symmetry.
    pub fn symmetrize(&mut self) {
        assert_eq!(self.rows, self.cols);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = 0.5 * (self.get(i, j) + self.get(j, i));
                self.set(i, j, v);
                self.set(j, i, v);
            }
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(dst: &mut [f64], a: f64, src: &[f64]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src) {
        *d += a * s;
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(a: &Mat) -> Result<Mat> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut diag = a.get(j, j) - dot(&l.row(j)[..j], &l.row(j)[..j]);
        if diag <= 0.0 || !diag.is_finite() {
            return Err(Error::SingularOperator(format!(
                "Cholesky failed at pivot {j}: {diag}"
            )));
        }
        diag = diag.sqrt();
        l.set(j, j, diag);
        for i in (j + 1)..n {
            let s = a.get(i, j) - dot(&l.row(i)[..j], &l.row(j)[..j]);
            l.set(i, j, s / diag);
        }
    }
    Ok(l)
}

/// Solves L Y = B for Y with L lower triangular (row-wise substitution).
pub fn forward_solve_matrix(l: &Mat, b: &Mat) -> Mat {
    let n = l.nrows();
    assert_eq!(b.nrows(), n);
    let mut y = b.clone();
    for i in 0..n {
        // y_row_i = (b_row_i - sum_{k<i} L[i][k] y_row_k) / L[i][i]
        let (head, tail) = y.data.split_at_mut(i * y.cols);
        let row_i = &mut tail[..y.cols];
        for k in 0..i {
            let lik = l.get(i, k);
            if lik != 0.0 {
                let row_k = &head[k * b.ncols()..(k + 1) * b.ncols()];
                for (d, s) in row_i.iter_mut().zip(row_k) {
                    *d -= lik * s;
                }
            }
        }
        let inv = 1.0 / l.get(i, i);
        for v in row_i.iter_mut() {
            *v *= inv;
        }
    }
    y
}

/// Solves L^T x = b for a single right-hand side (back substitution).
pub fn back_solve_transposed(l: &Mat, b: &[f64]) -> Vec<f64> {
    let n = l.nrows();
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= l.get(k, i) * x[k];
        }
        x[i] = s / l.get(i, i);
    }
    x
}

fn sign_like(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Householder reduction to tridiagonal form, eigenvalue-only variant.
///
/// Works on a full symmetric copy with rank-2 row updates so the hot loops
/// stay contiguous; returns the diagonal and subdiagonal.
fn tridiagonalize_novecs(a: &mut Mat) -> (Vec<f64>, Vec<f64>) {
    let n = a.nrows();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in (1..n).rev() {
        let l = i - 1;
        if l == 0 {
            e[i] = a.get(i, 0);
            continue;
        }
        let m = l + 1; // active block size
        let scale: f64 = a.row(i)[..m].iter().map(|x| x.abs()).sum();
        if scale == 0.0 {
            e[i] = a.get(i, l);
            continue;
        }
        let inv_scale = 1.0 / scale;
        let mut h = 0.0;
        for k in 0..m {
            u[k] = a.get(i, k) * inv_scale;
            h += u[k] * u[k];
        }
        let f = u[l];
        let g = -sign_like(h.sqrt(), f);
        e[i] = scale * g;
        h -= f * g;
        u[l] = f - g;
        // p = A u / h over the active block, then w = p - (p.u / 2h) u
        for (j, pj) in w.iter_mut().enumerate().take(m) {
            *pj = dot(&a.row(j)[..m], &u[..m]) / h;
        }
        let kappa = dot(&w[..m], &u[..m]) / (2.0 * h);
        for j in 0..m {
            w[j] -= kappa * u[j];
        }
        // A <- A - u w^T - w u^T on the active block
        for j in 0..m {
            let (uj, wj) = (u[j], w[j]);
            let row = &mut a.row_mut(j)[..m];
            for k in 0..m {
                row[k] -= uj * w[k] + wj * u[k];
            }
        }
    }
    for i in 0..n {
        d[i] = a.get(i, i);
    }
    (d, e)
}

/// Householder reduction with accumulation of the orthogonal transform,
/// following the classic EISPACK/Numerical Recipes tred2. On return the
/// matrix holds Q with eigen-basis columns; d and e hold the tridiagonal.
fn tred2_vecs(a: &mut Mat, d: &mut [f64], e: &mut [f64]) {
    let n = a.nrows();
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let scale: f64 = a.row(i)[..=l].iter().map(|x| x.abs()).sum();
            if scale == 0.0 {
                e[i] = a.get(i, l);
            } else {
                let inv = 1.0 / scale;
                for k in 0..=l {
                    let v = a.get(i, k) * inv;
                    a.set(i, k, v);
                    h += v * v;
                }
                let f = a.get(i, l);
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                a.set(i, l, f - g);
                let mut f_acc = 0.0;
                for j in 0..=l {
                    a.set(j, i, a.get(i, j) / h);
                    let mut g_acc = 0.0;
                    for k in 0..=j {
                        g_acc += a.get(j, k) * a.get(i, k);
                    }
                    for k in (j + 1)..=l {
                        g_acc += a.get(k, j) * a.get(i, k);
                    }
                    e[j] = g_acc / h;
                    f_acc += e[j] * a.get(i, j);
                }
                let hh = f_acc / (h + h);
                for j in 0..=l {
                    let f = a.get(i, j);
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        let v = a.get(j, k) - (f * e[k] + g * a.get(i, k));
                        a.set(j, k, v);
                    }
                }
            }
        } else {
            e[i] = a.get(i, l);
        }
        d[i] = h;
    }
    d[0] = 0.0;
    e[0] = 0.0;
    for i in 0..n {
        if d[i] != 0.0 {
            for j in 0..i {
                let mut g = 0.0;
                for k in 0..i {
                    g += a.get(i, k) * a.get(k, j);
                }
                for k in 0..i {
                    let v = a.get(k, j) - g * a.get(k, i);
                    a.set(k, j, v);
                }
            }
        }
        d[i] = a.get(i, i);
        a.set(i, i, 1.0);
        for j in 0..i {
            a.set(j, i, 0.0);
            a.set(i, j, 0.0);
        }
    }
}

/// Implicit-shift QL on a tridiagonal (d, e); rotations are accumulated
/// into the columns of `z` when present.
fn tql2(d: &mut [f64], e: &mut [f64], mut z: Option<&mut Mat>) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 50 {
                return Err(Error::Domain(
                    "tridiagonal QL failed to converge in 50 iterations".into(),
                ));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + sign_like(r, g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(zm) = z.as_deref_mut() {
                    let ncols = zm.ncols();
                    for k in 0..zm.nrows() {
                        let base = k * ncols;
                        f = zm.data[base + i + 1];
                        zm.data[base + i + 1] = s * zm.data[base + i] + c * f;
                        zm.data[base + i] = c * zm.data[base + i] - s * f;
                    }
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Eigenvalues of a symmetric matrix, descending. Consumes the input copy.
pub fn sym_eigvals(mut a: Mat) -> Result<Vec<f64>> {
    assert_eq!(a.nrows(), a.ncols());
    let (mut d, mut e) = tridiagonalize_novecs(&mut a);
    tql2(&mut d, &mut e, None)?;
    d.sort_by(|x, y| y.partial_cmp(x).unwrap());
    Ok(d)
}

/// Full symmetric eigendecomposition, eigenvalues descending with matching
/// eigenvectors (each returned as its own vector).
pub fn sym_eigen(a: &Mat) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut work = a.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2_vecs(&mut work, &mut d, &mut e);
    tql2(&mut d, &mut e, Some(&mut work))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let eigenvectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&j| (0..n).map(|k| work.get(k, j)).collect())
        .collect();
    Ok((eigenvalues, eigenvectors))
}

/// Cyclic Jacobi eigensolver, the independent reference implementation.
///
/// Sweeps until the off-diagonal Frobenius mass drops below 1e-12 of the
/// total Frobenius norm. Quadratic-cost per sweep; intended for the small
/// instances that validate the QL path.
pub fn jacobi_eigen(a: &Mat) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut m = a.clone();
    let mut v = Mat::identity(n);
    let total = m.frobenius().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += 2.0 * m.get(i, j) * m.get(i, j);
            }
        }
        if off.sqrt() <= 1e-12 * total {
            let d: Vec<f64> = (0..n).map(|i| m.get(i, i)).collect();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&x, &y| d[y].partial_cmp(&d[x]).unwrap());
            let vals: Vec<f64> = order.iter().map(|&i| d[i]).collect();
            let vecs: Vec<Vec<f64>> = order
                .iter()
                .map(|&j| (0..n).map(|k| v.get(k, j)).collect())
                .collect();
            return Ok((vals, vecs));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m.get(k, p);
                    let akq = m.get(k, q);
                    m.set(k, p, c * akp - s * akq);
                    m.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = m.get(p, k);
                    let aqk = m.get(q, k);
                    m.set(p, k, c * apk - s * aqk);
                    m.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    Err(Error::Domain(
        "Jacobi eigensolver failed to converge in 100 sweeps".into(),
    ))
}
