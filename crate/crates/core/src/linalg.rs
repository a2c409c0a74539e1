//! Small dense linear algebra.
//!
//! Everything in this crate works with matrices of a handful of rows and
//! columns, so the routines here favour clarity over blocking or SIMD. The
//! SVD has a closed-form path for 2x2 inputs and falls back to one-sided
//! (Hestenes) Jacobi rotations otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative tolerance for [`numerical_rank`].
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Singular values below `PINV_RTOL * s_max` are treated as zero by [`pinv`].
pub const PINV_RTOL: f64 = 1e-12;

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMat")]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawMat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMat> for Mat {
    type Error = Error;

    fn try_from(raw: RawMat) -> Result<Self> {
        Mat::new(raw.rows, raw.cols, raw.data)
    }
}

impl Mat {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("empty matrix {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "empty matrix");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row slices. Panics on ragged input.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(rows.len(), cols, data).expect("invalid matrix literal")
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_cols(cols: &[&[f64]]) -> Self {
        let rows = cols.first().map_or(0, |c| c.len());
        assert!(cols.iter().all(|c| c.len() == rows), "ragged columns");
        let mut m = Self::zeros(rows, cols.len());
        for (j, c) in cols.iter().enumerate() {
            for (i, &v) in c.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Wraps a vector as a column matrix.
    pub fn column(v: &[f64]) -> Self {
        Self::from_cols(&[v])
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Mat) -> Result<Mat> {
        if self.cols != rhs.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Mat::zeros(self.rows, rhs.cols);
        matmul_into(self, rhs, &mut out);
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.cols != v.len() {
            return Err(Error::Shape(format!(
                "cannot apply {}x{} to a vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    pub fn scaled(&self, c: f64) -> Mat {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: f64, other: &Mat) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn sub(&self, other: &Mat) -> Result<Mat> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "cannot subtract {:?} from {:?}",
                other.shape(),
                self.shape()
            )));
        }
        let mut out = self.clone();
        out.axpy(-1.0, other);
        Ok(out)
    }

    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// `out = a * b` without allocating. Shapes must already agree.
pub(crate) fn matmul_into(a: &Mat, b: &Mat, out: &mut Mat) {
    debug_assert_eq!(a.cols, b.rows);
    debug_assert_eq!(out.shape(), (a.rows, b.cols));
    out.data.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..a.rows {
        for p in 0..a.cols {
            let aip = a.data[i * a.cols + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b.data[p * b.cols..(p + 1) * b.cols];
            let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn check_finite(a: &Mat) -> Result<()> {
    if a.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

/// Thin singular value decomposition `A = U diag(s) V^T`.
///
/// For an `m x n` input, `u` is `m x r`, `v` is `n x r` with `r = min(m, n)`.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: Mat,
    pub singular_values: Vec<f64>,
    pub v: Mat,
}

impl Svd {
    pub fn reconstruct(&self) -> Mat {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (j, s) in self.singular_values.iter().enumerate() {
                us[(i, j)] *= s;
            }
        }
        us.matmul(&self.v.transpose()).expect("svd factor shapes")
    }
}

pub fn svd(a: &Mat) -> Result<Svd> {
    check_finite(a)?;
    if a.shape() == (2, 2) {
        return Ok(svd_2x2(a));
    }
    if a.rows() >= a.cols() {
        Ok(svd_jacobi(a))
    } else {
        let t = svd_jacobi(&a.transpose());
        Ok(Svd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        })
    }
}

fn rotation(t: f64) -> Mat {
    let (s, c) = t.sin_cos();
    Mat::from_rows(&[&[c, -s], &[s, c]])
}

/// Closed form `A = R(phi) diag(p, q) R(theta)` with `p = Q + R`, `q = Q - R`.
fn svd_2x2(a: &Mat) -> Svd {
    let (m11, m12, m21, m22) = (a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
    let e = 0.5 * (m11 + m22);
    let f = 0.5 * (m11 - m22);
    let g = 0.5 * (m21 + m12);
    let h = 0.5 * (m21 - m12);
    let q = e.hypot(h);
    let r = f.hypot(g);
    let sum_angle = h.atan2(e);
    let diff_angle = g.atan2(f);
    let phi = 0.5 * (sum_angle + diff_angle);
    let theta = 0.5 * (sum_angle - diff_angle);

    let s1 = q + r;
    let mut s2 = q - r;
    let mut u = rotation(phi);
    if s2 < 0.0 {
        s2 = -s2;
        u[(0, 1)] = -u[(0, 1)];
        u[(1, 1)] = -u[(1, 1)];
    }
    Svd {
        u,
        singular_values: vec![s1, s2],
        v: rotation(-theta),
    }
}

/// One-sided Jacobi for `m >= n`.
fn svd_jacobi(a: &Mat) -> Svd {
    let (m, n) = a.shape();
    debug_assert!(m >= n);
    let mut w = a.clone();
    let mut v = Mat::identity(n);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for r in 0..m {
                    let (x, y) = (w[(r, i)], w[(r, j)]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..m {
                    let (x, y) = (w[(r, i)], w[(r, j)]);
                    w[(r, i)] = c * x - s * y;
                    w[(r, j)] = s * x + c * y;
                }
                for r in 0..n {
                    let (x, y) = (v[(r, i)], v[(r, j)]);
                    v[(r, i)] = c * x - s * y;
                    v[(r, j)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..n).map(|j| norm(&w.col(j))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));

    let mut u = Mat::zeros(m, n);
    let mut v_sorted = Mat::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    let scale = norms.iter().copied().fold(0.0, f64::max);
    for (k, &j) in order.iter().enumerate() {
        let sj = norms[j];
        s.push(sj);
        for r in 0..n {
            v_sorted[(r, k)] = v[(r, j)];
        }
        if sj > f64::EPSILON * scale && sj > 0.0 {
            for r in 0..m {
                u[(r, k)] = w[(r, j)] / sj;
            }
        }
    }
    complete_orthonormal_columns(&mut u, &s, scale);
    Svd {
        u,
        singular_values: s,
        v: v_sorted,
    }
}

/// Replaces the columns of `u` belonging to negligible singular values with
/// unit vectors orthogonal to the rest (Gram-Schmidt against the standard basis).
fn complete_orthonormal_columns(u: &mut Mat, s: &[f64], scale: f64) {
    let (m, n) = u.shape();
    for k in 0..n {
        if s[k] > f64::EPSILON * scale && s[k] > 0.0 {
            continue;
        }
        for e in 0..m {
            let mut cand = vec![0.0; m];
            cand[e] = 1.0;
            for other in 0..n {
                if other == k {
                    continue;
                }
                let col = u.col(other);
                let p = dot(&cand, &col);
                cand.iter_mut().zip(&col).for_each(|(c, o)| *c -= p * o);
            }
            let nc = norm(&cand);
            if nc > 1e-6 {
                for r in 0..m {
                    u[(r, k)] = cand[r] / nc;
                }
                break;
            }
        }
    }
}

pub fn singular_values(a: &Mat) -> Result<Vec<f64>> {
    Ok(svd(a)?.singular_values)
}

pub fn spectral_norm(a: &Mat) -> Result<f64> {
    Ok(singular_values(a)?[0])
}

pub fn frobenius_norm(a: &Mat) -> Result<f64> {
    check_finite(a)?;
    Ok(a.frobenius_sq().sqrt())
}

/// `||A||_F^2 / ||A||_2^2`; lies in `[1, min(rows, cols)]`.
pub fn stable_rank(a: &Mat) -> Result<f64> {
    let s = singular_values(a)?;
    if s[0] == 0.0 {
        return Err(Error::UndefinedStableRank);
    }
    let top = s[0];
    Ok(s.iter().map(|x| (x / top) * (x / top)).sum())
}

/// Number of singular values strictly above `rel_tol * s_max`.
pub fn numerical_rank(a: &Mat, rel_tol: f64) -> Result<usize> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "rank tolerance {rel_tol} outside (0, 1)"
        )));
    }
    let s = singular_values(a)?;
    if s[0] == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&x| x > rel_tol * s[0]).count())
}

/// Angle in `[0, pi]` between two nonzero vectors.
pub fn angle(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!(
            "vectors of length {} and {}",
            u.len(),
            v.len()
        )));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0).acos())
}

/// Moore-Penrose pseudoinverse.
pub fn pinv(a: &Mat) -> Result<Mat> {
    let Svd {
        u,
        singular_values: s,
        v,
    } = svd(a)?;
    let cutoff = PINV_RTOL * s[0];
    let mut out = Mat::zeros(a.cols(), a.rows());
    for (k, &sk) in s.iter().enumerate() {
        if sk <= cutoff || sk == 0.0 {
            continue;
        }
        for i in 0..a.cols() {
            let vik = v[(i, k)] / sk;
            for j in 0..a.rows() {
                out[(i, j)] += vik * u[(j, k)];
            }
        }
    }
    Ok(out)
}
