//! Small dense linear algebra.
//!
//! Every matrix in this crate is tiny (the largest is the block variable of the
//! certificate solver, at most a few dozen rows), so a row-major `Vec` with
//! textbook factorizations is all that is needed.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{CrbError, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row vectors; all rows must share one length.
    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(CrbError::DimensionMismatch {
                expected: cols,
                got: bad.len(),
                context: "matrix row length",
            });
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn diag(values: &[S]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn column(values: &[S]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn outer(a: &[S], b: &[S]) -> Self {
        Self::from_fn(a.len(), b.len(), |i, j| a[i] * b[j])
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
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<S> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<S>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, k: S) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * k).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn matvec(&self, v: &[S]) -> Vec<S> {
        assert_eq!(self.cols, v.len(), "matvec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `Aᵀ v`.
    pub fn tr_matvec(&self, v: &[S]) -> Vec<S> {
        assert_eq!(self.rows, v.len(), "tr_matvec dimension mismatch");
        let mut out = vec![S::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        out
    }

    /// `uᵀ A v`.
    pub fn bilinear(&self, u: &[S], v: &[S]) -> S {
        dot(u, &self.matvec(v))
    }

    pub fn trace(&self) -> S {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Frobenius inner product `tr(Aᵀ B)`.
    pub fn frob_dot(&self, other: &Self) -> S {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        dot(&self.data, &other.data)
    }

    pub fn frobenius_norm(&self) -> S {
        self.data.iter().map(|&x| x * x).sum::<S>().sqrt()
    }

    pub fn max_abs(&self) -> S {
        self.data.iter().fold(S::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> S {
        assert!(self.is_square());
        let mut worst = S::zero();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// `(A + Aᵀ) / 2`.
    pub fn symmetrize(&self) -> Self {
        let half = S::of(0.5);
        Self::from_fn(self.rows, self.cols, |i, j| {
            (self[(i, j)] + self[(j, i)]) * half
        })
    }

    /// Copies `block` into `self` with its top-left corner at `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &Self) {
        for i in 0..block.rows {
            for j in 0..block.cols {
                self[(r0 + i, c0 + j)] = block[(i, j)];
            }
        }
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn cast<T: Scalar>(&self) -> Mat<T> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| T::of(x.to_f64_lossy())).collect(),
        }
    }
}

impl<S> Index<(usize, usize)> for Mat<S> {
    type Output = S;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &S {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<S> IndexMut<(usize, usize)> for Mat<S> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl<S: Scalar> Add for &Mat<S> {
    type Output = Mat<S>;

    fn add(self, rhs: &Mat<S>) -> Mat<S> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect(),
        }
    }
}

impl<S: Scalar> Sub for &Mat<S> {
    type Output = Mat<S>;

    fn sub(self, rhs: &Mat<S>) -> Mat<S> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect(),
        }
    }
}

impl<S: Scalar> Mul for &Mat<S> {
    type Output = Mat<S>;

    fn mul(self, rhs: &Mat<S>) -> Mat<S> {
        assert_eq!(self.cols, rhs.rows, "matmul dimension mismatch");
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == S::zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        out
    }
}

impl<S: Scalar> Serialize for Mat<S> {
    fn serialize<Ser: Serializer>(&self, serializer: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de, S: Scalar> Deserialize<'de> for Mat<S> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<S>>::deserialize(deserializer)?;
        Mat::from_rows(&rows).map_err(D::Error::custom)
    }
}

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm<S: Scalar>(a: &[S]) -> S {
    dot(a, a).sqrt()
}

/// Lower Cholesky factor `L` with `A = L Lᵀ`.
pub fn cholesky<S: Scalar>(a: &Mat<S>) -> Result<Mat<S>> {
    if !a.is_square() {
        return Err(CrbError::NotPositiveDefinite("matrix is not square"));
    }
    let n = a.rows();
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > S::zero()) || !diag.is_finite() {
            return Err(CrbError::NotPositiveDefinite("non-positive pivot in Cholesky"));
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Solves `L y = b` for lower-triangular `L`.
pub fn forward_substitute<S: Scalar>(l: &Mat<S>, b: &[S]) -> Vec<S> {
    let n = l.rows();
    let mut y = vec![S::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

/// Solves `Lᵀ x = y` for lower-triangular `L`.
pub fn back_substitute_transposed<S: Scalar>(l: &Mat<S>, y: &[S]) -> Vec<S> {
    let n = l.rows();
    let mut x = vec![S::zero(); n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

pub fn cholesky_solve<S: Scalar>(l: &Mat<S>, b: &[S]) -> Vec<S> {
    back_substitute_transposed(l, &forward_substitute(l, b))
}

/// Inverse of a symmetric positive definite matrix, symmetrized on output.
pub fn inverse_spd<S: Scalar>(a: &Mat<S>) -> Result<Mat<S>> {
    let l = cholesky(a)?;
    let n = a.rows();
    let mut inv = Mat::zeros(n, n);
    let mut e = vec![S::zero(); n];
    for j in 0..n {
        e.iter_mut().for_each(|x| *x = S::zero());
        e[j] = S::one();
        let col = cholesky_solve(&l, &e);
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
    }
    Ok(inv.symmetrize())
}

/// LU factorization with partial pivoting, used for general square solves.
#[derive(Clone, Debug)]
pub struct Lu<S> {
    lu: Mat<S>,
    perm: Vec<usize>,
}

impl<S: Scalar> Lu<S> {
    pub fn new(a: &Mat<S>) -> Result<Self> {
        if !a.is_square() {
            return Err(CrbError::InvalidParameter("LU of a non-square matrix".into()));
        }
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs().max(S::min_positive_value());
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, S::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot <= scale * S::epsilon() * S::of(n as f64) {
                return Err(CrbError::NotPositiveDefinite("singular matrix in LU"));
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
            }
            for i in (k + 1)..n {
                let f = lu[(i, k)] / lu[(k, k)];
                lu[(i, k)] = f;
                for j in (k + 1)..n {
                    let u = lu[(k, j)];
                    lu[(i, j)] -= f * u;
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn solve(&self, b: &[S]) -> Vec<S> {
        let n = self.lu.rows();
        let mut x: Vec<S> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                let l = self.lu[(i, k)];
                x[i] = x[i] - l * x[k];
            }
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let u = self.lu[(i, k)];
                x[i] = x[i] - u * x[k];
            }
            x[i] /= self.lu[(i, i)];
        }
        x
    }

    pub fn inverse(&self) -> Mat<S> {
        let n = self.lu.rows();
        let mut inv = Mat::zeros(n, n);
        for j in 0..n {
            let mut e = vec![S::zero(); n];
            e[j] = S::one();
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }
}

pub fn inverse<S: Scalar>(a: &Mat<S>) -> Result<Mat<S>> {
    Ok(Lu::new(a)?.inverse())
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct SymEigen<S> {
    /// Ascending eigenvalues.
    pub values: Vec<S>,
    /// Orthonormal eigenvectors stored as columns, in the order of `values`.
    pub vectors: Mat<S>,
}

impl<S: Scalar> SymEigen<S> {
    /// Cyclic Jacobi rotations on the symmetrized input.
    pub fn new(a: &Mat<S>) -> Self {
        assert!(a.is_square(), "eigen-decomposition of a non-square matrix");
        let n = a.rows();
        let mut m = a.symmetrize();
        let mut v = Mat::identity(n);
        let scale = m.frobenius_norm();
        if n > 1 && scale > S::zero() {
            let threshold = scale * S::epsilon() * S::of(0.5);
            for _sweep in 0..100 {
                let mut off = S::zero();
                for p in 0..n {
                    for q in (p + 1)..n {
                        off += m[(p, q)] * m[(p, q)];
                    }
                }
                if off.sqrt() <= threshold {
                    break;
                }
                for p in 0..n {
                    for q in (p + 1)..n {
                        let apq = m[(p, q)];
                        if apq == S::zero() {
                            continue;
                        }
                        let theta = (m[(q, q)] - m[(p, p)]) / (S::of(2.0) * apq);
                        let t = theta.signum() / (theta.abs() + (theta * theta + S::one()).sqrt());
                        let c = S::one() / (t * t + S::one()).sqrt();
                        let s = t * c;
                        for k in 0..n {
                            let mkp = m[(k, p)];
                            let mkq = m[(k, q)];
                            m[(k, p)] = c * mkp - s * mkq;
                            m[(k, q)] = s * mkp + c * mkq;
                        }
                        for k in 0..n {
                            let mpk = m[(p, k)];
                            let mqk = m[(q, k)];
                            m[(p, k)] = c * mpk - s * mqk;
                            m[(q, k)] = s * mpk + c * mqk;
                        }
                        for k in 0..n {
                            let vkp = v[(k, p)];
                            let vkq = v[(k, q)];
                            v[(k, p)] = c * vkp - s * vkq;
                            v[(k, q)] = s * vkp + c * vkq;
                        }
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| m[(i, i)].partial_cmp(&m[(j, j)]).unwrap_or(std::cmp::Ordering::Equal));
        let values = order.iter().map(|&i| m[(i, i)]).collect();
        let vectors = Mat::from_fn(n, n, |r, c| v[(r, order[c])]);
        Self { values, vectors }
    }

    pub fn min(&self) -> S {
        self.values.first().copied().unwrap_or_else(S::zero)
    }

    pub fn max(&self) -> S {
        self.values.last().copied().unwrap_or_else(S::zero)
    }

    /// Rebuilds `V diag(f(λ)) Vᵀ`.
    pub fn reconstruct(&self, f: impl Fn(S) -> S) -> Mat<S> {
        let n = self.values.len();
        let mut out = Mat::zeros(n, n);
        for (k, &lam) in self.values.iter().enumerate() {
            let w = f(lam);
            if w == S::zero() {
                continue;
            }
            for i in 0..n {
                for j in 0..n {
                    out[(i, j)] += w * self.vectors[(i, k)] * self.vectors[(j, k)];
                }
            }
        }
        out
    }
}

pub fn min_eigenvalue<S: Scalar>(a: &Mat<S>) -> S {
    SymEigen::new(a).min()
}

/// Nearest PSD matrix in Frobenius norm (negative eigenvalues clipped to zero).
pub fn psd_projection<S: Scalar>(a: &Mat<S>) -> Mat<S> {
    SymEigen::new(a).reconstruct(|l| l.max(S::zero())).symmetrize()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Mat<f64> {
        Mat::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn spd_inverse_of_two_by_two() {
        let a = m(&[&[2.0, 1.0], &[1.0, 1.0]]);
        let inv = inverse_spd(&a).unwrap();
        let expected = m(&[&[1.0, -1.0], &[-1.0, 2.0]]);
        assert!((&inv - &expected).max_abs() < 1e-14);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = m(&[&[1.0, 2.0], &[2.0, 1.0]]);
        assert!(cholesky(&a).is_err());
    }

    #[test]
    fn lu_inverse_round_trip() {
        let a = m(&[&[0.0, 2.0, 1.0], &[1.0, -1.0, 0.5], &[3.0, 0.0, 4.0]]);
        let inv = inverse(&a).unwrap();
        assert!((&(&a * &inv) - &Mat::identity(3)).max_abs() < 1e-13);
        assert!(inverse(&m(&[&[1.0, 2.0], &[2.0, 4.0]])).is_err());
    }

    #[test]
    fn jacobi_eigen_reconstructs() {
        let a = m(&[
            &[4.0, 1.0, -2.0, 0.5],
            &[1.0, 3.0, 0.0, 1.0],
            &[-2.0, 0.0, 1.0, 0.25],
            &[0.5, 1.0, 0.25, -2.0],
        ]);
        let eig = SymEigen::new(&a);
        assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
        assert!((&eig.reconstruct(|l| l) - &a).max_abs() < 1e-12);
        let vtv = &eig.vectors.transpose() * &eig.vectors;
        assert!((&vtv - &Mat::identity(4)).max_abs() < 1e-12);
    }

    #[test]
    fn eigenvalues_of_diagonal_are_sorted() {
        let eig = SymEigen::new(&Mat::diag(&[3.0, -1.0, 2.0]));
        assert_eq!(eig.values, vec![-1.0, 2.0, 3.0]);
    }

    #[test]
    fn psd_projection_clips_negative_part() {
        let p = psd_projection(&Mat::diag(&[-2.0, 1.0]));
        assert!((&p - &Mat::diag(&[0.0, 1.0])).max_abs() < 1e-15);
    }

    #[test]
    fn serde_as_nested_rows() {
        let a = m(&[&[1.0, 2.5], &[-3.0, 4.0]]);
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(json, "[[1.0,2.5],[-3.0,4.0]]");
        let back: Mat<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a);
        assert!(serde_json::from_str::<Mat<f64>>("[[1.0],[2.0,3.0]]").is_err());
    }
}
