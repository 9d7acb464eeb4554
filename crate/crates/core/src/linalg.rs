//! Small dense vectors and matrices.
//!
//! Decompositions are delegated to `nalgebra` in double precision; callers
//! working in `f32` convert at the boundary.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Row-major dense matrix. An `n x d` control matrix `z` stores row `i`
/// (the `i`-th component's loading on the Brownian motion) contiguously.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    /// Builds a matrix from row-major data.
    ///
    /// # Panics
    /// If `data.len() != rows * cols`.
    pub fn from_rows(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    /// Frobenius norm `sqrt(tr(z z^T))`.
    pub fn frobenius(&self) -> T {
        norm(&self.data)
    }

    /// `z^T q` for a vector `q` with one entry per row.
    pub fn transpose_mul(&self, q: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        for (i, &qi) in q.iter().enumerate() {
            for (o, &v) in out.iter_mut().zip(self.row(i)) {
                *o += qi * v;
            }
        }
        out
    }

    /// Stacks `self` on top of `other` (same column count).
    pub fn vstack(&self, other: &Mat<T>) -> Mat<T> {
        assert_eq!(self.cols, other.cols);
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Mat { rows: self.rows + other.rows, cols: self.cols, data }
    }

    /// Rows `start..start + count` as a new matrix.
    pub fn row_block(&self, start: usize, count: usize) -> Mat<T> {
        Mat {
            rows: count,
            cols: self.cols,
            data: self.data[start * self.cols..(start + count) * self.cols].to_vec(),
        }
    }

    pub fn cast<U: Real>(&self) -> Mat<U> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn sub<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

pub fn add<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

/// `a + s * b`.
pub fn axpy<T: Real>(a: &[T], s: T, b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x + s * y).collect()
}

pub fn max_abs_diff<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |m, (&x, &y)| m.max((x - y).abs()))
}

/// Solves the square system `a x = b` (row-major `a`) by LU with partial
/// pivoting. Returns `None` when the matrix is numerically singular.
pub fn lu_solve<T: Real>(dim: usize, a: &[T], b: &[T]) -> Option<Vec<T>> {
    let m = DMatrix::from_row_iterator(dim, dim, a.iter().map(|v| v.as_f64()));
    let rhs = DVector::from_iterator(dim, b.iter().map(|v| v.as_f64()));
    let lu = m.lu();
    if !lu.is_invertible() {
        return None;
    }
    let scale = lu.u().iter().fold(0.0_f64, |s, v| s.max(v.abs()));
    let min_pivot = lu.u().diagonal().iter().fold(f64::INFINITY, |s, v| s.min(v.abs()));
    if min_pivot <= scale * 1e-14 {
        return None;
    }
    lu.solve(&rhs).map(|x| x.iter().map(|&v| T::lit(v)).collect())
}

/// Solution of a symmetric positive definite system together with the
/// 2-norm condition number of the matrix.
pub struct SpdSolve<T> {
    pub solution: Mat<T>,
    pub condition: f64,
}

/// Solves `a X = b` for symmetric positive definite `a` (`dim x dim`,
/// row-major) and a right-hand side with `cols` columns.
pub fn spd_solve<T: Real>(dim: usize, a: &[T], b: &Mat<T>) -> Option<SpdSolve<T>> {
    let m = DMatrix::from_row_iterator(dim, dim, a.iter().map(|v| v.as_f64()));
    let eig = m.clone().symmetric_eigen();
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let chol = m.cholesky()?;
    let rhs = DMatrix::from_row_iterator(b.rows(), b.cols(), b.as_slice().iter().map(|v| v.as_f64()));
    let x = chol.solve(&rhs);
    let mut data = Vec::with_capacity(b.rows() * b.cols());
    for i in 0..b.rows() {
        for j in 0..b.cols() {
            data.push(T::lit(x[(i, j)]));
        }
    }
    Some(SpdSolve { solution: Mat::from_rows(b.rows(), b.cols(), data), condition })
}
