//! Dense row-major matrices with just enough factorization machinery for the
//! weight solves: partial-pivot LU (plain, transposed, and iteratively
//! refined solves, plus a 1-norm condition estimate) and a one-sided Jacobi
//! SVD for singular values / numerical rank.

mod lu;
mod svd;

pub use lu::{LuFactors, PIVOT_REL_TOL};
pub use svd::{numerical_rank, singular_values};

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is singular to working precision at elimination step {step}: |pivot| = {pivot:e} <= {threshold:e}")]
    SingularPivot {
        step: usize,
        pivot: f64,
        threshold: f64,
    },
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> F) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// `data` is row-major and must have exactly `rows * cols` entries.
    pub fn from_raw(rows: usize, cols: usize, data: Vec<F>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch {
                context: format!(
                    "raw buffer holds {} entries, shape {}x{} needs {}",
                    data.len(),
                    rows,
                    cols,
                    rows * cols
                ),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        Matrix::from_fn(n, n, |i, j| if i == j { F::one() } else { F::zero() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> F {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: F) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    /// `A x`.
    pub fn matvec(&self, x: &[F]) -> Vec<F> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `A^T x`.
    pub fn matvec_t(&self, x: &[F]) -> Vec<F> {
        assert_eq!(x.len(), self.rows, "matvec_t dimension mismatch");
        let mut out = vec![F::zero(); self.cols];
        for (i, &xi) in x.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o = *o + xi * a;
            }
        }
        out
    }

    /// `A B`.
    pub fn matmul(&self, other: &Matrix<F>) -> Matrix<F> {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self.get(i, k);
                if aik == F::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let v = out.get(i, j) + aik * other.get(k, j);
                    out.set(i, j, v);
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> F {
        self.data.iter().fold(F::zero(), |acc, &v| acc.max(v.abs()))
    }

    /// Induced 1-norm: max over columns of the absolute column sum.
    pub fn norm_1(&self) -> F {
        let mut best = F::zero();
        for j in 0..self.cols {
            let mut s = F::zero();
            for i in 0..self.rows {
                s = s + self.get(i, j).abs();
            }
            best = best.max(s);
        }
        best
    }
}

pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut s = F::zero();
    for (&x, &y) in a.iter().zip(b) {
        s = s + x * y;
    }
    s
}

pub fn max_abs_diff<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(F::zero(), |acc, (&x, &y)| acc.max((x - y).abs()))
}
