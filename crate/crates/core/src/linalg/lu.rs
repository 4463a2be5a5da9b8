// Triangular solves index two structures with coupled bounds; iterator forms
// hide the pivoting pattern.
#![allow(clippy::needless_range_loop)]

use super::{LinalgError, Matrix};
use crate::scalar::Scalar;

/// Relative pivot floor: elimination aborts when a pivot falls at or below
/// `PIVOT_REL_TOL * max|A_ij|`.
pub const PIVOT_REL_TOL: f64 = 1e-12;

/// Partial-pivot LU of a square matrix, `P A = L U` with unit-diagonal `L`.
#[derive(Debug, Clone)]
pub struct LuFactors<F> {
    lu: Matrix<F>,
    /// Row swapped into position `k` at elimination step `k`.
    ipiv: Vec<usize>,
    min_pivot: F,
}

impl<F: Scalar> LuFactors<F> {
    pub fn factor(a: &Matrix<F>, rel_tol: F) -> Result<Self, LinalgError> {
        assert_eq!(a.rows(), a.cols(), "LU needs a square matrix");
        let n = a.rows();
        let threshold = rel_tol * a.max_abs();
        let mut lu = a.clone();
        let mut ipiv = vec![0usize; n];
        let mut min_pivot = F::infinity();

        for k in 0..n {
            let mut p = k;
            let mut best = lu.get(k, k).abs();
            for i in (k + 1)..n {
                let v = lu.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            ipiv[k] = p;
            if p != k {
                for j in 0..n {
                    let tmp = lu.get(k, j);
                    lu.set(k, j, lu.get(p, j));
                    lu.set(p, j, tmp);
                }
            }
            let pivot = lu.get(k, k);
            if pivot.abs() <= threshold {
                return Err(LinalgError::SingularPivot {
                    step: k,
                    pivot: pivot.abs().as_f64(),
                    threshold: threshold.as_f64(),
                });
            }
            min_pivot = min_pivot.min(pivot.abs());
            for i in (k + 1)..n {
                let m = lu.get(i, k) / pivot;
                lu.set(i, k, m);
                if m == F::zero() {
                    continue;
                }
                for j in (k + 1)..n {
                    let v = lu.get(i, j) - m * lu.get(k, j);
                    lu.set(i, j, v);
                }
            }
        }

        Ok(LuFactors {
            lu,
            ipiv,
            min_pivot: if n == 0 { F::zero() } else { min_pivot },
        })
    }

    pub fn n(&self) -> usize {
        self.lu.rows()
    }

    /// Smallest `|U_kk|` seen while factoring.
    pub fn min_pivot(&self) -> F {
        self.min_pivot
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[F]) -> Vec<F> {
        let n = self.n();
        assert_eq!(b.len(), n, "solve dimension mismatch");
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.ipiv[k]);
        }
        // L y = P b, unit diagonal.
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s = s - self.lu.get(i, j) * x[j];
            }
            x[i] = s;
        }
        // U x = y.
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s = s - self.lu.get(i, j) * x[j];
            }
            x[i] = s / self.lu.get(i, i);
        }
        x
    }

    /// Solves `A^T x = b` from the same factorization: `U^T L^T P x = b`.
    pub fn solve_t(&self, b: &[F]) -> Vec<F> {
        let n = self.n();
        assert_eq!(b.len(), n, "solve_t dimension mismatch");
        let mut x = b.to_vec();
        // U^T w = b, lower triangular with U's diagonal.
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s = s - self.lu.get(j, i) * x[j];
            }
            x[i] = s / self.lu.get(i, i);
        }
        // L^T v = w, upper triangular with unit diagonal.
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s = s - self.lu.get(j, i) * x[j];
            }
            x[i] = s;
        }
        // x = P^{-1} v: undo the swaps in reverse order.
        for k in (0..n).rev() {
            x.swap(k, self.ipiv[k]);
        }
        x
    }

    /// `A x = b` with `iters` rounds of iterative refinement against the
    /// original matrix.
    pub fn solve_refined(&self, a: &Matrix<F>, b: &[F], iters: usize) -> Vec<F> {
        let mut x = self.solve(b);
        for _ in 0..iters {
            let r = residual(b, &a.matvec(&x));
            let d = self.solve(&r);
            for (xi, di) in x.iter_mut().zip(&d) {
                *xi = *xi + *di;
            }
        }
        x
    }

    /// `A^T x = b` with iterative refinement.
    pub fn solve_t_refined(&self, a: &Matrix<F>, b: &[F], iters: usize) -> Vec<F> {
        let mut x = self.solve_t(b);
        for _ in 0..iters {
            let r = residual(b, &a.matvec_t(&x));
            let d = self.solve_t(&r);
            for (xi, di) in x.iter_mut().zip(&d) {
                *xi = *xi + *di;
            }
        }
        x
    }

    /// Exact 1-norm condition number, `||A||_1 * max_j ||A^{-1} e_j||_1`
    /// (column sums of the explicitly solved inverse).
    pub fn cond_1(&self, a: &Matrix<F>) -> F {
        let n = self.n();
        let mut inv_norm = F::zero();
        let mut e = vec![F::zero(); n];
        for j in 0..n {
            e[j] = F::one();
            let col = self.solve(&e);
            e[j] = F::zero();
            let s = col.iter().fold(F::zero(), |acc, v| acc + v.abs());
            inv_norm = inv_norm.max(s);
        }
        a.norm_1() * inv_norm
    }
}

fn residual<F: Scalar>(b: &[F], ax: &[F]) -> Vec<F> {
    b.iter().zip(ax).map(|(&bi, &axi)| bi - axi).collect()
}

#[allow(dead_code)]
fn residual_norm<F: Scalar>(a: &Matrix<F>, x: &[F], b: &[F]) -> F {
    let ax = a.matvec(x);
    b.iter()
        .zip(&ax)
        .fold(F::zero(), |acc, (&bi, &axi)| acc.max((bi - axi).abs()))
}
