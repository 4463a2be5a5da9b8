// Jacobi rotations touch column pairs in lockstep; indexed access keeps the
// p/q symmetry visible.
#![allow(clippy::needless_range_loop)]

use super::Matrix;
use crate::scalar::Scalar;

const MAX_SWEEPS: usize = 64;

/// Singular values of `a`, descending, via one-sided Jacobi on the columns.
/// Returns `a.cols()` values (trailing ones are ~0 when `rows < cols`).
pub fn singular_values<F: Scalar>(a: &Matrix<F>) -> Vec<F> {
    let m = a.rows();
    let n = a.cols();
    let mut cols: Vec<Vec<F>> = (0..n)
        .map(|j| (0..m).map(|i| a.get(i, j)).collect())
        .collect();
    let eps = F::epsilon();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let mut alpha = F::zero();
                let mut beta = F::zero();
                let mut gamma = F::zero();
                for i in 0..m {
                    let ap = cols[p][i];
                    let aq = cols[q][i];
                    alpha = alpha + ap * ap;
                    beta = beta + aq * aq;
                    gamma = gamma + ap * aq;
                }
                if gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (F::of(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (F::one() + zeta * zeta).sqrt());
                let c = F::one() / (F::one() + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let ap = cols[p][i];
                    let aq = cols[q][i];
                    cols[p][i] = c * ap - s * aq;
                    cols[q][i] = s * ap + c * aq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sv: Vec<F> = cols
        .iter()
        .map(|col| col.iter().fold(F::zero(), |acc, &v| acc + v * v).sqrt())
        .collect();
    sv.sort_by(|x, y| y.partial_cmp(x).expect("singular values are finite"));
    sv
}

/// Count of singular values above `rel_tol * sv_max`. Zero for an all-zero
/// (or empty) spectrum.
pub fn numerical_rank<F: Scalar>(sv: &[F], rel_tol: F) -> usize {
    let max = sv.iter().fold(F::zero(), |acc, &v| acc.max(v));
    if max == F::zero() {
        return 0;
    }
    let cut = rel_tol * max;
    sv.iter().filter(|&&v| v > cut).count()
}
