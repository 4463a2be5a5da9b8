use super::{apply_h, HApply, RnnError, RunRecord, RunRow, WeightSet};
use crate::codec::{quantize, Grid};
use crate::dictionary::{Dictionary, Key};
use crate::linalg::{dot, LuFactors, PIVOT_REL_TOL};
use crate::scalar::Scalar;

/// One network update r' = h(W r + W_in y_in), ŷ' = W_out r'.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOut<F> {
    pub r: Vec<F>,
    pub y: F,
    /// Largest distance from a pre-activation to its nearest γ.
    pub drift: F,
}

/// Advances the network one step. A `SnapMiss` here carries t = 0; `run`
/// rewrites it with the actual step index.
pub fn step<F: Scalar>(r: &[F], y_in: F, ws: &WeightSet<F>) -> Result<StepOut<F>, RnnError> {
    let mut z = ws.w.matvec(r);
    for (zi, &wi) in z.iter_mut().zip(&ws.w_in) {
        *zi = *zi + wi * y_in;
    }
    let mut r_next = Vec::with_capacity(z.len());
    let mut drift = F::zero();
    for (i, &zi) in z.iter().enumerate() {
        match apply_h(zi, &ws.activation, &ws.gset) {
            HApply::Value { value, dist } => {
                r_next.push(value);
                drift = drift.max(dist);
            }
            HApply::Miss { nearest, dist, tol } => {
                return Err(RnnError::SnapMiss {
                    t: 0,
                    i,
                    z: zi.as_f64(),
                    nearest_gamma: nearest.as_f64(),
                    dist: dist.as_f64(),
                    tol: tol.as_f64(),
                });
            }
        }
    }
    let y = dot(&ws.w_out, &r_next);
    Ok(StepOut {
        r: r_next,
        y,
        drift,
    })
}

/// A run that broke down, with the rows produced before the failure.
#[derive(Debug)]
pub struct RunFailure<F> {
    pub error: RnnError,
    pub prefix: RunRecord<F>,
}

/// Autonomous closed-loop run for `horizon` steps. Each row records ŷ(t),
/// the dictionary entry matching the quantized output window (if any), the
/// one-hot residual ‖X⁻¹r(t) - e_{n_t}‖∞ in tabulated mode, and drift.
pub fn run<F: Scalar>(
    ws: &WeightSet<F>,
    dict: &Dictionary,
    grid: &Grid<F>,
    horizon: usize,
) -> Result<RunRecord<F>, Box<RunFailure<F>>> {
    let fail = |error, rows| {
        Box::new(RunFailure {
            error,
            prefix: RunRecord { rows },
        })
    };
    if horizon < 1 {
        return Err(fail(RnnError::InvalidHorizon { got: horizon }, Vec::new()));
    }
    let lu = if ws.activation.is_tabulated() {
        match LuFactors::factor(&ws.x, F::of(PIVOT_REL_TOL)) {
            Ok(lu) => Some(lu),
            Err(e) => {
                return Err(fail(
                    RnnError::Singular {
                        detail: e.to_string(),
                    },
                    Vec::new(),
                ));
            }
        }
    } else {
        None
    };

    let l = ws.l();
    let mut rows = Vec::with_capacity(horizon + 1);
    let n0 = dict.find(&Key::new(ws.init_window[1..].to_vec()));
    rows.push(RunRow {
        t: 0,
        yhat: ws.yhat0,
        n_t: n0,
        onehot_residual: match (&lu, n0) {
            (Some(lu), Some(n)) => Some(onehot_residual(lu, &ws.r0, n)),
            _ => None,
        },
        drift: F::zero(),
    });

    // Quantized output window (ȳ(t-1), ..., ȳ(t-L)), most recent first.
    let mut window: Vec<usize> = ws.init_window[..l].to_vec();
    let mut r = ws.r0.clone();
    let mut y_prev = ws.yhat0;
    for t in 1..=horizon {
        let out = match step(&r, y_prev, ws) {
            Ok(out) => out,
            Err(RnnError::SnapMiss {
                i,
                z,
                nearest_gamma,
                dist,
                tol,
                ..
            }) => {
                return Err(fail(
                    RnnError::SnapMiss {
                        t,
                        i,
                        z,
                        nearest_gamma,
                        dist,
                        tol,
                    },
                    rows,
                ));
            }
            Err(other) => return Err(fail(other, rows)),
        };
        let n_t = dict.find(&Key::new(window.clone()));
        rows.push(RunRow {
            t,
            yhat: out.y,
            n_t,
            onehot_residual: match (&lu, n_t) {
                (Some(lu), Some(n)) => Some(onehot_residual(lu, &out.r, n)),
                _ => None,
            },
            drift: out.drift,
        });
        window.rotate_right(1);
        window[0] = quantize(out.y, grid);
        r = out.r;
        y_prev = out.y;
    }
    Ok(RunRecord { rows })
}

/// ‖X⁻¹ r - e_n‖∞ for 1-based n.
fn onehot_residual<F: Scalar>(lu: &LuFactors<F>, r: &[F], n: usize) -> F {
    let e = lu.solve(r);
    let mut worst = F::zero();
    for (j, &v) in e.iter().enumerate() {
        let want = if j + 1 == n { F::one() } else { F::zero() };
        worst = worst.max((v - want).abs());
    }
    worst
}
