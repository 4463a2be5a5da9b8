//! Explicit construction of the recurrent network (σ*, X, G, W, W_in, W_out,
//! r(0), ŷ(0)) from a certified dictionary, and the tracking runtime.

mod build;
mod runtime;

pub use build::{
    assemble_x_g, build_sigma_star, build_weights, check_regularity, solve_weights,
    ActivationRequest, BuildOptions, RegularityCheck,
};
pub use runtime::{run, step, RunFailure, StepOut};

use thiserror::Error;

use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Arguments closer than this are one γ (they are equal in exact arithmetic).
pub const GSET_DEDUP_TOL: f64 = 1e-9;
/// Relative singular-value cutoff for the rank of W.
pub const RANK_REL_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum RnnError {
    #[error("X is singular: {detail}")]
    Singular { detail: String },
    #[error("X stayed singular after {attempts} activation draws (last: {last})")]
    SingularAfterRetries { attempts: u32, last: String },
    #[error("activation arguments too close: min gap {min_gap:e} must exceed twice the snap tolerance {snap_tolerance:e}")]
    GapTooSmall { min_gap: f64, snap_tolerance: f64 },
    #[error("pre-activation z[{i}] = {z} at t = {t} is {dist:e} from the nearest gamma {nearest_gamma} (tolerance {tol:e}); tracking broke down")]
    SnapMiss {
        t: usize,
        i: usize,
        z: f64,
        nearest_gamma: f64,
        dist: f64,
        tol: f64,
    },
    #[error("bad initial window: {reason}")]
    BadInitWindow { reason: String },
    #[error("run horizon must be >= 1, got {got}")]
    InvalidHorizon { got: usize },
}

/// How h is realized. Tabulated h is defined on the finite argument set G by
/// seeded uniform draws on [-1, 1] and extended by snapping; analytic h is
/// tanh(β·z).
#[derive(Debug, Clone, PartialEq)]
pub enum ActivationMode<F> {
    Tabulated {
        h_seed: u64,
        /// h(γ_m) aligned with `GSet::gammas`; drawn at assembly when empty.
        table: Vec<F>,
    },
    Analytic {
        beta: F,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSpec<F> {
    pub mode: ActivationMode<F>,
    /// Resolved at assembly in tabulated mode (default min(1e-6, min_gap/4)).
    pub snap_tolerance: Option<F>,
}

impl<F: Scalar> ActivationSpec<F> {
    pub fn tabulated(h_seed: u64) -> Self {
        ActivationSpec {
            mode: ActivationMode::Tabulated {
                h_seed,
                table: Vec::new(),
            },
            snap_tolerance: None,
        }
    }

    pub fn analytic(beta: F) -> Self {
        ActivationSpec {
            mode: ActivationMode::Analytic { beta },
            snap_tolerance: None,
        }
    }

    pub fn is_tabulated(&self) -> bool {
        matches!(self.mode, ActivationMode::Tabulated { .. })
    }
}

/// The deduplicated, sorted set of pre-activation arguments
/// Σ_ℓ σ*_i(ℓ-1)σ_j(ℓ), with L always a member.
#[derive(Debug, Clone, PartialEq)]
pub struct GSet<F> {
    gammas: Vec<F>,
    min_gap: F,
    contains_l_at: usize,
}

impl<F: Scalar> GSet<F> {
    pub(crate) fn new(gammas: Vec<F>, contains_l_at: usize) -> Self {
        let min_gap = gammas
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(F::infinity(), |acc, d| acc.min(d));
        GSet {
            gammas,
            min_gap,
            contains_l_at,
        }
    }

    pub fn gammas(&self) -> &[F] {
        &self.gammas
    }

    pub fn len(&self) -> usize {
        self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gammas.is_empty()
    }

    /// Smallest distance between two distinct γ (infinite for a singleton).
    pub fn min_gap(&self) -> F {
        self.min_gap
    }

    /// Position of L in `gammas`.
    pub fn contains_l_at(&self) -> usize {
        self.contains_l_at
    }

    /// Index and distance of the γ nearest to `z`.
    pub fn nearest(&self, z: F) -> (usize, F) {
        let pos = self.gammas.partition_point(|&g| g < z);
        let mut best = None;
        for cand in [pos.wrapping_sub(1), pos] {
            if let Some(&g) = self.gammas.get(cand) {
                let d = (z - g).abs();
                match best {
                    Some((_, bd)) if bd <= d => {}
                    _ => best = Some((cand, d)),
                }
            }
        }
        best.expect("GSet is never empty")
    }
}

/// Everything needed to run the network, plus build provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet<F> {
    pub x: Matrix<F>,
    pub w: Matrix<F>,
    pub w_in: Vec<F>,
    pub w_out: Vec<F>,
    pub r0: Vec<F>,
    pub yhat0: F,
    /// Quantized initial window `ȳ(0), ȳ(-1), ..., ȳ(-L)`.
    pub init_window: Vec<usize>,
    pub cond_estimate: F,
    pub rank_w: usize,
    pub activation: ActivationSpec<F>,
    pub gset: GSet<F>,
    /// Activation draw that certified regularity (0 = first).
    pub h_attempts: u32,
    pub dict_ref: u64,
}

impl<F: Scalar> WeightSet<F> {
    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn l(&self) -> usize {
        self.init_window.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow<F> {
    pub t: usize,
    pub yhat: F,
    /// Dictionary entry recovered from the quantized output window; None if
    /// the window is no longer a dictionary key.
    pub n_t: Option<usize>,
    pub onehot_residual: Option<F>,
    pub drift: F,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunRecord<F> {
    pub rows: Vec<RunRow<F>>,
}

impl<F: Scalar> RunRecord<F> {
    pub fn max_drift(&self) -> F {
        self.rows.iter().fold(F::zero(), |acc, r| acc.max(r.drift))
    }

    pub fn max_onehot_residual(&self) -> Option<F> {
        self.rows
            .iter()
            .filter_map(|r| r.onehot_residual)
            .fold(None, |acc, v| Some(acc.map_or(v, |a: F| a.max(v))))
    }
}

pub(crate) enum HApply<F> {
    Value { value: F, dist: F },
    Miss { nearest: F, dist: F, tol: F },
}

/// Applies h to one pre-activation. Tabulated mode snaps to the nearest γ
/// within the tolerance; analytic mode evaluates tanh(β·z) and reports the
/// distance to G as drift.
pub(crate) fn apply_h<F: Scalar>(z: F, act: &ActivationSpec<F>, gset: &GSet<F>) -> HApply<F> {
    let (m, dist) = gset.nearest(z);
    match &act.mode {
        ActivationMode::Tabulated { table, .. } => {
            let tol = act
                .snap_tolerance
                .unwrap_or_else(|| default_snap_tolerance(gset.min_gap()));
            if dist > tol {
                HApply::Miss {
                    nearest: gset.gammas()[m],
                    dist,
                    tol,
                }
            } else {
                HApply::Value {
                    value: table[m],
                    dist,
                }
            }
        }
        ActivationMode::Analytic { beta } => HApply::Value {
            value: (*beta * z).tanh(),
            dist,
        },
    }
}

pub(crate) fn default_snap_tolerance<F: Scalar>(min_gap: F) -> F {
    F::of(1e-6).min(min_gap / F::of(4.0))
}
