use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    apply_h, default_snap_tolerance, ActivationMode, ActivationSpec, GSet, HApply, RnnError,
    WeightSet, GSET_DEDUP_TOL, RANK_REL_TOL,
};
use crate::codec::Grid;
use crate::dictionary::Dictionary;
use crate::linalg::{numerical_rank, singular_values, LuFactors, Matrix, PIVOT_REL_TOL};
use crate::scalar::Scalar;

/// Refinement rounds on every W / W_out solve; two are enough to push the
/// residual to a small multiple of machine epsilon at our conditioning.
const REFINE_ITERS: usize = 2;

/// Activation selection for a build, before per-attempt instantiation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivationRequest {
    Tabulated { h_seed: u64 },
    Analytic { beta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildOptions {
    pub activation: ActivationRequest,
    pub snap_tolerance: Option<f64>,
    pub max_retries: u32,
}

impl BuildOptions {
    fn instantiate<F: Scalar>(&self, attempt: u32) -> ActivationSpec<F> {
        let mode = match self.activation {
            ActivationRequest::Tabulated { h_seed } => ActivationMode::Tabulated {
                h_seed: h_seed.wrapping_add(attempt as u64),
                table: Vec::new(),
            },
            ActivationRequest::Analytic { beta } => {
                // Deterministic perturbation ladder; also lifts beta = 0.
                let b = beta + attempt as f64 * beta.abs().max(1.0) / 16.0;
                ActivationMode::Analytic { beta: F::of(b) }
            }
        };
        ActivationSpec {
            mode,
            snap_tolerance: self.snap_tolerance.map(F::of),
        }
    }
}

/// σ*_n(ℓ-1) = 1/σ_n(ℓ): the N×L matrix of reciprocal key values.
pub fn build_sigma_star<F: Scalar>(dict: &Dictionary, grid: &Grid<F>) -> Matrix<F> {
    Matrix::from_fn(dict.n(), dict.l(), |i, c| {
        F::one() / grid.point(dict.entry(i + 1).key.lags()[c])
    })
}

/// Σ_c σ*-row[c] · a_{lags[c]}, in a fixed accumulation order. r(0) reuses
/// this so its arguments are bit-identical to the matching column of X.
pub(crate) fn cross_argument<F: Scalar>(ss_row: &[F], lags: &[usize], grid: &Grid<F>) -> F {
    let mut s = F::zero();
    for (c, &lag) in lags.iter().enumerate() {
        s = s + ss_row[c] * grid.point(lag);
    }
    s
}

/// Builds X_ij = h(Σ_ℓ σ*_i(ℓ-1)σ_j(ℓ)) and the deduplicated argument set G.
/// In tabulated mode an empty table is drawn from h_seed over G and the snap
/// tolerance is resolved.
pub fn assemble_x_g<F: Scalar>(
    dict: &Dictionary,
    grid: &Grid<F>,
    sigma_star: &Matrix<F>,
    act: &mut ActivationSpec<F>,
) -> Result<(Matrix<F>, GSet<F>), RnnError> {
    let n = dict.n();
    let args = Matrix::from_fn(n, n, |i, j| {
        cross_argument(sigma_star.row(i), dict.entry(j + 1).key.lags(), grid)
    });

    // Cluster the sorted arguments: a gap > GSET_DEDUP_TOL starts a new γ,
    // represented by its smallest member. Genericity keeps the diagonal
    // value L in a singleton cluster, so L itself is a γ.
    let mut order: Vec<usize> = (0..n * n).collect();
    order.sort_by(|&a, &b| {
        args.data()[a]
            .partial_cmp(&args.data()[b])
            .expect("arguments are finite")
    });
    let tol = F::of(GSET_DEDUP_TOL);
    let mut gammas: Vec<F> = Vec::new();
    let mut cluster_of = vec![0usize; n * n];
    let mut prev: Option<F> = None;
    for &idx in &order {
        let v = args.data()[idx];
        if prev.is_none_or(|p| v - p > tol) {
            gammas.push(v);
        }
        cluster_of[idx] = gammas.len() - 1;
        prev = Some(v);
    }
    let l_f = F::of(dict.l() as f64);
    let contains_l_at = gammas
        .iter()
        .position(|&g| (g - l_f).abs() <= tol)
        .expect("diagonal arguments put L into G");
    let gset = GSet::new(gammas, contains_l_at);

    if let ActivationMode::Tabulated { h_seed, table } = &mut act.mode {
        if table.len() != gset.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(*h_seed);
            *table = (0..gset.len())
                .map(|_| F::of(2.0 * rng.random::<f64>() - 1.0))
                .collect();
        }
        let eff = act
            .snap_tolerance
            .unwrap_or_else(|| default_snap_tolerance(gset.min_gap()));
        if !(gset.min_gap() > eff + eff) {
            return Err(RnnError::GapTooSmall {
                min_gap: gset.min_gap().as_f64(),
                snap_tolerance: eff.as_f64(),
            });
        }
        act.snap_tolerance = Some(eff);
    }

    let x = match &act.mode {
        ActivationMode::Tabulated { table, .. } => {
            Matrix::from_fn(n, n, |i, j| table[cluster_of[i * n + j]])
        }
        ActivationMode::Analytic { beta } => {
            Matrix::from_fn(n, n, |i, j| (*beta * args.get(i, j)).tanh())
        }
    };
    Ok((x, gset))
}

#[derive(Debug)]
pub struct RegularityCheck<F> {
    pub lu: LuFactors<F>,
    pub cond_estimate: F,
    pub min_pivot: F,
}

/// Partial-pivot LU with the 1e-12·max|X| pivot floor, plus an exact 1-norm
/// condition number.
pub fn check_regularity<F: Scalar>(x: &Matrix<F>) -> Result<RegularityCheck<F>, RnnError> {
    let lu = LuFactors::factor(x, F::of(PIVOT_REL_TOL)).map_err(|e| RnnError::Singular {
        detail: e.to_string(),
    })?;
    let cond_estimate = lu.cond_1(x);
    Ok(RegularityCheck {
        min_pivot: lu.min_pivot(),
        cond_estimate,
        lu,
    })
}

/// Solves for W (WX = Y), W_out (W_out·X = value row), takes W_in = σ*(0),
/// and forms r(0), ŷ(0) from the quantized initial window
/// `init_window = (ȳ(0), ȳ(-1), ..., ȳ(-L))`.
#[allow(clippy::too_many_arguments)]
pub fn solve_weights<F: Scalar>(
    dict: &Dictionary,
    grid: &Grid<F>,
    sigma_star: &Matrix<F>,
    x: Matrix<F>,
    gset: GSet<F>,
    act: ActivationSpec<F>,
    reg: &RegularityCheck<F>,
    init_window: &[usize],
    h_attempts: u32,
) -> Result<WeightSet<F>, RnnError> {
    let n = dict.n();
    let l = dict.l();
    if init_window.len() != l + 1 {
        return Err(RnnError::BadInitWindow {
            reason: format!("need L+1 = {} indices, got {}", l + 1, init_window.len()),
        });
    }
    if let Some(&bad) = init_window.iter().find(|&&i| i < 1 || i > dict.k()) {
        return Err(RnnError::BadInitWindow {
            reason: format!("index {bad} outside 1..={}", dict.k()),
        });
    }

    // Y_ij = Σ_{ℓ=1}^{L-1} σ*_i(ℓ)σ_j(ℓ); the empty sum (L = 1) is exact 0.
    let y = Matrix::from_fn(n, n, |i, j| {
        let lags = dict.entry(j + 1).key.lags();
        let mut s = F::zero();
        for c in 1..l {
            s = s + sigma_star.get(i, c) * grid.point(lags[c - 1]);
        }
        s
    });

    let mut wdata = Vec::with_capacity(n * n);
    for i in 0..n {
        wdata.extend(reg.lu.solve_t_refined(&x, y.row(i), REFINE_ITERS));
    }
    let w = Matrix::from_raw(n, n, wdata).expect("square by construction");

    let targets: Vec<F> = (1..=n)
        .map(|j| grid.point(dict.entry(j).value_index))
        .collect();
    let w_out = reg.lu.solve_t_refined(&x, &targets, REFINE_ITERS);

    let w_in: Vec<F> = (0..n).map(|i| sigma_star.get(i, 0)).collect();

    let mut r0 = Vec::with_capacity(n);
    for i in 0..n {
        let arg = cross_argument(sigma_star.row(i), &init_window[1..], grid);
        match apply_h(arg, &act, &gset) {
            HApply::Value { value, .. } => r0.push(value),
            HApply::Miss { nearest, dist, tol } => {
                return Err(RnnError::SnapMiss {
                    t: 0,
                    i,
                    z: arg.as_f64(),
                    nearest_gamma: nearest.as_f64(),
                    dist: dist.as_f64(),
                    tol: tol.as_f64(),
                });
            }
        }
    }
    let yhat0 = grid.point(init_window[0]);

    let sv = singular_values(&w);
    let rank_w = numerical_rank(&sv, F::of(RANK_REL_TOL));

    Ok(WeightSet {
        x,
        w,
        w_in,
        w_out,
        r0,
        yhat0,
        init_window: init_window.to_vec(),
        cond_estimate: reg.cond_estimate,
        rank_w,
        activation: act,
        gset,
        h_attempts,
        dict_ref: dict.fingerprint(),
    })
}

/// Full build with the regularity retry loop: each attempt re-instantiates
/// the activation (next h seed, or perturbed β) until X certifies.
pub fn build_weights<F: Scalar>(
    dict: &Dictionary,
    grid: &Grid<F>,
    init_window: &[usize],
    opts: &BuildOptions,
) -> Result<WeightSet<F>, RnnError> {
    let sigma_star = build_sigma_star(dict, grid);
    let mut last = String::from("no attempt made");
    for attempt in 0..=opts.max_retries {
        let mut act = opts.instantiate::<F>(attempt);
        let (x, gset) = assemble_x_g(dict, grid, &sigma_star, &mut act)?;
        match check_regularity(&x) {
            Ok(reg) => {
                return solve_weights(
                    dict,
                    grid,
                    &sigma_star,
                    x,
                    gset,
                    act,
                    &reg,
                    init_window,
                    attempt,
                );
            }
            Err(RnnError::Singular { detail }) => last = detail,
            Err(other) => return Err(other),
        }
    }
    Err(RnnError::SingularAfterRetries {
        attempts: opts.max_retries + 1,
        last,
    })
}
