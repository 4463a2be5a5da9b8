//! Benchmark delay maps on [-1, 1], trajectory generation, and Lipschitz
//! certificates for the one-step map in delay coordinates.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum SystemsError {
    #[error("unknown map '{name}' (registered: chebyshev, tent, henon, constant, cycle, decay)")]
    UnknownMap { name: String },
    #[error("map '{map}' does not accept parameter '{param}'")]
    UnknownParam { map: String, param: String },
    #[error("map '{map}' parameter '{param}': {message}")]
    InvalidParam {
        map: String,
        param: String,
        message: String,
    },
    #[error("seed_window must have {expected} components for map '{map}', got {got}")]
    SeedWindowLength {
        map: String,
        expected: usize,
        got: usize,
    },
    #[error("seed_window[{index}] = {value} is outside [-1, 1]")]
    SeedOutOfRange { index: usize, value: f64 },
    #[error("{field} = {got} is too short (need at least {min})")]
    LengthTooShort {
        field: &'static str,
        got: usize,
        min: usize,
    },
    #[error("iterate left [-1, 1] at t = {t}: y = {value} (map '{map}' with these params is not invariant on the box)")]
    DomainEscape { map: String, t: i64, value: f64 },
    #[error("map '{map}' has no registered analytic Lipschitz bound")]
    NoAnalyticBound { map: String },
    #[error("sampled Lipschitz certificate needs n_pairs >= {min}, got {got}")]
    SampleCountTooSmall { got: usize, min: usize },
    #[error("trajectory value at t = {t} is outside [-1, 1]: {value}")]
    ValueOutOfRange { t: i64, value: f64 },
}

pub const MIN_SAMPLE_PAIRS: usize = 1000;

#[derive(Debug, Clone)]
enum Kind<F> {
    Chebyshev,
    Tent,
    Henon { a: F, b: F, s: F },
    Constant { c: F },
    Cycle,
    Decay { ratio: F },
}

/// One-step map in delay coordinates: `update` consumes the window
/// `(y(t-1), ..., y(t-L))`, most recent first, and yields `y(t)`. The induced
/// L-dimensional map is the shift: the new value enters coordinate 1, old
/// coordinates 1..L-1 move down.
#[derive(Debug, Clone)]
pub struct DelayMap<F> {
    name: String,
    l: usize,
    params: Vec<(String, f64)>,
    kind: Kind<F>,
    analytic: Option<F>,
}

impl<F: Scalar> DelayMap<F> {
    /// Looks up a registered benchmark map by name; `params` may override the
    /// registered defaults and must not contain unknown keys.
    pub fn benchmark(name: &str, params: &BTreeMap<String, f64>) -> Result<Self, SystemsError> {
        match name {
            "chebyshev" => {
                reject_unknown(name, params, &[])?;
                Ok(DelayMap {
                    name: name.into(),
                    l: 1,
                    params: vec![],
                    kind: Kind::Chebyshev,
                    analytic: Some(F::of(4.0)),
                })
            }
            "tent" => {
                reject_unknown(name, params, &[])?;
                Ok(DelayMap {
                    name: name.into(),
                    l: 1,
                    params: vec![],
                    kind: Kind::Tent,
                    analytic: Some(F::of(2.0)),
                })
            }
            "henon" => {
                reject_unknown(name, params, &["a", "b", "s"])?;
                let a = param(params, "a", 1.4);
                let b = param(params, "b", 0.3);
                let s = param(params, "s", 1.4);
                for (key, v) in [("a", a), ("b", b), ("s", s)] {
                    if !v.is_finite() {
                        return Err(SystemsError::InvalidParam {
                            map: name.into(),
                            param: key.into(),
                            message: format!("must be finite, got {v}"),
                        });
                    }
                }
                if s <= 0.0 {
                    return Err(SystemsError::InvalidParam {
                        map: name.into(),
                        param: "s".into(),
                        message: format!("rescale factor must be positive, got {s}"),
                    });
                }
                // Frobenius bound on the Jacobian [[-2asw, b], [1, 0]] over the box.
                let bound = ((2.0 * a * s).powi(2) + b * b + 1.0).sqrt();
                Ok(DelayMap {
                    name: name.into(),
                    l: 2,
                    params: vec![("a".into(), a), ("b".into(), b), ("s".into(), s)],
                    kind: Kind::Henon {
                        a: F::of(a),
                        b: F::of(b),
                        s: F::of(s),
                    },
                    analytic: Some(F::of(bound.max(1.0))),
                })
            }
            "constant" => {
                reject_unknown(name, params, &["c"])?;
                let c = param(params, "c", 0.3);
                if !(-1.0..=1.0).contains(&c) {
                    return Err(SystemsError::InvalidParam {
                        map: name.into(),
                        param: "c".into(),
                        message: format!("must lie in [-1, 1], got {c}"),
                    });
                }
                Ok(DelayMap {
                    name: name.into(),
                    l: 1,
                    params: vec![("c".into(), c)],
                    kind: Kind::Constant { c: F::of(c) },
                    analytic: Some(F::one()),
                })
            }
            "cycle" => {
                reject_unknown(name, params, &["p"])?;
                let p = param(params, "p", 2.0);
                if p < 1.0 || p.fract() != 0.0 || p > 64.0 {
                    return Err(SystemsError::InvalidParam {
                        map: name.into(),
                        param: "p".into(),
                        message: format!("period must be an integer in 1..=64, got {p}"),
                    });
                }
                Ok(DelayMap {
                    name: name.into(),
                    l: p as usize,
                    params: vec![("p".into(), p)],
                    kind: Kind::Cycle,
                    // Coordinate rotation: an isometry of the box.
                    analytic: Some(F::one()),
                })
            }
            "decay" => {
                reject_unknown(name, params, &["ratio"])?;
                let ratio = param(params, "ratio", 0.5);
                if !(-1.0..=1.0).contains(&ratio) {
                    return Err(SystemsError::InvalidParam {
                        map: name.into(),
                        param: "ratio".into(),
                        message: format!("must lie in [-1, 1], got {ratio}"),
                    });
                }
                Ok(DelayMap {
                    name: name.into(),
                    l: 1,
                    params: vec![("ratio".into(), ratio)],
                    kind: Kind::Decay {
                        ratio: F::of(ratio),
                    },
                    analytic: Some(F::one()),
                })
            }
            _ => Err(SystemsError::UnknownMap { name: name.into() }),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn params(&self) -> &[(String, f64)] {
        &self.params
    }

    /// `y(t)` from the window `(y(t-1), ..., y(t-L))`, most recent first.
    pub fn update(&self, w: &[F]) -> F {
        debug_assert_eq!(w.len(), self.l);
        match &self.kind {
            Kind::Chebyshev => F::one() - F::of(2.0) * w[0] * w[0],
            Kind::Tent => F::one() - F::of(2.0) * w[0].abs(),
            Kind::Henon { a, b, s } => F::one() / *s - *a * *s * w[0] * w[0] + *b * w[1],
            Kind::Constant { c } => *c,
            Kind::Cycle => w[self.l - 1],
            Kind::Decay { ratio } => *ratio * w[0],
        }
    }

    /// Full delay-coordinate step: new value in front, window shifted down.
    pub fn phi(&self, w: &[F]) -> Vec<F> {
        let mut out = Vec::with_capacity(self.l);
        out.push(self.update(w));
        out.extend_from_slice(&w[..self.l - 1]);
        out
    }

    pub fn analytic_bound(&self) -> Option<F> {
        self.analytic
    }
}

fn param(params: &BTreeMap<String, f64>, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

fn reject_unknown(
    map: &str,
    params: &BTreeMap<String, f64>,
    allowed: &[&str],
) -> Result<(), SystemsError> {
    for key in params.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(SystemsError::UnknownParam {
                map: map.into(),
                param: key.clone(),
            });
        }
    }
    Ok(())
}

/// How the trajectory was produced; enough to regenerate it bit-identically.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySource {
    pub map_name: String,
    pub params: Vec<(String, f64)>,
    pub seed_window: Vec<f64>,
    pub train_len: usize,
    pub eval_len: usize,
    pub burn_in: usize,
}

/// Time series on `t = t_min ..= t_max` with `t <= 0` the training segment
/// and `t > 0` held out for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<F> {
    values: Vec<F>,
    t_min: i64,
    source: TrajectorySource,
}

impl<F: Scalar> Trajectory<F> {
    pub fn from_parts(
        values: Vec<F>,
        t_min: i64,
        source: TrajectorySource,
    ) -> Result<Self, SystemsError> {
        for (i, v) in values.iter().enumerate() {
            if !(v.abs() <= F::one()) {
                return Err(SystemsError::ValueOutOfRange {
                    t: t_min + i as i64,
                    value: v.as_f64(),
                });
            }
        }
        Ok(Trajectory {
            values,
            t_min,
            source,
        })
    }

    pub fn t_min(&self) -> i64 {
        self.t_min
    }

    pub fn t_max(&self) -> i64 {
        self.t_min + self.values.len() as i64 - 1
    }

    /// Position of t = 0 in `values`.
    pub fn origin_index(&self) -> usize {
        (-self.t_min) as usize
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn value_at(&self, t: i64) -> Option<F> {
        if t < self.t_min {
            return None;
        }
        self.values.get((t - self.t_min) as usize).copied()
    }

    /// The `l` most recent training values `y(-l+1) ..= y(0)`, ascending t.
    pub fn head(&self, l: usize) -> Vec<F> {
        let end = self.origin_index() + 1;
        self.values[end - l..end].to_vec()
    }

    pub fn source(&self) -> &TrajectorySource {
        &self.source
    }
}

/// Iterates `map` from `seed_window` (oldest value first). The first
/// `burn_in` iterates are discarded; the rest land on
/// `t = -train_len+1 ..= eval_len`.
pub fn generate<F: Scalar>(
    map: &DelayMap<F>,
    seed_window: &[F],
    train_len: usize,
    eval_len: usize,
    burn_in: usize,
) -> Result<Trajectory<F>, SystemsError> {
    let l = map.l();
    if seed_window.len() != l {
        return Err(SystemsError::SeedWindowLength {
            map: map.name().into(),
            expected: l,
            got: seed_window.len(),
        });
    }
    for (i, v) in seed_window.iter().enumerate() {
        if !(v.abs() <= F::one()) {
            return Err(SystemsError::SeedOutOfRange {
                index: i,
                value: v.as_f64(),
            });
        }
    }
    if train_len < l + 1 {
        return Err(SystemsError::LengthTooShort {
            field: "train_len",
            got: train_len,
            min: l + 1,
        });
    }
    if eval_len < 1 {
        return Err(SystemsError::LengthTooShort {
            field: "eval_len",
            got: eval_len,
            min: 1,
        });
    }

    let total = burn_in + train_len + eval_len;
    let t_min = -(train_len as i64) + 1;
    let mut raw: Vec<F> = Vec::with_capacity(total);
    raw.extend_from_slice(seed_window);
    let mut window = vec![F::zero(); l];
    while raw.len() < total {
        for (i, w) in window.iter_mut().enumerate() {
            *w = raw[raw.len() - 1 - i];
        }
        let v = map.update(&window);
        if !(v.is_finite() && v.abs() <= F::one()) {
            let t = raw.len() as i64 - burn_in as i64 + t_min;
            return Err(SystemsError::DomainEscape {
                map: map.name().into(),
                t,
                value: v.as_f64(),
            });
        }
        raw.push(v);
    }

    let values = raw.split_off(burn_in);
    let source = TrajectorySource {
        map_name: map.name().into(),
        params: map.params().to_vec(),
        seed_window: seed_window.iter().map(|v| v.as_f64()).collect(),
        train_len,
        eval_len,
        burn_in,
    };
    Trajectory::from_parts(values, t_min, source)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertMethod {
    Analytic,
    Sampled,
}

impl std::fmt::Display for CertMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CertMethod::Analytic => write!(f, "analytic"),
            CertMethod::Sampled => write!(f, "sampled"),
        }
    }
}

/// Upper (analytic) or lower-estimate (sampled) certificate for the operator
/// Lipschitz constant of the delay-coordinate step, clamped below at 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzCertificate<F> {
    pub e_lambda: F,
    pub method: CertMethod,
    pub sample_count: usize,
}

pub fn lipschitz<F: Scalar>(
    map: &DelayMap<F>,
    method: CertMethod,
    n_pairs: usize,
    seed: u64,
) -> Result<LipschitzCertificate<F>, SystemsError> {
    match method {
        CertMethod::Analytic => {
            let bound = map
                .analytic_bound()
                .ok_or_else(|| SystemsError::NoAnalyticBound {
                    map: map.name().into(),
                })?;
            Ok(LipschitzCertificate {
                e_lambda: bound.max(F::one()),
                method,
                sample_count: 0,
            })
        }
        CertMethod::Sampled => {
            if n_pairs < MIN_SAMPLE_PAIRS {
                return Err(SystemsError::SampleCountTooSmall {
                    got: n_pairs,
                    min: MIN_SAMPLE_PAIRS,
                });
            }
            let l = map.l();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let draw = |rng: &mut ChaCha8Rng| -> Vec<F> {
                (0..l)
                    .map(|_| F::of(2.0 * rng.random::<f64>() - 1.0))
                    .collect()
            };
            let mut best = F::zero();
            for _ in 0..n_pairs {
                let w = draw(&mut rng);
                let w2 = draw(&mut rng);
                let dist = norm2_diff(&w, &w2);
                if dist == F::zero() {
                    continue;
                }
                let fw = map.phi(&w);
                let fw2 = map.phi(&w2);
                let ratio = norm2_diff(&fw, &fw2) / dist;
                best = best.max(ratio);
            }
            Ok(LipschitzCertificate {
                e_lambda: best.max(F::one()),
                method,
                sample_count: n_pairs,
            })
        }
    }
}

fn norm2_diff<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter()
        .zip(b)
        .fold(F::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
        .sqrt()
}
