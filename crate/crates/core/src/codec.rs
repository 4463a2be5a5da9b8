//! Quantization grid on (-1, 1): jittered near-uniform points, certification
//! of the error radius, and the upward-tie quantizer.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scalar::Scalar;
use crate::systems::Trajectory;

/// Head values must clear every cell midpoint by this much, so the initial
/// window's quantization is stable.
pub const MIDPOINT_CLEARANCE: f64 = 1e-12;

/// Retry jitter used when the configured scale is 0 (an exactly uniform grid
/// cannot be repaired by redrawing nothing). Small enough to keep the
/// certified radius within a few percent of 1.
fn fallback_scale(k: usize) -> f64 {
    1.0 / (20.0 * k as f64)
}

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("grid needs K >= 2, got {k}")]
    InvalidK { k: usize },
    #[error("jitter_scale {scale} is outside [0, 1/(2K)) = [0, {max})")]
    InvalidJitterScale { scale: f64, max: f64 },
    #[error("no certifiable grid after {attempts} jitter attempts (head values keep hitting midpoints, or jitter is stuck at 0)")]
    RetriesExhausted { attempts: u32 },
    #[error("quantization range [{t_lo}, {t_hi}] is not inside the trajectory support [{t_min}, {t_max}]")]
    RangeOutsideTrajectory {
        t_lo: i64,
        t_hi: i64,
        t_min: i64,
        t_max: i64,
    },
    #[error("quantization range [{t_lo}, {t_hi}] is empty")]
    EmptyRange { t_lo: i64, t_hi: i64 },
    #[error("grid points fail certification: {reason}")]
    BadGridPoints { reason: String },
}

/// Certified quantization grid: strictly increasing nonzero points in
/// (-1, 1), with `radius_x_k / K` an upper bound on the distance from any
/// y in [-1, 1] to its quantized point.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<F> {
    points: Vec<F>,
    midpoints: Vec<F>,
    radius_x_k: F,
    jitter_seed: u64,
    jitter_scale: f64,
    attempts: u32,
}

impl<F: Scalar> Grid<F> {
    /// Rebuilds a grid from bare points (artifact loading), re-running the
    /// structural certification and recomputing the radius.
    pub fn from_parts(
        points: Vec<F>,
        jitter_seed: u64,
        jitter_scale: f64,
        attempts: u32,
    ) -> Result<Self, CodecError> {
        if points.len() < 2 {
            return Err(CodecError::InvalidK { k: points.len() });
        }
        certify_points(&points).map_err(|reason| CodecError::BadGridPoints { reason })?;
        Ok(Grid {
            midpoints: midpoints(&points),
            radius_x_k: radius_x_k(&points),
            points,
            jitter_seed,
            jitter_scale,
            attempts,
        })
    }

    pub fn k(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[F] {
        &self.points
    }

    /// 1-based access: `point(k)` is a_k.
    pub fn point(&self, k: usize) -> F {
        self.points[k - 1]
    }

    /// Certified C: K times the worst quantization error radius.
    pub fn radius_x_k(&self) -> F {
        self.radius_x_k
    }

    pub fn jitter_seed(&self) -> u64 {
        self.jitter_seed
    }

    pub fn jitter_scale(&self) -> f64 {
        self.jitter_scale
    }

    /// Index of the jitter attempt that certified (0 = first draw).
    pub fn attempts(&self) -> u32 {
        self.attempts
    }

    /// Stable identity for cross-referencing artifacts.
    pub fn fingerprint(&self) -> u64 {
        let words = std::iter::once(self.points.len() as u64)
            .chain(self.points.iter().map(|p| p.as_f64().to_bits()));
        fnv1a(words)
    }
}

/// Builds a grid of K points a_k = -1 + (2k-1)/K plus deterministic jitter,
/// retrying with fresh jitter until the points certify and no value in
/// `head` sits within `MIDPOINT_CLEARANCE` of a cell midpoint.
pub fn build_grid<F: Scalar>(
    k: usize,
    head: &[F],
    jitter_scale: f64,
    seed: u64,
    max_retries: u32,
) -> Result<Grid<F>, CodecError> {
    if k < 2 {
        return Err(CodecError::InvalidK { k });
    }
    let max = 1.0 / (2.0 * k as f64);
    if !jitter_scale.is_finite() || jitter_scale < 0.0 || jitter_scale >= max {
        return Err(CodecError::InvalidJitterScale {
            scale: jitter_scale,
            max,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 0..=max_retries {
        let scale = if jitter_scale > 0.0 || attempt == 0 {
            jitter_scale
        } else {
            fallback_scale(k)
        };
        let points: Vec<F> = (1..=k)
            .map(|i| {
                // The stream is consumed even when scale is 0 so attempt
                // numbering alone determines the draw.
                let u = rng.random::<f64>();
                let base = -1.0 + (2 * i - 1) as f64 / k as f64;
                F::of(base + scale * (2.0 * u - 1.0))
            })
            .collect();
        if certify_points(&points).is_err() {
            continue;
        }
        let mids = midpoints(&points);
        let clear = F::of(MIDPOINT_CLEARANCE);
        let head_ok = head
            .iter()
            .all(|&y| mids.iter().all(|&m| (y - m).abs() > clear));
        if !head_ok {
            continue;
        }
        return Ok(Grid {
            radius_x_k: radius_x_k(&points),
            midpoints: mids,
            points,
            jitter_seed: seed,
            jitter_scale,
            attempts: attempt,
        });
    }
    Err(CodecError::RetriesExhausted {
        attempts: max_retries + 1,
    })
}

fn certify_points<F: Scalar>(points: &[F]) -> Result<(), String> {
    let k = points.len();
    if !(points[0] > F::of(-1.0)) || !(points[k - 1] < F::one()) {
        return Err(format!(
            "endpoints {} .. {} not strictly inside (-1, 1)",
            points[0],
            points[k - 1]
        ));
    }
    for i in 1..k {
        if !(points[i] > points[i - 1]) {
            return Err(format!(
                "points not strictly increasing at position {i}: {} then {}",
                points[i - 1],
                points[i]
            ));
        }
    }
    if let Some(i) = points.iter().position(|&p| p == F::zero()) {
        return Err(format!("point {} is exactly zero", i + 1));
    }
    Ok(())
}

fn midpoints<F: Scalar>(points: &[F]) -> Vec<F> {
    points
        .windows(2)
        .map(|w| (w[0] + w[1]) / F::of(2.0))
        .collect()
}

/// C = K * max(half-gaps between neighbors, end-cell radii to the borders).
fn radius_x_k<F: Scalar>(points: &[F]) -> F {
    let k = points.len();
    let mut radius = (points[0] + F::one()).max(F::one() - points[k - 1]);
    for w in points.windows(2) {
        radius = radius.max((w[1] - w[0]) / F::of(2.0));
    }
    F::of(k as f64) * radius
}

/// Nearest grid index (1-based) with midpoint ties resolved upward.
pub fn quantize<F: Scalar>(y: F, grid: &Grid<F>) -> usize {
    grid.midpoints.partition_point(|&m| m <= y) + 1
}

/// Grid indices aligned with a trajectory slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedSeries {
    indices: Vec<usize>,
    t_min: i64,
    k: usize,
    grid_ref: u64,
}

impl QuantizedSeries {
    pub fn from_parts(indices: Vec<usize>, t_min: i64, k: usize, grid_ref: u64) -> Self {
        QuantizedSeries {
            indices,
            t_min,
            k,
            grid_ref,
        }
    }

    pub fn t_min(&self) -> i64 {
        self.t_min
    }

    pub fn t_max(&self) -> i64 {
        self.t_min + self.indices.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn grid_ref(&self) -> u64 {
        self.grid_ref
    }

    pub fn index_at(&self, t: i64) -> Option<usize> {
        if t < self.t_min {
            return None;
        }
        self.indices.get((t - self.t_min) as usize).copied()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

/// Element-wise quantization of `traj` over `t = t_lo ..= t_hi`.
pub fn quantize_series<F: Scalar>(
    traj: &Trajectory<F>,
    grid: &Grid<F>,
    t_lo: i64,
    t_hi: i64,
) -> Result<QuantizedSeries, CodecError> {
    if t_lo > t_hi {
        return Err(CodecError::EmptyRange { t_lo, t_hi });
    }
    if t_lo < traj.t_min() || t_hi > traj.t_max() {
        return Err(CodecError::RangeOutsideTrajectory {
            t_lo,
            t_hi,
            t_min: traj.t_min(),
            t_max: traj.t_max(),
        });
    }
    let indices = (t_lo..=t_hi)
        .map(|t| quantize(traj.value_at(t).expect("range checked"), grid))
        .collect();
    Ok(QuantizedSeries {
        indices,
        t_min: t_lo,
        k: grid.k(),
        grid_ref: grid.fingerprint(),
    })
}

pub(crate) fn fnv1a(words: impl Iterator<Item = u64>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for word in words {
        for byte in word.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}
