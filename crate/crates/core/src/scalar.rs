use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Scalar type every numeric stage is generic over. Blanket-implemented, so
/// `f32` and `f64` (and any other IEEE-like float with the same traits)
/// qualify automatically.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Sum + Send + Sync + 'static
{
    /// Lossy conversion used at error/reporting boundaries, where diagnostics
    /// are fixed to `f64`.
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Conversion from literals and config values. Panics only if the target
    /// type cannot represent any finite approximation, which no IEEE float
    /// triggers.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 must convert into a Scalar")
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + Debug + Display + Sum + Send + Sync + 'static
{
}
