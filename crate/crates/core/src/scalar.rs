//! Scalar abstraction shared by the scoring code.
//!
//! Everything that turns counts into probabilities is written against
//! [`Scalar`], so the engine runs in `f64` (the default) or `f32`.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type usable for risk scores: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts a count. Counts are far below 2^53 in practice, so this never fails for `f64`.
    fn from_count(count: u64) -> Self {
        Self::from_u64(count).expect("count representable as float")
    }

    /// Converts a configuration value given in double precision.
    fn from_config(value: f64) -> Self {
        Self::from_f64(value).expect("config value representable as float")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
