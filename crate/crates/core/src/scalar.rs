use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the scoring code is generic over.
///
/// Implemented for `f32` and `f64`. Counts are kept as integers everywhere and
/// only converted at the last step, so the choice of scalar affects rounding of
/// reported ratios but never the underlying tallies.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Convert an `f64` literal. Panics only if the value is unrepresentable,
    /// which cannot happen for finite inputs with `f32`/`f64`.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal fits in scalar")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count fits in scalar")
    }

    /// Ratio of two counts; `0` when the denominator is zero.
    fn ratio(num: usize, den: usize) -> Self {
        if den == 0 {
            Self::zero()
        } else {
            Self::from_count(num) / Self::from_count(den)
        }
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Arithmetic mean of a slice; `None` when empty.
pub fn mean<S: Scalar>(values: &[S]) -> Option<S> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().copied().sum::<S>() / S::from_count(values.len()))
    }
}
