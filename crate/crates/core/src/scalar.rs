//! Scalar abstraction for score and overhead arithmetic.
//!
//! The scoring and overhead math only needs a field with ordering, so it is
//! written once over [`Scalar`] and instantiated for `f32`, `f64` and exact
//! rationals. The rest of the engine uses the `f64` aliases exported at the
//! crate root.

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{FromPrimitive, Num};

/// Numeric type usable for scores, weights and overhead ratios.
pub trait Scalar: Num + Copy + PartialOrd + Debug + Send + Sync + 'static {
    /// Converts a forward-pass count into the scalar domain.
    fn from_count(count: u64) -> Self;

    /// True when `self` lies in the closed unit interval.
    fn in_unit_interval(&self) -> bool {
        *self >= Self::zero() && *self <= Self::one()
    }
}

macro_rules! impl_float_scalar {
    ($($t:ty),*) => {$(
        impl Scalar for $t {
            fn from_count(count: u64) -> Self {
                count as $t
            }
        }
    )*};
}

impl_float_scalar!(f32, f64);

impl Scalar for Ratio<i64> {
    fn from_count(count: u64) -> Self {
        <Ratio<i64> as FromPrimitive>::from_u64(count).expect("count fits in i64")
    }
}

/// Exact rational scalar, used to check the arithmetic identities without
/// rounding.
pub type Exact = Ratio<i64>;

/// Builds an exact decimal `units / 10^places`.
pub fn exact_decimal(units: i64, places: u32) -> Exact {
    Ratio::new(units, 10i64.pow(places))
}
