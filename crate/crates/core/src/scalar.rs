//! Scalar abstraction shared by every map and metric in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point score type: `f32` or `f64`.
///
/// Maps, metrics and aggregated tables are generic over this trait so the
/// same kernels run at either precision. Counts and ranks are always kept in
/// integers and only converted at the final division.
pub trait Score: Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static {
    /// Converts an `f64` constant, which is always representable for `f32`/`f64`.
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("f64 constant representable in score type")
    }

    /// Converts a count.
    fn count(value: usize) -> Self {
        Self::from_usize(value).expect("count representable in score type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("score convertible to f64")
    }

    /// True when the value lies in the closed unit interval (NaN is rejected).
    fn in_unit_interval(self) -> bool {
        self >= Self::zero() && self <= Self::one()
    }
}

impl Score for f32 {}
impl Score for f64 {}
