use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar the numerical routines are written against.
///
/// Implemented for `f32` and `f64`. Tolerances that only make sense in a
/// given precision (row-sum checks, identity tests) come from
/// [`Scalar::feasibility_tol`].
pub trait Scalar:
    'static
    + Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
{
    /// Tolerance used when checking that a membership row sums to one.
    fn feasibility_tol() -> Self;

    /// Converts an `f64` constant. Panics only if the value is not representable,
    /// which cannot happen for `f32`/`f64`.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable in scalar type")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    fn feasibility_tol() -> Self {
        1e-4
    }
}

impl Scalar for f64 {
    fn feasibility_tol() -> Self {
        1e-9
    }
}
