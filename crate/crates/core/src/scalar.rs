//! Scalar abstraction shared by every numeric kernel in the crate.

use nalgebra::RealField;
use num_traits::{FloatConst, FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};

/// Floating point type the geometry kernels are generic over: `f32` or `f64`.
pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + FloatConst + Display + Debug + Default + Send + Sync
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Total order on scalars for sorting; NaN compares equal so sorts stay stable.
#[inline]
pub(crate) fn cmp_scalar<T: Scalar>(a: &T, b: &T) -> std::cmp::Ordering {
    a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal)
}
