//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
///
/// Expression literals, configuration values and tolerances are carried as
/// `f64` and converted with [`Real::lit`] at the point of use.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }

    /// Positive part `max(x, 0)`.
    #[inline]
    fn pos_part(self) -> Self {
        self.max(Self::zero())
    }

    /// Negative part `max(-x, 0)`.
    #[inline]
    fn neg_part(self) -> Self {
        (-self).max(Self::zero())
    }
}

impl Real for f32 {}
impl Real for f64 {}
