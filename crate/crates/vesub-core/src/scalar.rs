//! Scalar abstraction: every numerical routine in this crate is generic over
//! [`Real`], an IEEE float with the transcendental functions we need.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar: f32 or f64 (f64 for all shipped experiments).
pub trait Real:
    Float
    + FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an f64 literal or constant table entry.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant not representable in scalar type")
    }

    /// Conversion from an index or count.
    #[inline]
    fn from_index(n: usize) -> Self {
        Self::from_usize(n).expect("index not representable in scalar type")
    }

    /// Widening back to f64 for reporting.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + AddAssign
        + SubAssign
        + MulAssign
        + DivAssign
        + Sum
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}
