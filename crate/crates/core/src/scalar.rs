use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar accepted by the numeric kernels: `f32` or `f64`.
pub trait Scalar:
    'static
    + Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
{
    /// Lossy conversion from an `f64` literal or intermediate.
    fn of(x: f64) -> Self;

    fn widen(x: f32) -> Self;

    fn as_f32(self) -> f32;

    fn as_f64(self) -> f64;

    /// Converts an index or count.
    fn of_usize(n: usize) -> Self {
        Self::of(n as f64)
    }
}

impl Scalar for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn widen(x: f32) -> Self {
        x
    }
    #[inline]
    fn as_f32(self) -> f32 {
        self
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn widen(x: f32) -> Self {
        x as f64
    }
    #[inline]
    fn as_f32(self) -> f32 {
        self as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Converts an 8-bit channel to `[0, 1]`.
#[inline]
pub fn unit<T: Scalar>(byte: u8) -> T {
    T::of(byte as f64 / 255.0)
}
