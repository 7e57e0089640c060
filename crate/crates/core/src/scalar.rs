//! Scalar abstraction shared by every geometric routine.

use std::fmt::Display;
use std::num::ParseFloatError;
use std::str::FromStr;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar the crate is generic over (`f32` or `f64`).
///
/// Parsing and display are part of the bound so the text formats can
/// round-trip any scalar bit-exactly.
pub trait Real:
    RealField
    + Copy
    + FromPrimitive
    + ToPrimitive
    + FromStr<Err = ParseFloatError>
    + Display
    + Send
    + Sync
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn cast<T: Real>(v: f64) -> T {
    T::from_f64(v).expect("f64 literal representable in scalar type")
}

/// Converts `T` back to `f64` (lossless for `f32` and `f64`).
#[inline]
pub fn to_f64<T: Real>(v: T) -> f64 {
    v.to_f64().expect("scalar convertible to f64")
}

#[inline]
pub fn deg_to_rad<T: Real>(deg: T) -> T {
    deg * T::pi() / cast(180.0)
}

#[inline]
pub fn rad_to_deg<T: Real>(rad: T) -> T {
    rad * cast(180.0) / T::pi()
}

/// Relative tolerance under which two homogeneous vectors count as parallel.
#[inline]
pub(crate) fn parallel_tol<T: Real>() -> T {
    T::default_epsilon() * cast(1e3)
}
