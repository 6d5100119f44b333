//! The floating-point abstraction every algorithm in this crate is written against.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// A real scalar usable as a coordinate and as an analysis quantity.
///
/// Implemented for `f32` and `f64`. The potential and mass constants reach
/// `2^57`, so the guarantee checks are only meaningful at `f64` precision;
/// `f32` is supported for the geometry, trees and oracles.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal. Panics only for values the type cannot hold.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal not representable")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count not representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `a ≤ b` up to a relative slack of `tol · max(|a|, |b|)`.
#[inline]
pub fn approx_le<T: Scalar>(a: T, b: T, tol: f64) -> bool {
    a <= b + T::lit(tol) * a.abs().max(b.abs())
}

/// `|a − b| ≤ tol · max(|a|, |b|)`.
#[inline]
pub fn approx_eq<T: Scalar>(a: T, b: T, tol: f64) -> bool {
    (a - b).abs() <= T::lit(tol) * a.abs().max(b.abs())
}

/// Exact test for `v = 2^a` with integer `a` (zero is not a power of two).
pub fn is_power_of_two<T: Scalar>(v: T) -> bool {
    if !v.is_finite() || v <= T::zero() {
        return false;
    }
    let (mantissa, _, _) = v.integer_decode();
    mantissa.is_power_of_two()
}

/// Smallest power of two that is `≥ v`, for `v > 0`.
pub fn ceil_power_of_two<T: Scalar>(v: T) -> T {
    let two = T::lit(2.0);
    let exp = v.log2().ceil().to_i32().unwrap_or(0);
    let mut r = two.powi(exp);
    while r < v {
        r = r * two;
    }
    while r / two >= v {
        r = r / two;
    }
    r
}

/// `⌊log₂ v⌋` for `v > 0`, corrected against rounding in `log2`.
pub fn floor_log2<T: Scalar>(v: T) -> i32 {
    let two = T::lit(2.0);
    let mut e = v.log2().floor().to_i32().unwrap_or(0);
    while two.powi(e + 1) <= v {
        e += 1;
    }
    while two.powi(e) > v {
        e -= 1;
    }
    e
}
