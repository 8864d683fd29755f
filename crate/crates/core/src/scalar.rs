//! Floating-point abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Real scalar type the generators, measures and propagators are computed in.
///
/// Implemented for `f32` and `f64`. Tolerances quoted throughout the crate
/// are meant for `f64`; `f32` works with correspondingly looser checks.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into the scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    /// Converts an integer into the scalar type.
    #[inline]
    fn from_int(n: i64) -> Self {
        Self::from_i64(n).expect("integer representable in scalar type")
    }

    /// Lossy conversion used for reporting and the f64-only dense kernels.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Relative tolerance for internal postcondition checks.
    #[inline]
    fn check_tol() -> Self {
        Self::epsilon() * Self::lit(1.0e4)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Maximum absolute entrywise difference of two equally long slices.
pub fn max_abs_diff<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(T::zero(), |m, (&x, &y)| m.max((x - y).abs()))
}

/// Largest absolute entry of a slice.
pub fn max_abs<T: Scalar>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

/// `true` when `|a - b| <= tol * max(1, |a|, |b|)`.
pub fn rel_close<T: Scalar>(a: T, b: T, tol: T) -> bool {
    let scale = T::one().max(a.abs()).max(b.abs());
    (a - b).abs() <= tol * scale
}
