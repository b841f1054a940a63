//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar type the mesh, functionals and solvers are generic over.
///
/// Implemented for `f32` and `f64`. Tolerances in this crate are stated for
/// `f64`; the `f32` instantiation is useful for quick previews of coarse
/// problems but cannot reach the default residual targets.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + LowerExp
    + Default
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    /// Converts a count into `Self`.
    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `|x|^r` with the convention `0^0 = 1`.
#[inline]
pub(crate) fn abs_pow<T: Real>(x: T, r: T) -> T {
    let ax = x.abs();
    if r == T::zero() {
        T::one()
    } else if ax == T::zero() {
        T::zero()
    } else if r == T::c(2.0) {
        ax * ax
    } else if r == T::one() {
        ax
    } else {
        ax.powf(r)
    }
}

/// `|x|^(r-2) x`, the odd power used by the cone constraint and mass terms.
#[inline]
pub(crate) fn signed_pow<T: Real>(x: T, r: T) -> T {
    if x == T::zero() {
        return T::zero();
    }
    let m = abs_pow(x, r - T::one());
    if x < T::zero() {
        -m
    } else {
        m
    }
}
