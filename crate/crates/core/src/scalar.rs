//! Scalar abstraction shared by the generic numeric modules.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type the geometry is written against.
///
/// Tolerances scale with the precision of the type; the `f64` values are the
/// ones the acceptance suite is pinned to.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Algebraic identities (round trips, determinants).
    const ALG_TOL: f64;
    /// Degeneracy classification thresholds.
    const DEGEN_TOL: f64;
    /// Smallest admissible determinant before normalization.
    const DET_TOL: f64;
    /// Smallest admissible (1,1) entry for the NAU decomposition.
    const DECOMP_TOL: f64;
    /// Tolerance for merging values that are equal as reals.
    const DEDUP_TOL: f64;

    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal out of range")
    }

    #[inline]
    fn alg_tol() -> Self {
        Self::lit(Self::ALG_TOL)
    }

    #[inline]
    fn degen_tol() -> Self {
        Self::lit(Self::DEGEN_TOL)
    }

    #[inline]
    fn dedup_tol() -> Self {
        Self::lit(Self::DEDUP_TOL)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f64 {
    const ALG_TOL: f64 = 1e-9;
    const DEGEN_TOL: f64 = 1e-6;
    const DET_TOL: f64 = 1e-12;
    const DECOMP_TOL: f64 = 1e-9;
    const DEDUP_TOL: f64 = 1e-12;
}

impl Real for f32 {
    const ALG_TOL: f64 = 1e-4;
    const DEGEN_TOL: f64 = 1e-3;
    const DET_TOL: f64 = 1e-6;
    const DECOMP_TOL: f64 = 1e-5;
    const DEDUP_TOL: f64 = 1e-6;
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle<T: Real>(x: T) -> T {
    let two_pi = T::TAU();
    let mut y = x % two_pi;
    if y <= -T::PI() {
        y = y + two_pi;
    } else if y > T::PI() {
        y = y - two_pi;
    }
    y
}
