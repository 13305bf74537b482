//! Floating-point abstraction shared by every estimator.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar used throughout the estimators: `f32` or `f64`.
///
/// Solver tolerances are tied to the precision of the type; the `f64`
/// values are the ones the estimators are specified against.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Convergence tolerance on scores (weighted, per observation).
    const SCORE_TOL: f64;
    /// Convergence tolerance on one-dimensional fluctuation parameters.
    const STEP_TOL: f64;

    /// Lossless-enough conversion from an `f64` literal.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn of_usize(x: usize) -> Self {
        Self::from_usize(x).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f64 {
    const SCORE_TOL: f64 = 1e-10;
    const STEP_TOL: f64 = 1e-12;
}

impl Real for f32 {
    const SCORE_TOL: f64 = 1e-4;
    const STEP_TOL: f64 = 1e-5;
}

/// Logistic function, evaluated without overflow for large |x|.
#[inline]
pub fn expit<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub fn logit<T: Real>(p: T) -> T {
    (p / (T::one() - p)).ln()
}

/// Clamp into `[lo, hi]`.
#[inline]
pub fn clamp<T: Real>(x: T, lo: T, hi: T) -> T {
    x.max(lo).min(hi)
}
