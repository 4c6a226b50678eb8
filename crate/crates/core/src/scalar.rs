//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! Everything is written against [`Real`], which is implemented for `f32` and
//! `f64`. Linear algebra comes from `nalgebra`, so the trait is a thin layer
//! over its `RealField` plus the `num-traits` conversions we need to move
//! literals and diagnostics in and out of the generic code.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar usable by the solvers and estimators.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + std::fmt::Display + 'static {
    /// Relative tolerance used by default when nothing else is requested.
    ///
    /// `1e-10` for `f64`; for lower precision types it is capped from below
    /// by a small multiple of machine epsilon.
    fn default_tol() -> Self {
        let eps = Self::default_epsilon().to_f64().unwrap_or(f64::EPSILON);
        lit(f64::max(1e-10, 64.0 * eps))
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal is representable")
}

/// Converts a count into the working scalar.
#[inline]
pub fn count<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count is representable")
}
