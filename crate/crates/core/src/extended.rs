use std::fmt;

use crate::scalar::Real;

/// A nonnegative extended real: either a finite value or `+∞`.
///
/// Infinite endpoints (ridgeless fixed points below the interpolation
/// threshold, the null-estimator end of a path) are carried as an explicit
/// tag so that no IEEE infinity ever reaches an integrand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extended<T> {
    Finite(T),
    Infinite,
}

impl<T: Real> Extended<T> {
    pub fn finite(self) -> Option<T> {
        match self {
            Extended::Finite(x) => Some(x),
            Extended::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Extended::Infinite)
    }

    /// Finite value, panicking on `+∞`. For call sites that have already
    /// excluded the infinite branch.
    pub fn unwrap_finite(self) -> T {
        self.finite().expect("extended value is infinite")
    }

    /// `1/x` with `1/0 = +∞` and `1/∞ = 0`.
    pub fn recip(self) -> Extended<T> {
        match self {
            Extended::Infinite => Extended::Finite(T::zero()),
            Extended::Finite(x) if x == T::zero() => Extended::Infinite,
            Extended::Finite(x) => Extended::Finite(T::one() / x),
        }
    }

    /// Lossy conversion for reporting; `+∞` maps to `f64::INFINITY`.
    pub fn to_f64(self) -> f64 {
        match self {
            Extended::Finite(x) => x.to_f64_lossy(),
            Extended::Infinite => f64::INFINITY,
        }
    }

    /// Relative distance between two extended values; zero when both are infinite.
    pub fn rel_diff(self, other: Extended<T>) -> f64 {
        match (self, other) {
            (Extended::Infinite, Extended::Infinite) => 0.0,
            (Extended::Finite(a), Extended::Finite(b)) => {
                let (a, b) = (a.to_f64_lossy(), b.to_f64_lossy());
                let scale = a.abs().max(b.abs());
                if scale == 0.0 {
                    0.0
                } else {
                    (a - b).abs() / scale
                }
            }
            _ => f64::INFINITY,
        }
    }
}

impl<T: Real> From<T> for Extended<T> {
    fn from(x: T) -> Self {
        Extended::Finite(x)
    }
}

impl<T: Real> PartialOrd for Extended<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        use std::cmp::Ordering;
        match (self, other) {
            (Extended::Infinite, Extended::Infinite) => Some(Ordering::Equal),
            (Extended::Infinite, _) => Some(Ordering::Greater),
            (_, Extended::Infinite) => Some(Ordering::Less),
            (Extended::Finite(a), Extended::Finite(b)) => a.partial_cmp(b),
        }
    }
}

impl<T: Real> fmt::Display for Extended<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::Finite(x) => write!(f, "{x}"),
            Extended::Infinite => write!(f, "inf"),
        }
    }
}
