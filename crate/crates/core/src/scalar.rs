//! Floating point abstraction shared by every numerical module.

use std::fmt::{Debug, Display, LowerExp};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar the solvers and certificates are generic over: `f32` or `f64`.
///
/// Expression constants are always parsed as binary64 and converted with
/// [`Scalar::from_f64_lossy`] on evaluation.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + LowerExp + Send + Sync + 'static
{
    /// Default residual tolerance for the per-step nonlinear solve.
    const NEWTON_TOL: Self;

    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).unwrap_or_else(Self::nan)
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).unwrap_or_else(Self::nan)
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Shorthand for literal constants in generic code.
    fn lit(x: f64) -> Self {
        Self::from_f64_lossy(x)
    }
}

impl Scalar for f32 {
    const NEWTON_TOL: Self = 2e-6;
}

impl Scalar for f64 {
    const NEWTON_TOL: Self = 1e-12;
}
