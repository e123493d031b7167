//! Scalar abstraction shared by the solvers and simulators.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar the numerics are generic over: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        <Self as FromPrimitive>::from_usize(v).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Standard normal CDF, evaluated in double precision.
pub fn normal_cdf<S: Real>(z: S) -> S {
    S::lit(0.5 * libm::erfc(-z.as_f64() / std::f64::consts::SQRT_2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_cdf_reference_values() {
        assert_eq!(normal_cdf(0.0_f64), 0.5);
        assert!((normal_cdf(-1.0_f64) - 0.158_655_253_931_457_05).abs() < 1e-15);
        assert!((normal_cdf(1.96_f32) - 0.975).abs() < 1e-4);
    }
}
