//! Scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar the toolkit is generic over: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Lossy literal conversion, `lit::<T>(0.5)`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

#[inline]
pub(crate) fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Standard normal density.
pub fn std_normal_pdf<T: Real>(x: T) -> T {
    let two = lit::<T>(2.0);
    (-(x * x) / two).exp() / (two * T::PI()).sqrt()
}

/// Standard normal CDF, `Φ(x) = (1 + erf(x/√2)) / 2`.
pub fn std_normal_cdf<T: Real>(x: T) -> T {
    // erfc form keeps precision in the lower tail
    lit(0.5 * statrs::function::erf::erfc(-to_f64(x) / std::f64::consts::SQRT_2))
}

/// Gaussian tail integral `Q(x) = 1 − Φ(x)`.
pub fn gaussian_tail<T: Real>(x: T) -> T {
    lit(0.5 * statrs::function::erf::erfc(to_f64(x) / std::f64::consts::SQRT_2))
}

/// Inverse of the Gaussian tail integral, `Q⁻¹(p)` for `p ∈ (0, 1)`.
pub fn gaussian_tail_inv<T: Real>(p: T) -> T {
    let p = to_f64(p);
    let x = std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p);
    // erfc_inv is good to ~1e-10 relative in the far tail; one Newton step on Q fixes it
    let x = x + (gaussian_tail(x) - p) / std_normal_pdf(x);
    lit(x)
}

/// `level · sat(x / level)`: clamp to `[-level, level]`.
#[inline]
pub fn saturate<T: Real>(x: T, level: T) -> T {
    x.max(-level).min(level)
}
