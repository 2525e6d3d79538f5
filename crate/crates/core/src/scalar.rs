//! Scalar abstraction for the numeric kernels (GP, mixtures, linear algebra).
//!
//! The planner itself works in `f64`; the statistical machinery is written
//! against [`Real`] so it can be instantiated for `f32` as well.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar usable by the numeric kernels: `f32` or `f64`.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + std::fmt::Debug + 'static
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable as float")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn is_finite_real(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Numerically stable `ln(sum(exp(x)))`.
pub fn log_sum_exp<T: Real>(xs: &[T]) -> T {
    let mut max = T::min_value().unwrap_or(T::lit(f64::MIN));
    let mut any = false;
    for &x in xs {
        if x > max {
            max = x;
        }
        any = true;
    }
    if !any || !max.is_finite_real() {
        return if any { max } else { T::lit(f64::NEG_INFINITY) };
    }
    let mut acc = T::zero();
    for &x in xs {
        acc += (x - max).exp();
    }
    max + acc.ln()
}
