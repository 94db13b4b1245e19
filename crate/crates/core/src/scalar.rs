//! Floating-point abstraction for the generic numerical kernels.

use nalgebra::RealField;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// f32 or f64.
pub trait Scalar:
    RealField + Float + FloatConst + FromPrimitive + ToPrimitive + Copy + Send + Sync + 'static
{
    /// Lossy conversion from an f64 literal.
    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite literal")
    }

    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
