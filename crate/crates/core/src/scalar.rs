//! Floating-point scalar abstraction shared by the exact (non-stochastic) layers.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumCast};

/// Real scalar usable for amplitudes and density-matrix entries: `f32` or `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Machine epsilon scaled for iterative-solver stopping rules.
    fn solver_tolerance() -> Self;

    fn of(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("f64 is representable in every Scalar")
    }

    fn to_f64_lossless(self) -> f64 {
        <f64 as NumCast>::from(self).expect("Scalar always widens to f64")
    }
}

impl Scalar for f32 {
    fn solver_tolerance() -> Self {
        1e-7
    }
}

impl Scalar for f64 {
    fn solver_tolerance() -> Self {
        1e-15
    }
}
