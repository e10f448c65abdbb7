//! Scalar abstraction shared by the model, LP and linear-algebra code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point types the numerical core is generic over.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Absolute tolerance for stochasticity and feasibility checks.
    fn model_tol() -> Self;

    /// Magnitudes below this are treated as zero when pivoting.
    fn pivot_tol() -> Self;

    /// Lossless-enough conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn model_tol() -> Self {
        1e-9
    }

    fn pivot_tol() -> Self {
        1e-11
    }
}

impl Scalar for f32 {
    fn model_tol() -> Self {
        1e-5
    }

    fn pivot_tol() -> Self {
        1e-6
    }
}

/// Positivity threshold for graph edges derived from floating point data.
pub const EDGE_EPS: f64 = 1e-12;

#[inline]
pub(crate) fn positive<T: Scalar>(x: T) -> bool {
    x.as_f64() > EDGE_EPS
}
