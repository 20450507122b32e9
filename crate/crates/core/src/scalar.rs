//! Scalar abstraction for the linear-symplectic layer.

use std::fmt::{Debug, Display, LowerExp};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar usable by the generic symplectic types.
///
/// Implemented for `f32` and `f64`. Tolerances written for double precision
/// are rescaled through [`Real::tol`].
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Display + LowerExp + Debug + Send + Sync + 'static
{
    /// Converts an `f64` literal.
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("literal representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// Rescales a tolerance calibrated for `f64` to this type's precision.
    fn tol(x: f64) -> Self {
        let eps = <Self as ToPrimitive>::to_f64(&Self::default_epsilon()).unwrap_or(f64::EPSILON);
        Self::lit((x * eps / f64::EPSILON).min(0.1))
    }
}

impl Real for f64 {
    fn tol(x: f64) -> Self {
        x
    }
}

impl Real for f32 {}
