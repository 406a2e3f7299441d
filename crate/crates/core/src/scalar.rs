//! Scalar abstraction for the data model and the structural kernels.
//!
//! The problem data, objective evaluation and the LDL/total-nonnegativity
//! kernels are written against [`Scalar`] so they run in `f32` as well as
//! `f64`. The numerical solvers work in `f64` only: their tolerances are
//! pinned at double precision.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

pub trait Scalar:
    Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + nalgebra::Scalar
    + 'static
{
    /// Converts an `f64` constant into this scalar type.
    #[inline]
    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 constant representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
