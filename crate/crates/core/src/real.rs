//! Scalar abstraction over the two precisions the pipeline runs in.
//!
//! Training and evaluation use `f32`; gradient checking instantiates the
//! same code paths in `f64`, where central finite differences are tight
//! enough to compare against.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::Float;

/// Element type for all matrices and parameters.
pub trait Real:
    Float + num_traits::NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Short name used in diagnostics ("f32" / "f64").
    const NAME: &'static str;

    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;

    fn from_usize(x: usize) -> Self {
        Self::from_f64(x as f64)
    }
}

impl Real for f32 {
    const NAME: &'static str = "f32";

    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const NAME: &'static str = "f64";

    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}
