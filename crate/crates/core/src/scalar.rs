//! Floating-point scalar abstraction: all model math is generic over `Scalar`
//! (f32 or f64), with f64 aliases exported at the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub trait Scalar:
    Float
    + FromPrimitive
    + NumAssignOps
    + Sum
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Narrowing cast from an f64 config knob into the working scalar type.
pub fn cast<F: Scalar>(x: f64) -> F {
    F::from(x).expect("f64 -> Scalar cast")
}
