use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar used throughout the numerical modules.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from `f64`.
    fn of(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 is representable in every Scalar")
    }

    fn of_usize(v: usize) -> Self {
        <Self as FromPrimitive>::from_usize(v).expect("usize is representable in every Scalar")
    }

    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions_round_trip() {
        assert_eq!(f64::of(0.25), 0.25);
        assert_eq!(f32::of(0.25), 0.25f32);
        assert_eq!(f32::of_usize(7).as_f64(), 7.0);
    }
}
