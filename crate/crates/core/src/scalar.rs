//! Scalar abstraction: the pipeline is generic over `f32`/`f64` pixels.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar a pixel intensity can be stored in.
///
/// Image containers, partitioners, and classifiers are generic over this;
/// certificate statistics (probabilities, confidence bounds, radii) are
/// always computed in `f64` regardless of the pixel scalar.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static
{
    /// Converts from `f64`, panicking only on values unrepresentable in any
    /// float type (never happens for finite pipeline values).
    #[inline]
    fn from64(x: f64) -> Self {
        Self::from_f64(x).expect("f64 value representable in scalar type")
    }

    /// Widens to `f64`.
    #[inline]
    fn into64(self) -> f64 {
        self.to_f64().expect("scalar widens to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions_round_trip_for_both_scalars() {
        assert_eq!(f64::from64(0.25).into64(), 0.25);
        assert_eq!(f32::from64(0.25).into64(), 0.25);
        // f32 narrows with rounding but stays close.
        let narrowed = f32::from64(0.1).into64();
        assert!((narrowed - 0.1).abs() < 1e-7);
    }
}
