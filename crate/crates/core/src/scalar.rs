//! Scalar abstraction shared by the numeric modules.
//!
//! Affinity shares, model weights and evaluation metrics are generic over
//! [`Scalar`]; `f64` is the working precision used by the pipeline and `f32`
//! is available for compact models.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts a literal or an externally computed `f64`.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable in every Scalar")
    }

    fn of_u64(v: u64) -> Self {
        Self::from_u64(v).expect("u64 is representable in every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Logistic sigmoid, evaluated without overflow for large |z|.
pub fn logistic<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_is_symmetric_and_bounded() {
        assert_eq!(logistic(0.0f64), 0.5);
        for z in [-800.0f64, -30.0, -1.0, 1.0, 30.0, 800.0] {
            let p = logistic(z);
            assert!((0.0..=1.0).contains(&p));
            assert!((p + logistic(-z) - 1.0).abs() < 1e-12);
        }
        assert!((logistic(2.0f32) - 0.880_797_1).abs() < 1e-6);
    }
}
