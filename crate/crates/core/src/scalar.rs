//! Scalar abstraction shared by the optics and readout code.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar the simulator is generic over (`f32` or `f64`).
///
/// Randomness is always drawn in `f64` and converted, so an `f32` and an
/// `f64` run with the same seeds see the same random streams.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Default + Serialize + DeserializeOwned + 'static
{
    /// Converts an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 value representable in scalar type")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().expect("scalar representable as f64")
    }

    #[inline]
    fn of(n: usize) -> Self {
        Self::lit(n as f64)
    }

    /// Machine epsilon of the scalar type.
    fn eps() -> Self;
}

impl Real for f32 {
    #[inline]
    fn eps() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    #[inline]
    fn eps() -> Self {
        f64::EPSILON
    }
}

/// Complex amplitude over a [`Real`] scalar.
pub type Complex<T> = nalgebra::Complex<T>;
