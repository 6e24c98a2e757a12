//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type the engine is generic over (`f32` or `f64`).
///
/// Infinite values are meaningful: an unbounded upper price is `+inf`,
/// an unbounded lower price `-inf`.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Debug + Display + Default + Send + Sync + Serialize + DeserializeOwned + 'static
{
    /// Lossy conversion from `f64`; used for literals and configuration values.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }

    /// Bit pattern of the value widened to `f64`. Widening is exact for
    /// both supported types, so equal values give equal keys.
    fn key_bits(self) -> u64 {
        // -0.0 and 0.0 compare equal and must share a key.
        let x = self.as_f64();
        if x == 0.0 {
            0
        } else {
            x.to_bits()
        }
    }

    /// Relative tolerance used for tie detection in exact-in-principle
    /// computations carried out in floating point.
    fn tie_eps() -> Self;
}

impl Scalar for f64 {
    fn tie_eps() -> Self {
        1e-12
    }
}

impl Scalar for f32 {
    fn tie_eps() -> Self {
        1e-5
    }
}

/// `true` when `a` and `b` agree to within `tie_eps` relative to `scale`.
pub fn near<T: Scalar>(a: T, b: T, scale: T) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= T::tie_eps() * (T::one() + scale.abs())
}
