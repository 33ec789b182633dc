//! Floating-point scalar abstraction shared by the network, calibration and
//! propagation code.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumCast};

/// Real scalar used for edge weights and production levels: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + NumCast + Sum + Default + Debug + Display + FromStr + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal or parsed value.
    fn of(value: f64) -> Self {
        <Self as NumCast>::from(value).expect("f64 is representable in every Scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Clamp into the closed unit interval. NaN maps to 0.
    fn clamp_unit(self) -> Self {
        if self.is_nan() || self <= Self::zero() {
            Self::zero()
        } else if self >= Self::one() {
            Self::one()
        } else {
            self
        }
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
