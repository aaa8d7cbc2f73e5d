use std::fmt::{Debug, Display, LowerExp};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Scalar type the optimizers are generic over (`f32` or `f64`).
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + LowerExp + Send + Sync + 'static
{
}

impl<T> Real for T where
    T: RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + LowerExp + Send + Sync + 'static
{
}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn cast<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 is representable in every Real type")
}

#[inline]
pub(crate) fn count<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("usize is representable in every Real type")
}

/// Tolerance used for "sums to one" style checks: 1e-12 in double
/// precision, scaled up to the machine epsilon of narrower types.
pub(crate) fn unit_tolerance<T: Real>(terms: usize) -> T {
    let eps = T::default_epsilon() * count::<T>(terms.max(1) * 8);
    let floor = cast::<T>(1e-12);
    if eps > floor {
        eps
    } else {
        floor
    }
}
