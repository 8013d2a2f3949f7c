//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! Grids and transforms are generic over [`Real`] so the same code runs in
//! `f32` (the default, memory-bound dense path) and `f64` (reference checks).
//! Reductions always accumulate in `f64` regardless of the storage type.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use rustfft::FftNum;

/// Floating-point storage type: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + FftNum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant into this type.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    /// Widens to `f64` for accumulation.
    #[inline]
    fn wide(self) -> f64 {
        self.to_f64().expect("finite conversion to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Kahan-free but wide sum: accumulates in `f64`.
pub fn sum_wide<T: Real>(values: &[T]) -> f64 {
    values.iter().map(|v| v.wide()).sum()
}

/// Mean accumulated in `f64`; `0.0` for an empty slice.
pub fn mean_wide<T: Real>(values: &[T]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        sum_wide(values) / values.len() as f64
    }
}
