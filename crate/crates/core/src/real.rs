use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar used by the signal and time code: `f32` or `f64`.
///
/// Keyed randomness is always produced as `f64` and narrowed with
/// [`Real::from_unit`], so results for `f32` are the rounded `f64` values.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant, panicking only for non-representable values
    /// which never occur for the literals used in this crate.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    /// Converts a keyed uniform draw in `[0, 1)`.
    ///
    /// Narrowing to `f32` can round a value just below one up to exactly one,
    /// so the result is pulled back under one.
    fn from_unit(u: f64) -> Self {
        let v = Self::lit(u);
        if v >= Self::one() {
            Self::one() - Self::epsilon()
        } else {
            v
        }
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}
