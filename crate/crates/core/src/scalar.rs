//! Scalar abstraction shared by every model in the crate.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type the simulation runs in: `f32` or `f64`.
///
/// All comparisons against continuous-time equalities (a release at `s = 0`,
/// completion at `r = 0`, deadline pressure at `o + r = D`, SOC at a bound)
/// use [`Scalar::event_eps`].
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + Serialize + DeserializeOwned + 'static
{
    /// Tolerance for event equalities, in hours (and SOC fraction).
    fn event_eps() -> Self;

    /// Converts an `f64` literal. Panics only for values that are not
    /// representable at all, which never happens for finite inputs.
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("finite literal is representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn event_eps() -> Self {
        1e-9
    }
}

impl Scalar for f32 {
    // f32 has ~7 significant digits; over a multi-day horizon 1e-9 h is below
    // one ulp of the clock.
    fn event_eps() -> Self {
        1e-4
    }
}

/// `a ≈ b` within the event tolerance.
pub(crate) fn near<S: Scalar>(a: S, b: S) -> bool {
    (a - b).abs() <= S::event_eps()
}
