//! Scalar abstraction for the numeric core.
//!
//! All detection math is generic over [`Real`] so the same estimators run on
//! `f32` telemetry (embedded targets) and `f64` (default). Concrete `f64`
//! aliases live at the crate root; file formats and configuration stay `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Floating-point scalar usable by every estimator and the drift emulator.
///
/// The `sample_normal` hook hides the per-type `rand_distr` bound so generic
/// code can draw Gaussian noise without carrying distribution trait bounds.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum<Self>
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Draws one value from `N(mean, sd^2)` using the supplied generator.
    fn sample_normal<G: Rng + ?Sized>(rng: &mut G, mean: Self, sd: Self) -> Self;

    /// Lossy conversion to `f64` (exact for `f32`/`f64`).
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Conversion from `f64`, saturating on overflow.
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).unwrap_or_else(Self::zero)
    }
}

impl Real for f32 {
    fn sample_normal<G: Rng + ?Sized>(rng: &mut G, mean: Self, sd: Self) -> Self {
        Normal::new(mean, sd).expect("sd must be finite and non-negative").sample(rng)
    }
}

impl Real for f64 {
    fn sample_normal<G: Rng + ?Sized>(rng: &mut G, mean: Self, sd: Self) -> Self {
        Normal::new(mean, sd).expect("sd must be finite and non-negative").sample(rng)
    }
}

/// Standard normal CDF, evaluated in `f64` precision and converted back.
pub fn standard_normal_cdf<R: Real>(z: R) -> R {
    use statrs::distribution::{ContinuousCDF, Normal as StdNormal};
    let n = StdNormal::new(0.0, 1.0).expect("unit normal");
    R::from_f64_lossy(n.cdf(z.as_f64()))
}
