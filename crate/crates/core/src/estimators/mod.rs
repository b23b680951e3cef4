//! Online drift estimators.
//!
//! Three complementary single-pass estimators over a scalar stream:
//!
//! * [`AdwinState`] — adaptive windowing over an exponential histogram; every
//!   bucket boundary is tested as a candidate cut between "historical" and
//!   "recent" data.
//! * [`PhtState`] — two-sided Page-Hinkley cumulative test with running-mean
//!   centering; reports the drift direction.
//! * [`KswinState`] — sliding-window Kolmogorov-Smirnov test between a seeded
//!   subsample of older data and the most recent values.
//!
//! All estimators accept one value at a time and return a [`Verdict`]. They
//! never fire on a constant stream.

mod adwin;
mod ks;
mod kswin;
mod pht;

pub use adwin::{epsilon_cut, AdwinState};
pub use ks::{ks_two_sample_distance, ks_two_sample_distance_sorted, one_sample_ks_z};
pub use kswin::KswinState;
pub use pht::PhtState;

use crate::error::Result;
use crate::real::Real;

/// Direction of a detected mean shift (reported by the Page-Hinkley test).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriftDirection {
    /// The stream mean moved upward.
    Up,
    /// The stream mean moved downward.
    Down,
}

/// Outcome of feeding one value to an estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    /// True when the estimator flags a drift at this sample.
    pub drifted: bool,
    /// Direction of the shift, when the estimator can tell.
    pub direction: Option<DriftDirection>,
}

impl Verdict {
    /// A quiet verdict.
    pub const fn none() -> Self {
        Verdict { drifted: false, direction: None }
    }

    /// A firing verdict with optional direction.
    pub const fn drift(direction: Option<DriftDirection>) -> Self {
        Verdict { drifted: true, direction }
    }
}

/// Uniform interface over the three estimator states.
pub trait Estimator<R: Real> {
    /// Feeds one value; returns the verdict for this sample.
    fn insert(&mut self, x: R) -> Result<Verdict>;

    /// Running mean of the estimator's current window/history, if any data.
    fn mean(&self) -> Option<R>;

    /// Standard deviation of the estimator's current window/history.
    fn std_dev(&self) -> Option<R>;

    /// Number of samples currently represented.
    fn len(&self) -> usize;

    /// True when no samples are represented.
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
