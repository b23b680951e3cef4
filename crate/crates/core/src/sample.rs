//! Basic stream sample type shared by estimators, the detector, and the emulator.

use serde::{Deserialize, Serialize};

use crate::real::Real;

/// One observation from a sensor stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample<R = f64> {
    /// Zero-based position in the stream.
    pub index: u64,
    /// Milliseconds since stream start (index * sample period for emulated data).
    pub timestamp_ms: u64,
    /// Measured value.
    pub value: R,
}

impl<R: Real> Sample<R> {
    /// Builds a sample at `index` with the given timestamp and value.
    pub fn new(index: u64, timestamp_ms: u64, value: R) -> Self {
        Sample { index, timestamp_ms, value }
    }
}
