//! Streaming drift-detection toolkit.
//!
//! Building blocks for detecting distribution drift in sensor telemetry:
//!
//! * [`estimators`] — three online estimators (adaptive windowing,
//!   two-sided Page-Hinkley, sliding-window KS) plus exact KS distances.
//! * [`detector`] — majority voting over the estimators inside an adaptive
//!   window whose length follows the observed trend.
//! * [`calibration`] — unsupervised hyperparameter selection from a short
//!   trusted baseline, with bundled sensor profiles.
//! * [`driftgen`] — a seeded drift emulator producing labelled streams, plus
//!   CSV streaming helpers.
//! * [`fleet`] — drift announcements and peer-based natural/abnormal
//!   classification across a device fleet.
//! * [`bus`] — a minimal in-process publish/subscribe bus with topic
//!   wildcards.
//! * [`harness`] — labelled experiments, F1 scoring, throughput benchmarks,
//!   and a deterministic fleet simulation.
//!
//! The numeric core is generic over the scalar type via [`real::Real`];
//! the aliases below pin the common `f64` instantiations.

pub mod bus;
pub mod calibration;
pub mod detector;
pub mod driftgen;
pub mod error;
pub mod estimators;
pub mod fleet;
pub mod harness;
pub mod real;
pub mod sample;

pub use error::{Error, Result};

/// Adaptive-window estimator over `f64` samples.
pub type Adwin = estimators::AdwinState<f64>;
/// Page-Hinkley estimator over `f64` samples.
pub type Pht = estimators::PhtState<f64>;
/// Sliding-window KS estimator over `f64` samples.
pub type Kswin = estimators::KswinState<f64>;
/// Ensemble drift detector over `f64` samples.
pub type Detector = detector::DetectorState<f64>;
/// Stream sample carrying an `f64` value.
pub type Sample64 = sample::Sample<f64>;
