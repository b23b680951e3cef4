//! Single-stream ingest throughput measurement.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::detector::{DetectorParams, DetectorState};
use crate::error::{Error, Result};

/// Timing summary of one bench run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    /// Samples ingested.
    pub n_samples: usize,
    /// Detector construction time in milliseconds.
    pub init_ms: f64,
    /// End-to-end ingest loop duration in milliseconds.
    pub total_ms: f64,
    /// Mean per-sample ingest time in microseconds.
    pub mean_us: f64,
    /// Median per-sample ingest time in microseconds.
    pub p50_us: f64,
    /// 99th-percentile per-sample ingest time in microseconds.
    pub p99_us: f64,
    /// Sustained throughput over the whole loop.
    pub samples_per_sec: f64,
}

/// Feeds `n_samples` of baseline-distributed noise through a freshly built
/// detector, timing every ingest call. Input generation happens up front so
/// only detector work is measured.
pub fn bench(params: &DetectorParams, n_samples: usize, seed: u64) -> Result<BenchReport> {
    if n_samples == 0 {
        return Err(Error::input("bench needs at least one sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean = params.baseline_mean;
    let sd = params.baseline_sd;
    let values: Vec<f64> =
        (0..n_samples).map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal)).collect();

    let init_start = Instant::now();
    let mut detector = DetectorState::<f64>::new("bench", params.clone())?;
    let init_ms = init_start.elapsed().as_secs_f64() * 1e3;

    let mut nanos: Vec<u64> = Vec::with_capacity(n_samples);
    let loop_start = Instant::now();
    for &v in &values {
        let t = Instant::now();
        detector.ingest_value(v)?;
        nanos.push(t.elapsed().as_nanos() as u64);
    }
    let total = loop_start.elapsed();

    nanos.sort_unstable();
    let pick = |q: f64| -> f64 {
        let idx = ((n_samples as f64 * q) as usize).min(n_samples - 1);
        nanos[idx] as f64 / 1e3
    };
    let mean_us = nanos.iter().sum::<u64>() as f64 / n_samples as f64 / 1e3;
    Ok(BenchReport {
        n_samples,
        init_ms,
        total_ms: total.as_secs_f64() * 1e3,
        mean_us,
        p50_us: pick(0.50),
        p99_us: pick(0.99),
        samples_per_sec: n_samples as f64 / total.as_secs_f64(),
    })
}
