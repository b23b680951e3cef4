//! Seeded experiment runner scoring the ensemble and each standalone
//! estimator on generated drift streams.
//!
//! One *run* generates a labeled stream, calibrates on its opening prefix,
//! then replays the stream through the full ensemble and through each
//! single-estimator detector, scoring per-sample predictions against the
//! ground-truth labels. Runs are independently seeded, so the whole report
//! is reproducible from the config alone and runs can execute in parallel
//! without affecting output order.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate, BaselineStats, GridSpec, MIN_BASELINE_LEN};
use crate::detector::WindowModel;
use crate::driftgen::{generate_experiment, SensorProfile, TimeslotSpec, DEFAULT_N_SLOTS};
use crate::error::{Error, Result};
use crate::harness::align::{run_ensemble, DEFAULT_SEGMENT_KAPPA};
use crate::harness::metrics::f1_score;
use crate::harness::single::{EstimatorKind, SingleDetector};

/// Default drift magnitudes as multiples of the baseline variance.
pub const DEFAULT_Q_MULTIPLES: [f64; 7] =
    [1.0 / 3.0, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0];

/// Environment variable that, when set, overrides the configured base seed.
pub const SEED_ENV_VAR: &str = "DRIFT_SEED";

/// Reads the seed override from the environment, if any.
pub fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV_VAR) {
        Ok(raw) => raw
            .trim()
            .parse::<u64>()
            .map(Some)
            .map_err(|_| Error::input(format!("{SEED_ENV_VAR} must be a u64, got {raw:?}"))),
        Err(_) => Ok(None),
    }
}

/// Experiment description; every field has a default so a partial JSON
/// config (or `{}`) is accepted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Sensor fixture names to evaluate.
    #[serde(default = "default_sensors")]
    pub sensors: Vec<String>,
    /// Drift magnitudes as multiples of baseline variance; empty means the
    /// default seven-point grid.
    #[serde(default)]
    pub q_multiples: Vec<f64>,
    /// Independent runs per (sensor, magnitude) cell.
    #[serde(default = "default_n_runs")]
    pub n_runs: usize,
    /// Timeslots per generated stream.
    #[serde(default = "default_n_slots")]
    pub n_slots: usize,
    /// Base seed; per-run seeds are derived from it.
    #[serde(default)]
    pub base_seed: u64,
    /// Calibration prefix length taken from each stream.
    #[serde(default = "default_baseline_len")]
    pub baseline_len: usize,
    /// Segment-gate deviation threshold in baseline standard errors.
    #[serde(default = "default_kappa")]
    pub segment_kappa: f64,
    /// Calibration search grid.
    #[serde(default)]
    pub grid: GridSpec,
    /// Optional per-run JSON-lines report destination.
    #[serde(default)]
    pub report_jsonl: Option<PathBuf>,
    /// Optional aggregate CSV destination.
    #[serde(default)]
    pub report_csv: Option<PathBuf>,
}

fn default_sensors() -> Vec<String> {
    vec!["temperature".into(), "humidity".into(), "pressure".into()]
}

fn default_n_runs() -> usize {
    100
}

fn default_n_slots() -> usize {
    DEFAULT_N_SLOTS
}

fn default_baseline_len() -> usize {
    crate::calibration::DEFAULT_BASELINE_LEN
}

fn default_kappa() -> f64 {
    DEFAULT_SEGMENT_KAPPA
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields defaulted")
    }
}

impl ExperimentConfig {
    /// Loads a JSON config file, applying the environment seed override.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut config: ExperimentConfig = serde_json::from_str(&text)?;
        if let Some(seed) = env_seed()? {
            config.base_seed = seed;
        }
        config.validate()?;
        Ok(config)
    }

    /// The magnitude grid actually evaluated.
    pub fn effective_q_multiples(&self) -> Vec<f64> {
        if self.q_multiples.is_empty() {
            DEFAULT_Q_MULTIPLES.to_vec()
        } else {
            self.q_multiples.clone()
        }
    }

    /// Checks field domains.
    pub fn validate(&self) -> Result<()> {
        if self.sensors.is_empty() {
            return Err(Error::input("experiment needs at least one sensor"));
        }
        if self.n_runs == 0 || self.n_slots == 0 {
            return Err(Error::input("n_runs and n_slots must be positive"));
        }
        if self.baseline_len < MIN_BASELINE_LEN {
            return Err(Error::input(format!(
                "baseline_len must be at least {MIN_BASELINE_LEN}"
            )));
        }
        if !(self.segment_kappa >= 0.0) || !self.segment_kappa.is_finite() {
            return Err(Error::input("segment_kappa must be finite and non-negative"));
        }
        for &m in &self.q_multiples {
            if !(m > 0.0) || !m.is_finite() {
                return Err(Error::input(format!("q multiples must be positive, got {m}")));
            }
        }
        self.grid.validate()
    }
}

/// Which detector produced a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorVariant {
    /// Full voting ensemble with the segment gate.
    Ensemble,
    /// Adaptive-windowing estimator alone.
    Adwin,
    /// Cumulative-deviation estimator alone.
    Pht,
    /// Sliding KS estimator alone.
    Kswin,
}

impl DetectorVariant {
    /// All variants in report order.
    pub const ALL: [DetectorVariant; 4] = [
        DetectorVariant::Ensemble,
        DetectorVariant::Adwin,
        DetectorVariant::Pht,
        DetectorVariant::Kswin,
    ];

    /// Stable lowercase name.
    pub fn label(self) -> &'static str {
        match self {
            DetectorVariant::Ensemble => "ensemble",
            DetectorVariant::Adwin => "adwin",
            DetectorVariant::Pht => "pht",
            DetectorVariant::Kswin => "kswin",
        }
    }
}

impl From<EstimatorKind> for DetectorVariant {
    fn from(kind: EstimatorKind) -> Self {
        match kind {
            EstimatorKind::Adwin => DetectorVariant::Adwin,
            EstimatorKind::Pht => DetectorVariant::Pht,
            EstimatorKind::Kswin => DetectorVariant::Kswin,
        }
    }
}

/// Score of one detector variant on one generated stream.
///
/// Deliberately free of wall-clock fields so that reports from identical
/// configs and seeds serialize identically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    /// Sensor fixture name.
    pub sensor: String,
    /// Drift magnitude as a multiple of baseline variance.
    pub q_multiple: f64,
    /// Absolute drift magnitude.
    pub q: f64,
    /// Detector that produced this row.
    pub variant: DetectorVariant,
    /// Run ordinal within the cell.
    pub run: usize,
    /// Seed the stream was generated from.
    pub seed: u64,
    /// Per-sample precision.
    pub precision: f64,
    /// Per-sample recall.
    pub recall: f64,
    /// Per-sample F1.
    pub f1: f64,
    /// Confusion counts over the scored region.
    pub true_pos: u64,
    /// See `true_pos`.
    pub false_pos: u64,
    /// See `true_pos`.
    pub false_neg: u64,
    /// See `true_pos`.
    pub true_neg: u64,
    /// Fraction of drift slots containing at least one predicted sample.
    pub slot_detection_rate: f64,
    /// Drift events (ensemble) or estimator fires (singles).
    pub detections: usize,
    /// True when either prediction or truth had no positives.
    pub degenerate: bool,
    /// True when this run's calibration was degraded.
    pub degraded: bool,
}

/// Mean scores for one (sensor, magnitude, variant) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateRow {
    /// Sensor fixture name.
    pub sensor: String,
    /// Detector variant.
    pub variant: DetectorVariant,
    /// Drift magnitude multiple.
    pub q_multiple: f64,
    /// Runs included in the means (non-degraded only).
    pub runs: usize,
    /// Runs excluded because calibration was degraded.
    pub degraded_runs: usize,
    /// Mean F1 over included runs.
    pub mean_f1: f64,
    /// Sample standard deviation of F1 over included runs.
    pub std_f1: f64,
    /// Mean precision over included runs.
    pub mean_precision: f64,
    /// Mean recall over included runs.
    pub mean_recall: f64,
}

/// Wall-clock accounting, kept outside the per-run rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuntimeStats {
    /// Total experiment duration in milliseconds.
    pub total_ms: u64,
    /// Number of (stream, variant) scores produced.
    pub rows: usize,
}

/// Full experiment output.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    /// One row per (stream, variant).
    pub rows: Vec<RunRecord>,
    /// Per-cell means.
    pub aggregates: Vec<AggregateRow>,
    /// Timing, excluded from the JSON-lines rendering.
    pub runtime: RuntimeStats,
}

impl MetricsReport {
    /// Renders the per-run rows as JSON lines (no timing fields).
    pub fn render_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for row in &self.rows {
            out.push_str(&serde_json::to_string(row)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Writes the JSON-lines rendering to `path`.
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.render_jsonl()?)?;
        Ok(())
    }

    /// Writes the aggregate table as CSV: magnitude on the x axis, mean F1
    /// on the y axis, one series per variant.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record([
            "sensor",
            "variant",
            "q_multiple",
            "runs",
            "degraded_runs",
            "mean_f1",
            "std_f1",
            "mean_precision",
            "mean_recall",
        ])?;
        for a in &self.aggregates {
            writer.write_record([
                a.sensor.clone(),
                a.variant.label().to_string(),
                a.q_multiple.to_string(),
                a.runs.to_string(),
                a.degraded_runs.to_string(),
                a.mean_f1.to_string(),
                a.std_f1.to_string(),
                a.mean_precision.to_string(),
                a.mean_recall.to_string(),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }

    /// Mean F1 of one cell, if present.
    pub fn mean_f1(&self, sensor: &str, variant: DetectorVariant, q_multiple: f64) -> Option<f64> {
        self.aggregates
            .iter()
            .find(|a| a.sensor == sensor && a.variant == variant && a.q_multiple == q_multiple)
            .map(|a| a.mean_f1)
    }

    /// Number of rows flagged as degraded calibrations.
    pub fn degraded_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.degraded).count()
    }
}

/// One unit of work: a single generated stream.
struct Task {
    profile: SensorProfile,
    window_model: WindowModel,
    q_multiple: f64,
    q: f64,
    run: usize,
    seed: u64,
}

/// Runs the full experiment described by `config`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<MetricsReport> {
    config.validate()?;
    let started = Instant::now();
    let q_multiples = config.effective_q_multiples();

    let mut tasks = Vec::new();
    for (si, sensor) in config.sensors.iter().enumerate() {
        let profile = SensorProfile::fixture(sensor)
            .ok_or_else(|| Error::input(format!("unknown sensor fixture {sensor:?}")))?;
        let window_model = crate::calibration::CalibrationProfile::fixture(sensor)
            .ok_or_else(|| Error::input(format!("unknown sensor fixture {sensor:?}")))?
            .window_model;
        for (qi, &mult) in q_multiples.iter().enumerate() {
            let q = mult * profile.sigma2;
            for run in 0..config.n_runs {
                let seed = mix_seed(config.base_seed, &[si as u64, qi as u64, run as u64]);
                tasks.push(Task {
                    profile: profile.clone(),
                    window_model: window_model.clone(),
                    q_multiple: mult,
                    q,
                    run,
                    seed,
                });
            }
        }
    }

    let per_task: Vec<Vec<RunRecord>> =
        tasks.par_iter().map(|task| run_one(task, config)).collect::<Result<_>>()?;
    let rows: Vec<RunRecord> = per_task.into_iter().flatten().collect();
    let aggregates = aggregate(&rows);
    let runtime = RuntimeStats {
        total_ms: started.elapsed().as_millis() as u64,
        rows: rows.len(),
    };
    let report = MetricsReport { rows, aggregates, runtime };
    if let Some(path) = &config.report_jsonl {
        report.write_jsonl(path)?;
    }
    if let Some(path) = &config.report_csv {
        report.write_csv(path)?;
    }
    Ok(report)
}

/// Generates, calibrates, and scores one stream across all four variants.
fn run_one(task: &Task, config: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    let stream = generate_experiment(&task.profile, task.q, config.n_slots, task.seed)?;
    let values = stream.values();
    let b = config.baseline_len;
    if values.len() <= b {
        return Err(Error::input("stream shorter than the calibration prefix"));
    }
    let baseline = BaselineStats::collect(&values[..b])?;
    let profile =
        calibrate(&task.profile.sensor_type, &baseline, &config.grid, task.window_model.clone())?;
    let params = profile.detector_params(splitmix64(task.seed));
    let truth = &stream.labels[b..];

    let record = |variant: DetectorVariant,
                  predictions: &[u8],
                  detections: usize|
     -> Result<RunRecord> {
        let stats = f1_score(&predictions[b..], truth)?;
        Ok(RunRecord {
            sensor: task.profile.sensor_type.clone(),
            q_multiple: task.q_multiple,
            q: task.q,
            variant,
            run: task.run,
            seed: task.seed,
            precision: stats.precision,
            recall: stats.recall,
            f1: stats.f1,
            true_pos: stats.confusion.true_pos,
            false_pos: stats.confusion.false_pos,
            false_neg: stats.confusion.false_neg,
            true_neg: stats.confusion.true_neg,
            slot_detection_rate: slot_detection_rate(predictions, &stream.slots),
            detections,
            degenerate: stats.degenerate,
            degraded: profile.degraded,
        })
    };

    let mut records = Vec::with_capacity(DetectorVariant::ALL.len());
    let ensemble = run_ensemble(
        &task.profile.sensor_type,
        &params,
        &baseline,
        &values,
        config.segment_kappa,
    )?;
    records.push(record(DetectorVariant::Ensemble, &ensemble.predictions, ensemble.events.len())?);

    for kind in EstimatorKind::ALL {
        let mut detector = SingleDetector::new(kind, &params)?;
        let mut predictions = Vec::with_capacity(values.len());
        for &v in &values {
            predictions.push(detector.ingest(v)?);
        }
        records.push(record(kind.into(), &predictions, detector.fires() as usize)?);
    }
    Ok(records)
}

/// Fraction of drift slots containing at least one predicted-positive
/// sample; vacuously 1 when the stream has no drift slots.
fn slot_detection_rate(predictions: &[u8], slots: &[TimeslotSpec]) -> f64 {
    let mut total = 0_usize;
    let mut hit = 0_usize;
    for slot in slots {
        if !slot.kind.is_drift() {
            continue;
        }
        let start = slot.start as usize;
        let end = (start + slot.length as usize).min(predictions.len());
        if start >= end {
            continue;
        }
        total += 1;
        if predictions[start..end].iter().any(|&p| p == 1) {
            hit += 1;
        }
    }
    if total == 0 {
        1.0
    } else {
        hit as f64 / total as f64
    }
}

/// Groups rows by (sensor, magnitude, variant); degraded rows are counted
/// but excluded from the means.
fn aggregate(rows: &[RunRecord]) -> Vec<AggregateRow> {
    let mut order: Vec<(String, u64, DetectorVariant)> = Vec::new();
    let mut cells: BTreeMap<(String, u64, u8), Vec<&RunRecord>> = BTreeMap::new();
    for row in rows {
        let key = (row.sensor.clone(), row.q_multiple.to_bits(), row.variant);
        let map_key = (key.0.clone(), key.1, row.variant as u8);
        if !cells.contains_key(&map_key) {
            order.push(key);
        }
        cells.entry(map_key).or_default().push(row);
    }
    order
        .into_iter()
        .map(|(sensor, q_bits, variant)| {
            let cell = &cells[&(sensor.clone(), q_bits, variant as u8)];
            let degraded_runs = cell.iter().filter(|r| r.degraded).count();
            let included: Vec<&&RunRecord> = cell.iter().filter(|r| !r.degraded).collect();
            let n = included.len();
            let mean = |f: fn(&RunRecord) -> f64| -> f64 {
                if n == 0 {
                    0.0
                } else {
                    included.iter().map(|r| f(r)).sum::<f64>() / n as f64
                }
            };
            let mean_f1 = mean(|r| r.f1);
            let std_f1 = if n < 2 {
                0.0
            } else {
                let var = included.iter().map(|r| (r.f1 - mean_f1).powi(2)).sum::<f64>()
                    / (n - 1) as f64;
                var.sqrt()
            };
            AggregateRow {
                sensor,
                variant,
                q_multiple: f64::from_bits(q_bits),
                runs: n,
                degraded_runs,
                mean_f1,
                std_f1,
                mean_precision: mean(|r| r.precision),
                mean_recall: mean(|r| r.recall),
            }
        })
        .collect()
}

/// One splitmix64 mixing step.
fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent per-run seed from the base seed and indices.
fn mix_seed(base: u64, parts: &[u64]) -> u64 {
    let mut state = splitmix64(base);
    for &part in parts {
        state = splitmix64(state ^ part);
    }
    state
}
