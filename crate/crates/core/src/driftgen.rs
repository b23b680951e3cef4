//! Seeded sensor-stream emulation with ground-truth drift labels.
//!
//! Streams are built from consecutive timeslots of random length. A slot is
//! either `normal` (baseline Gaussian noise), `abrupt` (the whole slot is
//! offset by a per-slot value `Q`), or `incremental` (a linear ramp that
//! traverses `Q` across the slot). Every sample carries a 0/1 label saying
//! whether its slot is a drift slot, which makes generated streams usable as
//! test oracles. A live [`Emulator`] additionally accepts on-the-fly drift
//! injection between samples, and CSV helpers replay pre-recorded data.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::Sample;

/// Slots per generated experiment.
pub const DEFAULT_N_SLOTS: usize = 40;

/// Shortest slot, in samples.
pub const SLOT_LEN_MIN: u64 = 500;

/// Longest slot, in samples.
pub const SLOT_LEN_MAX: u64 = 1500;

/// Malformed-row tolerance for CSV import (fraction of data rows).
pub const MAX_MALFORMED_FRACTION: f64 = 0.10;

/// Baseline distribution and cadence of one emulated sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorProfile {
    /// Sensor kind (free-form label carried into exported CSV).
    pub sensor_type: String,
    /// Baseline mean.
    pub mu_prime: f64,
    /// Baseline variance (strictly positive).
    pub sigma2: f64,
    /// Milliseconds between consecutive samples.
    pub sample_period_ms: u64,
}

impl SensorProfile {
    /// Indoor temperature sensor (°C).
    pub fn temperature() -> Self {
        SensorProfile {
            sensor_type: "temperature".into(),
            mu_prime: 20.32,
            sigma2: 1.178,
            sample_period_ms: 10_000,
        }
    }

    /// Relative humidity sensor (%).
    pub fn humidity() -> Self {
        SensorProfile {
            sensor_type: "humidity".into(),
            mu_prime: 30.14,
            sigma2: 0.966,
            sample_period_ms: 10_000,
        }
    }

    /// Barometric pressure sensor (kPa scale).
    pub fn pressure() -> Self {
        SensorProfile {
            sensor_type: "pressure".into(),
            mu_prime: 102.4,
            sigma2: 224.52,
            sample_period_ms: 10_000,
        }
    }

    /// Bundled profile by sensor name.
    pub fn fixture(sensor_type: &str) -> Option<Self> {
        match sensor_type {
            "temperature" => Some(Self::temperature()),
            "humidity" => Some(Self::humidity()),
            "pressure" => Some(Self::pressure()),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() || !self.mu_prime.is_finite() {
            return Err(Error::input(format!(
                "sensor profile needs finite mean and positive variance, got mu'={} sigma2={}",
                self.mu_prime, self.sigma2
            )));
        }
        Ok(())
    }

    fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }
}

/// What a timeslot does to the baseline distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotKind {
    /// Baseline noise, label 0.
    Normal,
    /// Whole slot offset by `Q`, label 1.
    Abrupt,
    /// Linear ramp traversing `Q` across the slot, label 1.
    Incremental,
}

impl SlotKind {
    /// True for the two drift kinds.
    pub fn is_drift(self) -> bool {
        !matches!(self, SlotKind::Normal)
    }
}

/// One timeslot of a generated stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeslotSpec {
    /// Slot behaviour.
    pub kind: SlotKind,
    /// Slot length in samples.
    pub length: u64,
    /// Per-slot offset `Q` (0 for normal slots).
    pub q_offset: f64,
    /// Index of the slot's first sample in the stream.
    pub start: u64,
}

/// A generated stream with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledStream {
    /// Samples in stream order.
    pub samples: Vec<Sample<f64>>,
    /// Ground-truth drift label per sample.
    pub labels: Vec<u8>,
    /// Slot plan with cumulative start offsets.
    pub slots: Vec<TimeslotSpec>,
    /// Seed the stream was generated from.
    pub seed: u64,
    /// Maximum drift magnitude the per-slot offsets were drawn from.
    pub q: f64,
}

impl LabeledStream {
    /// Number of samples.
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// True when the stream holds no samples.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample values in stream order.
    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.value).collect()
    }

    /// Writes `timestamp,device_id,sensor_type,value,label` rows.
    pub fn write_csv<W: io::Write>(
        &self,
        writer: W,
        device_id: &str,
        sensor_type: &str,
    ) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["timestamp", "device_id", "sensor_type", "value", "label"])?;
        for (s, &label) in self.samples.iter().zip(&self.labels) {
            w.write_record([
                s.timestamp_ms.to_string(),
                device_id.to_string(),
                sensor_type.to_string(),
                s.value.to_string(),
                label.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// The seven benchmark drift magnitudes, ascending:
/// `sigma2` times 1/3, 1/2, 1, 2, 3, 4, 5.
pub fn q_grid(sigma2: f64) -> Result<Vec<f64>> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::input(format!("variance must be positive, got {sigma2}")));
    }
    Ok([1.0 / 3.0, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0].iter().map(|m| m * sigma2).collect())
}

fn draw_kind(rng: &mut ChaCha8Rng) -> SlotKind {
    match rng.gen_range(0..3u8) {
        0 => SlotKind::Normal,
        1 => SlotKind::Abrupt,
        _ => SlotKind::Incremental,
    }
}

/// Generates a labelled multi-slot experiment stream.
///
/// Slot kinds are uniform over the three kinds except slot 0, which is
/// always normal so a calibration prefix exists; lengths are uniform on
/// `[SLOT_LEN_MIN, SLOT_LEN_MAX]`. Each drift slot draws its offset once
/// from `Uniform[-q, q]`. Identical arguments reproduce the stream bit for
/// bit.
pub fn generate_experiment(
    profile: &SensorProfile,
    q: f64,
    n_slots: usize,
    seed: u64,
) -> Result<LabeledStream> {
    profile.validate()?;
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::input(format!("drift magnitude q must be positive, got {q}")));
    }
    if n_slots == 0 {
        return Err(Error::input("experiment needs at least one slot"));
    }
    let sigma = profile.sigma();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    let mut slots = Vec::with_capacity(n_slots);
    let mut index: u64 = 0;
    for slot_no in 0..n_slots {
        let kind = if slot_no == 0 { SlotKind::Normal } else { draw_kind(&mut rng) };
        let length = rng.gen_range(SLOT_LEN_MIN..=SLOT_LEN_MAX);
        let q_offset =
            if kind.is_drift() { rng.gen_range(-q..=q) } else { 0.0 };
        slots.push(TimeslotSpec { kind, length, q_offset, start: index });
        let ramp_step = match kind {
            SlotKind::Incremental => q_offset / length as f64,
            _ => 0.0,
        };
        for j in 0..length {
            let noise: f64 = rng.sample(StandardNormal);
            let value = match kind {
                SlotKind::Normal => profile.mu_prime + sigma * noise,
                SlotKind::Abrupt => profile.mu_prime + q_offset + sigma * noise,
                SlotKind::Incremental => ramp_step * j as f64 + profile.mu_prime + sigma * noise,
            };
            samples.push(Sample {
                index,
                timestamp_ms: index * profile.sample_period_ms,
                value,
            });
            labels.push(u8::from(kind.is_drift()));
            index += 1;
        }
    }
    Ok(LabeledStream { samples, labels, slots, seed, q })
}

/// On-the-fly drift injection request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InjectCommand {
    /// Drift kind to inject (`normal` is rejected).
    pub kind: SlotKind,
    /// Offset the injected slot applies or traverses.
    pub q_offset: f64,
    /// Injected slot length in samples.
    pub length: u64,
}

#[derive(Debug, Clone)]
struct ActiveDrift {
    kind: SlotKind,
    q_offset: f64,
    length: u64,
    emitted: u64,
}

/// A live baseline stream that accepts drift injection between samples.
///
/// Without an active injection every sample is baseline noise with label 0.
/// An accepted injection takes effect from the next emitted sample and runs
/// for exactly its requested length; a second injection while one is active
/// is rejected as busy.
#[derive(Debug)]
pub struct Emulator {
    profile: SensorProfile,
    rng: ChaCha8Rng,
    next_index: u64,
    active: Option<ActiveDrift>,
}

impl Emulator {
    /// Creates a live emulator for the profile.
    pub fn new(profile: SensorProfile, seed: u64) -> Result<Self> {
        profile.validate()?;
        Ok(Emulator { profile, rng: ChaCha8Rng::seed_from_u64(seed), next_index: 0, active: None })
    }

    /// The emulated sensor's profile.
    pub fn profile(&self) -> &SensorProfile {
        &self.profile
    }

    /// True while an injected drift slot is running.
    pub fn drift_active(&self) -> bool {
        self.active.is_some()
    }

    /// Index the next emitted sample will carry.
    pub fn next_index(&self) -> u64 {
        self.next_index
    }

    /// Requests a drift slot starting at the next emitted sample; returns
    /// that start index.
    pub fn inject_drift(&mut self, kind: SlotKind, q_offset: f64, length: u64) -> Result<u64> {
        if !kind.is_drift() {
            return Err(Error::input("injected drift must be abrupt or incremental"));
        }
        if length == 0 {
            return Err(Error::input("injected drift length must be positive"));
        }
        if !q_offset.is_finite() {
            return Err(Error::input(format!("injected offset must be finite, got {q_offset}")));
        }
        if let Some(active) = &self.active {
            return Err(Error::Busy(format!(
                "drift already active for {} more samples",
                active.length - active.emitted
            )));
        }
        self.active = Some(ActiveDrift { kind, q_offset, length, emitted: 0 });
        Ok(self.next_index)
    }

    /// Applies a deserialized injection request.
    pub fn apply_command(&mut self, cmd: &InjectCommand) -> Result<u64> {
        self.inject_drift(cmd.kind, cmd.q_offset, cmd.length)
    }

    /// Emits the next sample and its ground-truth label.
    pub fn next_sample(&mut self) -> (Sample<f64>, u8) {
        let sigma = self.profile.sigma();
        let noise: f64 = self.rng.sample(StandardNormal);
        let (offset, label) = match &mut self.active {
            Some(drift) => {
                let offset = match drift.kind {
                    SlotKind::Abrupt => drift.q_offset,
                    SlotKind::Incremental => {
                        drift.q_offset / drift.length as f64 * drift.emitted as f64
                    }
                    SlotKind::Normal => unreachable!("normal injections are rejected"),
                };
                drift.emitted += 1;
                (offset, 1)
            }
            None => (0.0, 0),
        };
        if self.active.as_ref().is_some_and(|d| d.emitted == d.length) {
            self.active = None;
        }
        let index = self.next_index;
        self.next_index += 1;
        let sample = Sample {
            index,
            timestamp_ms: index * self.profile.sample_period_ms,
            value: self.profile.mu_prime + offset + sigma * noise,
        };
        (sample, label)
    }
}

/// Header-column names used when importing CSV data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMap {
    /// Timestamp column (integer milliseconds, or seconds as a decimal).
    pub timestamp: String,
    /// Value column (`.` decimal separator).
    pub value: String,
    /// Device column; `None` treats the file as a single device.
    pub device_id: Option<String>,
    /// Sensor column; `None` treats the file as a single sensor.
    pub sensor_type: Option<String>,
    /// Optional ground-truth label column.
    pub label: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            timestamp: "timestamp".into(),
            value: "value".into(),
            device_id: Some("device_id".into()),
            sensor_type: Some("sensor_type".into()),
            label: None,
        }
    }
}

impl ColumnMap {
    /// Column map that also reads the exported `label` column.
    pub fn with_labels() -> Self {
        ColumnMap { label: Some("label".into()), ..ColumnMap::default() }
    }
}

/// One accepted CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    /// Device the row belongs to (empty when unmapped).
    pub device_id: String,
    /// Sensor the row belongs to (empty when unmapped).
    pub sensor_type: String,
    /// Parsed sample; `index` is the ordinal among accepted rows.
    pub sample: Sample<f64>,
    /// Ground-truth label when a label column is mapped.
    pub label: Option<u8>,
}

/// Result of importing a CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvImport {
    /// Accepted rows in file order.
    pub rows: Vec<CsvRow>,
    /// Malformed rows that were skipped.
    pub skipped: usize,
}

impl CsvImport {
    /// Groups samples per `(device_id, sensor_type)`, re-assigning
    /// per-stream ordinals from 0.
    pub fn demux(&self) -> BTreeMap<(String, String), Vec<Sample<f64>>> {
        let mut streams: BTreeMap<(String, String), Vec<Sample<f64>>> = BTreeMap::new();
        for row in &self.rows {
            let stream = streams
                .entry((row.device_id.clone(), row.sensor_type.clone()))
                .or_default();
            let mut sample = row.sample;
            sample.index = stream.len() as u64;
            stream.push(sample);
        }
        streams
    }
}

fn parse_timestamp_ms(field: &str) -> Option<u64> {
    if let Ok(ms) = field.trim().parse::<u64>() {
        return Some(ms);
    }
    // Fall back to fractional epoch seconds.
    let secs: f64 = field.trim().parse().ok()?;
    if secs.is_finite() && secs >= 0.0 {
        Some((secs * 1000.0).round() as u64)
    } else {
        None
    }
}

/// Imports CSV rows from a reader; malformed rows are skipped and counted,
/// and more than [`MAX_MALFORMED_FRACTION`] of them aborts the import.
pub fn read_csv<Rd: io::Read>(reader: Rd, map: &ColumnMap) -> Result<CsvImport> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = r.headers()?.clone();
    let position = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::format(format!("missing column '{name}' in CSV header")))
    };
    let ts_col = position(&map.timestamp)?;
    let value_col = position(&map.value)?;
    let device_col = map.device_id.as_deref().map(&position).transpose()?;
    let sensor_col = map.sensor_type.as_deref().map(&position).transpose()?;
    let label_col = map.label.as_deref().map(&position).transpose()?;

    let mut rows = Vec::new();
    let mut skipped = 0_usize;
    for record in r.records() {
        let record = record?;
        let parsed = (|| -> Option<CsvRow> {
            let timestamp_ms = parse_timestamp_ms(record.get(ts_col)?)?;
            let value: f64 = record.get(value_col)?.trim().parse().ok()?;
            if !value.is_finite() {
                return None;
            }
            let label = match label_col {
                Some(col) => match record.get(col)?.trim() {
                    "0" => Some(0),
                    "1" => Some(1),
                    _ => return None,
                },
                None => None,
            };
            let field_or_empty =
                |col: Option<usize>| col.and_then(|c| record.get(c)).unwrap_or("").to_string();
            Some(CsvRow {
                device_id: field_or_empty(device_col),
                sensor_type: field_or_empty(sensor_col),
                sample: Sample {
                    index: rows.len() as u64,
                    timestamp_ms,
                    value,
                },
                label,
            })
        })();
        match parsed {
            Some(row) => rows.push(row),
            None => skipped += 1,
        }
    }
    let total = rows.len() + skipped;
    if total > 0 && skipped as f64 > MAX_MALFORMED_FRACTION * total as f64 {
        return Err(Error::format(format!(
            "{skipped} of {total} CSV rows malformed (more than {:.0}%)",
            MAX_MALFORMED_FRACTION * 100.0
        )));
    }
    Ok(CsvImport { rows, skipped })
}

/// Imports CSV rows from a file path.
pub fn read_csv_path<P: AsRef<Path>>(path: P, map: &ColumnMap) -> Result<CsvImport> {
    let file = std::fs::File::open(path)?;
    read_csv(io::BufReader::new(file), map)
}

/// Replays a CSV file as an in-order row iterator. The whole file is
/// validated up front so the malformed-row budget applies to the file, not
/// a prefix.
pub fn stream_csv<P: AsRef<Path>>(
    path: P,
    map: &ColumnMap,
) -> Result<impl Iterator<Item = CsvRow>> {
    Ok(read_csv_path(path, map)?.rows.into_iter())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::ks_two_sample_distance;
    use approx::assert_relative_eq;

    #[test]
    fn q_grid_matches_published_multiples() {
        let grid = q_grid(1.0).unwrap();
        assert_eq!(grid.len(), 7);
        assert_relative_eq!(grid[0], 1.0 / 3.0);
        assert_relative_eq!(grid[1], 0.5);
        assert_eq!(&grid[2..], &[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!(grid.windows(2).all(|w| w[0] < w[1]));

        let temp = q_grid(1.178).unwrap();
        for (got, want) in temp.iter().zip([0.3927, 0.589, 1.178, 2.356, 3.534, 4.712, 5.89]) {
            assert_relative_eq!(*got, want, epsilon = 5e-5);
        }
        let pressure = q_grid(224.52).unwrap();
        for (got, want) in
            pressure.iter().zip([74.84, 112.26, 224.52, 449.04, 673.56, 898.08, 1122.6])
        {
            assert_relative_eq!(*got, want, epsilon = 5e-3);
        }
        assert!(q_grid(0.0).is_err());
    }

    #[test]
    fn identical_arguments_reproduce_the_stream() {
        let profile = SensorProfile::temperature();
        let a = generate_experiment(&profile, 5.89, 10, 42).unwrap();
        let b = generate_experiment(&profile, 5.89, 10, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_experiment(&profile, 5.89, 10, 43).unwrap();
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn labels_match_slot_kinds_and_lengths_cover_the_stream() {
        let profile = SensorProfile::humidity();
        for seed in 0..5 {
            let stream = generate_experiment(&profile, 0.966, DEFAULT_N_SLOTS, seed).unwrap();
            assert_eq!(stream.slots.len(), DEFAULT_N_SLOTS);
            assert_eq!(stream.slots[0].kind, SlotKind::Normal);
            let total: u64 = stream.slots.iter().map(|s| s.length).sum();
            assert_eq!(stream.len() as u64, total);
            assert_eq!(stream.labels.len(), stream.len());
            for slot in &stream.slots {
                assert!((SLOT_LEN_MIN..=SLOT_LEN_MAX).contains(&slot.length));
                let expect = u8::from(slot.kind.is_drift());
                let range = slot.start as usize..(slot.start + slot.length) as usize;
                assert!(stream.labels[range].iter().all(|&l| l == expect));
                if slot.kind.is_drift() {
                    assert!(slot.q_offset.abs() <= stream.q);
                } else {
                    assert_eq!(slot.q_offset, 0.0);
                }
            }
            for (i, s) in stream.samples.iter().enumerate() {
                assert_eq!(s.index, i as u64);
                assert_eq!(s.timestamp_ms, i as u64 * profile.sample_period_ms);
            }
        }
    }

    #[test]
    fn slot_kinds_are_drawn_uniformly() {
        let profile = SensorProfile::temperature();
        let mut counts = [0_usize; 3];
        let mut total = 0_usize;
        for seed in 0..10 {
            let stream = generate_experiment(&profile, 1.178, 1000, seed).unwrap();
            // Skip the forced-normal slot 0.
            for slot in &stream.slots[1..] {
                counts[match slot.kind {
                    SlotKind::Normal => 0,
                    SlotKind::Abrupt => 1,
                    SlotKind::Incremental => 2,
                }] += 1;
                total += 1;
            }
        }
        assert!(total >= 9990);
        for c in counts {
            let freq = c as f64 / total as f64;
            assert!((freq - 1.0 / 3.0).abs() < 0.02, "kind frequency {freq} off uniform");
        }
    }

    #[test]
    fn abrupt_slot_means_track_their_offset() {
        let profile = SensorProfile::temperature();
        let sigma = profile.sigma2.sqrt();
        let mut checked = 0;
        for seed in 0..100 {
            let stream = generate_experiment(&profile, 5.0 * profile.sigma2, 8, seed).unwrap();
            let Some(slot) = stream.slots.iter().find(|s| s.kind == SlotKind::Abrupt) else {
                continue;
            };
            let range = slot.start as usize..(slot.start + slot.length) as usize;
            let mean = stream.samples[range].iter().map(|s| s.value).sum::<f64>()
                / slot.length as f64;
            let tolerance = 4.0 * sigma / (slot.length as f64).sqrt();
            assert!(
                (mean - (profile.mu_prime + slot.q_offset)).abs() <= tolerance,
                "seed {seed}: slot mean {mean} not within {tolerance} of target"
            );
            checked += 1;
        }
        assert!(checked >= 80, "only {checked} seeds produced an abrupt slot");
    }

    #[test]
    fn incremental_ramps_traverse_their_offset_on_average() {
        let profile = SensorProfile::temperature();
        let mut error_sum = 0.0;
        let mut checked = 0;
        for seed in 0..100 {
            let stream = generate_experiment(&profile, 5.0 * profile.sigma2, 8, seed).unwrap();
            let Some(slot) = stream.slots.iter().find(|s| s.kind == SlotKind::Incremental)
            else {
                continue;
            };
            let vals: Vec<f64> = stream.samples
                [slot.start as usize..(slot.start + slot.length) as usize]
                .iter()
                .map(|s| s.value)
                .collect();
            let head = vals[..50].iter().sum::<f64>() / 50.0;
            let tail = vals[vals.len() - 50..].iter().sum::<f64>() / 50.0;
            let expected = slot.q_offset * (slot.length as f64 - 50.0) / slot.length as f64;
            error_sum += (tail - head) - expected;
            checked += 1;
        }
        assert!(checked >= 80, "only {checked} seeds produced an incremental slot");
        let sigma = profile.sigma2.sqrt();
        // Each per-seed deviation has sd sigma*sqrt(2/50); the mean over the
        // checked seeds concentrates well inside 4 of its own sds.
        let bound = 4.0 * sigma * (2.0_f64 / 50.0).sqrt() / (checked as f64).sqrt();
        assert!(
            (error_sum / checked as f64).abs() <= bound,
            "mean ramp traversal error {} exceeds {bound}",
            error_sum / checked as f64
        );
    }

    #[test]
    fn vanishing_magnitude_is_statistically_invisible() {
        let profile = SensorProfile::temperature();
        let sigma = profile.sigma2.sqrt();
        let mut rejections = 0;
        let mut compared = 0;
        for seed in 0..40 {
            let stream = generate_experiment(&profile, 1e-4 * sigma, 8, seed).unwrap();
            let drift = stream.slots.iter().find(|s| s.kind.is_drift());
            let normal = stream.slots[1..].iter().find(|s| s.kind == SlotKind::Normal);
            let (Some(d), Some(n)) = (drift, normal) else { continue };
            let dv: Vec<f64> = stream.samples[d.start as usize..(d.start + d.length) as usize]
                .iter()
                .map(|s| s.value)
                .collect();
            let nv: Vec<f64> = stream.samples[n.start as usize..(n.start + n.length) as usize]
                .iter()
                .map(|s| s.value)
                .collect();
            let dist = ks_two_sample_distance(&dv, &nv).unwrap();
            // Large-sample two-sample KS critical value at the 1% level.
            let crit = 1.6276
                * ((dv.len() + nv.len()) as f64 / (dv.len() * nv.len()) as f64).sqrt();
            if dist > crit {
                rejections += 1;
            }
            compared += 1;
        }
        assert!(compared >= 30);
        assert!(
            (rejections as f64) < 0.05 * compared as f64,
            "{rejections} of {compared} seeds rejected at the 1% level"
        );
    }

    #[test]
    fn injection_shifts_labels_and_means_for_exactly_its_length() {
        let profile = SensorProfile::temperature();
        let sigma = profile.sigma2.sqrt();
        let mut emu = Emulator::new(profile.clone(), 9).unwrap();
        for _ in 0..100 {
            let (_, label) = emu.next_sample();
            assert_eq!(label, 0);
        }
        let start = emu.inject_drift(SlotKind::Abrupt, 3.0 * sigma, 800).unwrap();
        assert_eq!(start, 100);
        let mut sum = 0.0;
        for i in 0..800 {
            assert!(emu.drift_active());
            let (s, label) = emu.next_sample();
            assert_eq!(label, 1, "sample {i}");
            assert_eq!(s.index, 100 + i);
            sum += s.value;
        }
        assert!(!emu.drift_active());
        let mean = sum / 800.0;
        let tolerance = 4.0 * sigma / 800_f64.sqrt();
        assert!((mean - (profile.mu_prime + 3.0 * sigma)).abs() <= tolerance);
        let (_, label) = emu.next_sample();
        assert_eq!(label, 0);
    }

    #[test]
    fn overlapping_and_degenerate_injections_are_rejected() {
        let mut emu = Emulator::new(SensorProfile::humidity(), 4).unwrap();
        assert!(matches!(
            emu.inject_drift(SlotKind::Abrupt, 1.0, 0),
            Err(Error::Input(_))
        ));
        assert!(matches!(
            emu.inject_drift(SlotKind::Normal, 1.0, 10),
            Err(Error::Input(_))
        ));
        emu.inject_drift(SlotKind::Incremental, 2.0, 50).unwrap();
        assert!(matches!(
            emu.inject_drift(SlotKind::Abrupt, 1.0, 10),
            Err(Error::Busy(_))
        ));
        for _ in 0..50 {
            emu.next_sample();
        }
        // The first injection has fully elapsed; a new one is accepted.
        let start = emu.inject_drift(SlotKind::Abrupt, 1.0, 10).unwrap();
        assert_eq!(start, 50);
    }

    #[test]
    fn injected_ramp_follows_the_incremental_model() {
        let profile = SensorProfile::pressure();
        let mut emu = Emulator::new(profile.clone(), 77).unwrap();
        let q = 5.0 * profile.sigma2;
        emu.inject_drift(SlotKind::Incremental, q, 1000).unwrap();
        let vals: Vec<f64> = (0..1000).map(|_| emu.next_sample().0.value).collect();
        let head = vals[..50].iter().sum::<f64>() / 50.0;
        let tail = vals[950..].iter().sum::<f64>() / 50.0;
        let expected = q * 950.0 / 1000.0;
        let sigma = profile.sigma2.sqrt();
        let bound = 4.0 * sigma * (2.0_f64 / 50.0).sqrt();
        assert!(
            ((tail - head) - expected).abs() <= bound,
            "ramp traversal {} vs expected {expected}",
            tail - head
        );
    }

    #[test]
    fn csv_round_trip_preserves_values_and_labels() {
        let profile = SensorProfile::temperature();
        let stream = generate_experiment(&profile, 5.89, 3, 21).unwrap();
        let mut buf = Vec::new();
        stream.write_csv(&mut buf, "device-1", "temperature").unwrap();
        let import = read_csv(buf.as_slice(), &ColumnMap::with_labels()).unwrap();
        assert_eq!(import.skipped, 0);
        assert_eq!(import.rows.len(), stream.len());
        for (row, (sample, &label)) in
            import.rows.iter().zip(stream.samples.iter().zip(&stream.labels))
        {
            assert_eq!(row.device_id, "device-1");
            assert_eq!(row.sensor_type, "temperature");
            assert_eq!(row.sample.value, sample.value);
            assert_eq!(row.sample.timestamp_ms, sample.timestamp_ms);
            assert_eq!(row.sample.index, sample.index);
            assert_eq!(row.label, Some(label));
        }
    }

    #[test]
    fn malformed_rows_are_skipped_within_budget() {
        let mut csv = String::from("timestamp,device_id,sensor_type,value\n");
        for i in 0..19 {
            csv.push_str(&format!("{},dev,temp,{}\n", i * 10_000, 20.0 + i as f64));
        }
        csv.push_str("190000,dev,temp,not-a-number\n");
        let import = read_csv(csv.as_bytes(), &ColumnMap::default()).unwrap();
        assert_eq!(import.rows.len(), 19);
        assert_eq!(import.skipped, 1);
        // Ordinals stay contiguous over accepted rows.
        for (i, row) in import.rows.iter().enumerate() {
            assert_eq!(row.sample.index, i as u64);
        }
    }

    #[test]
    fn excess_malformed_rows_abort_the_import() {
        let csv = "timestamp,device_id,sensor_type,value\n\
                   0,dev,temp,20.1\n\
                   10000,dev,temp,oops\n\
                   20000,dev,temp,20.3\n";
        assert!(matches!(
            read_csv(csv.as_bytes(), &ColumnMap::default()),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            read_csv_path("/nonexistent/data.csv", &ColumnMap::default()),
            Err(Error::Io(_))
        ));
    }

    #[test]
    fn demux_splits_interleaved_sensors_with_fresh_ordinals() {
        let csv = "timestamp,device_id,sensor_type,value\n\
                   0,dev,temperature,20.1\n\
                   0,dev,humidity,30.5\n\
                   10000,dev,temperature,20.2\n\
                   10000,dev,humidity,30.6\n\
                   20000,dev,temperature,20.3\n";
        let import = read_csv(csv.as_bytes(), &ColumnMap::default()).unwrap();
        let streams = import.demux();
        assert_eq!(streams.len(), 2);
        let temp = &streams[&("dev".to_string(), "temperature".to_string())];
        let hum = &streams[&("dev".to_string(), "humidity".to_string())];
        assert_eq!(temp.len(), 3);
        assert_eq!(hum.len(), 2);
        for (i, s) in temp.iter().enumerate() {
            assert_eq!(s.index, i as u64);
            assert_eq!(s.timestamp_ms, i as u64 * 10_000);
        }
        assert_eq!(hum[1].value, 30.6);
    }

    #[test]
    fn rejects_bad_generation_parameters() {
        let profile = SensorProfile::temperature();
        assert!(generate_experiment(&profile, 0.0, 10, 1).is_err());
        assert!(generate_experiment(&profile, -1.0, 10, 1).is_err());
        assert!(generate_experiment(&profile, 1.0, 0, 1).is_err());
        let bad = SensorProfile { sigma2: 0.0, ..profile };
        assert!(generate_experiment(&bad, 1.0, 10, 1).is_err());
    }
}
