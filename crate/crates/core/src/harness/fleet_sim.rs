//! Deterministic fleet scenarios: emulated devices, live detectors, and
//! bus-exchanged announcements classified natural or abnormal.
//!
//! The simulation models co-located devices sampling the *same* physical
//! environment signal: every device replays the identical generated stream
//! for its sensor type, and scenario drifts are injected into that shared
//! signal. This is what makes a fleet-wide drift "natural" — peers observe
//! the same change and report statistically identical KS statistics.
//! Device-specific state (detector subsampling seeds) still differs per
//! device. An abnormal scenario injects the drift into a single device's
//! emulator only, modelling a local fault.
//!
//! Classification is causal: each vote-1 announcement is judged against a
//! snapshot of announcements issued no later than a short grace interval
//! after it, so verdicts reflect what the fleet knew around the event, not
//! heartbeats published long afterwards.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bus::Bus;
use crate::calibration::CalibrationProfile;
use crate::detector::DetectorState;
use crate::driftgen::{Emulator, SensorProfile, SlotKind};
use crate::error::{Error, Result};
use crate::fleet::{
    announce_topic, build_announcement, classify, heartbeat, verdict_topic, ClassificationResult,
    DeviceMetadata, DriftAnnouncement, FleetConfig,
};

/// Sample index at which the scenario drift enters the shared signal.
pub const PRIMARY_INJECT_INDEX: u64 = 1500;
/// Sample index of the second, single-device drift in the mixed scenario.
pub const SECONDARY_INJECT_INDEX: u64 = 8000;
/// Injected drift duration in samples.
pub const INJECT_LEN: u64 = 800;
/// Injected drift magnitude as a multiple of the baseline variance.
pub const INJECT_Q_MULTIPLE: f64 = 5.0;
/// Warm-up samples before the first heartbeat.
pub const WARM_SAMPLES: u64 = 1000;
/// Grace interval (in samples) added to a subject announcement's timestamp
/// when taking its causal classification snapshot.
pub const SNAPSHOT_GRACE_SAMPLES: u64 = 500;

const SHORT_RUN: u64 = 4000;
const LONG_RUN: u64 = 11_000;

/// Which drift pattern the simulation injects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// One fleet-wide drift: every device sees it.
    Natural,
    /// One drift on the first device only.
    Abnormal,
    /// Fleet-wide drift first, then a later drift on the first device only.
    Mixed,
}

impl Scenario {
    /// Samples each device ingests.
    pub fn samples_per_device(self) -> u64 {
        match self {
            Scenario::Natural | Scenario::Abnormal => SHORT_RUN,
            Scenario::Mixed => LONG_RUN,
        }
    }

    /// Stable lowercase name.
    pub fn label(self) -> &'static str {
        match self {
            Scenario::Natural => "natural",
            Scenario::Abnormal => "abnormal",
            Scenario::Mixed => "mixed",
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "natural" => Ok(Scenario::Natural),
            "abnormal" => Ok(Scenario::Abnormal),
            "mixed" => Ok(Scenario::Mixed),
            other => Err(Error::input(format!(
                "unknown scenario {other:?}; expected natural, abnormal, or mixed"
            ))),
        }
    }
}

/// One classified vote-1 announcement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimVerdict {
    /// Device that announced the drift.
    pub device_id: String,
    /// Sensor the announcement concerns.
    pub sensor_type: String,
    /// Sample index the announcement was issued at.
    pub sample_index: u64,
    /// Announcement timestamp in milliseconds.
    pub issued_at: u64,
    /// Fleet classification outcome.
    pub result: ClassificationResult,
}

/// Full simulation output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FleetSimReport {
    /// Scenario that was run.
    pub scenario: Scenario,
    /// Devices simulated.
    pub n_devices: usize,
    /// Samples ingested per device.
    pub samples_per_device: u64,
    /// Vote-1 announcements per device.
    pub announcements: BTreeMap<String, usize>,
    /// Vote-0 heartbeats published fleet-wide.
    pub heartbeats: usize,
    /// Verdicts in announcement order.
    pub verdicts: Vec<SimVerdict>,
}

struct SimDevice {
    metadata: DeviceMetadata,
    emulator: Emulator,
    detector: DetectorState<f64>,
    inject_q: f64,
    topic: String,
}

/// Runs `scenario` over the manifest and classifies every announced drift.
pub fn fleet_sim(
    devices: &[DeviceMetadata],
    scenario: Scenario,
    seed: u64,
) -> Result<FleetSimReport> {
    if devices.is_empty() {
        return Err(Error::input("fleet simulation needs at least one device"));
    }
    let mut seen = BTreeSet::new();
    for d in devices {
        if !seen.insert(d.device_id.as_str()) {
            return Err(Error::input(format!("duplicate device_id {:?}", d.device_id)));
        }
    }

    // The shared environment signal: one stream seed for the whole fleet.
    let signal_seed = mix(seed, 0x5EED);
    let mut sim: Vec<SimDevice> = Vec::with_capacity(devices.len());
    let mut period_ms = None;
    let mut l_max = 0_u64;
    for (idx, meta) in devices.iter().enumerate() {
        let profile = SensorProfile::fixture(&meta.sensor_type)
            .ok_or_else(|| Error::input(format!("unknown sensor fixture {:?}", meta.sensor_type)))?;
        let calibration = CalibrationProfile::fixture(&meta.sensor_type)
            .ok_or_else(|| Error::input(format!("unknown sensor fixture {:?}", meta.sensor_type)))?;
        match period_ms {
            None => period_ms = Some(profile.sample_period_ms),
            Some(p) if p != profile.sample_period_ms => {
                return Err(Error::input("all fleet devices must share one sample period"));
            }
            Some(_) => {}
        }
        l_max = l_max.max(calibration.window_model.l_max as u64);
        let params = calibration.detector_params(mix(seed, 0xC0DE + idx as u64));
        sim.push(SimDevice {
            metadata: meta.clone(),
            emulator: Emulator::new(profile.clone(), signal_seed)?,
            detector: DetectorState::new(&meta.device_id, params)?,
            inject_q: INJECT_Q_MULTIPLE * profile.sigma2,
            topic: announce_topic(&meta.device_id, &meta.sensor_type),
        });
    }
    let period_ms = period_ms.expect("at least one device");
    let config = FleetConfig::for_cadence(period_ms, l_max);
    let heartbeat_every = (config.heartbeat_interval_ms() / period_ms.max(1)).max(1);

    let bus = Bus::default();
    let inbox = bus.subscribe("drift/+/+/announce")?;
    let mut store: Vec<DriftAnnouncement> = Vec::new();
    let mut heartbeats = 0_usize;

    let total = scenario.samples_per_device();
    for step in 0..total {
        for (idx, dev) in sim.iter_mut().enumerate() {
            let fleet_wide = matches!(scenario, Scenario::Natural | Scenario::Mixed);
            if step == PRIMARY_INJECT_INDEX && (fleet_wide || idx == 0) {
                dev.emulator.inject_drift(SlotKind::Abrupt, dev.inject_q, INJECT_LEN)?;
            }
            if step == SECONDARY_INJECT_INDEX && scenario == Scenario::Mixed && idx == 0 {
                dev.emulator.inject_drift(SlotKind::Abrupt, dev.inject_q, INJECT_LEN)?;
            }

            let (sample, _) = dev.emulator.next_sample();
            let outcome = dev.detector.ingest_value(sample.value)?;
            if let Some(event) = outcome.event {
                let ann = build_announcement(&event, dev.metadata.clone(), sample.timestamp_ms);
                bus.publish_json(&dev.topic, &ann)?;
            }
            if step >= WARM_SAMPLES && (step - WARM_SAMPLES) % heartbeat_every == 0 {
                if let Some((z, offset)) = dev.detector.window_statistic() {
                    let len = dev.detector.voting_window_len().unwrap_or(0) as u64;
                    let ann =
                        heartbeat(dev.metadata.clone(), z, offset, len, step, sample.timestamp_ms);
                    bus.publish_json(&dev.topic, &ann)?;
                    heartbeats += 1;
                }
            }
        }
        for msg in inbox.drain() {
            store.push(msg.json::<DriftAnnouncement>()?);
        }
    }

    let grace_ms = SNAPSHOT_GRACE_SAMPLES * period_ms;
    let mut verdicts = Vec::new();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for d in devices {
        counts.insert(d.device_id.clone(), 0);
    }
    for ann in store.iter().filter(|a| a.vote == 1) {
        *counts.entry(ann.metadata.device_id.clone()).or_default() += 1;
        let snapshot: Vec<DriftAnnouncement> = store
            .iter()
            .filter(|a| a.issued_at <= ann.issued_at.saturating_add(grace_ms))
            .cloned()
            .collect();
        let result = classify(ann, &snapshot, &config)?;
        bus.publish_json(
            &verdict_topic(&ann.metadata.device_id, &ann.metadata.sensor_type),
            &result,
        )?;
        verdicts.push(SimVerdict {
            device_id: ann.metadata.device_id.clone(),
            sensor_type: ann.metadata.sensor_type.clone(),
            sample_index: ann.sample_index,
            issued_at: ann.issued_at,
            result,
        });
    }

    Ok(FleetSimReport {
        scenario,
        n_devices: devices.len(),
        samples_per_device: total,
        announcements: counts,
        heartbeats,
        verdicts,
    })
}

fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed.wrapping_add(salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
