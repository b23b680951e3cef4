//! Cross-device drift classification.
//!
//! Devices announce their voting state and KS statistic on the bus. When a
//! device detects a drift, the announcements of metadata-matched peers
//! inside a correlation window decide whether the drift is *natural*
//! (environmental — peers see it too and the subject's statistic is in line
//! with theirs) or *abnormal* (only this sensor drifts, or its statistic is
//! a robust outlier among the peer values).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detector::DriftEvent;
use crate::error::{Error, Result};

/// Minimum number of in-window peers required for a verdict.
pub const DEFAULT_MIN_PEERS: usize = 2;

/// Robust-outlier multiplier on the median absolute deviation.
pub const DEFAULT_MAD_KAPPA: f64 = 3.0;

/// Floor applied to the median absolute deviation.
pub const MAD_FLOOR: f64 = 1e-6;

/// Identity and matching metadata of one fleet device.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceMetadata {
    /// Unique device identifier.
    pub device_id: String,
    /// Sensor kind this device reports.
    pub sensor_type: String,
    /// Free-form matching tags (room, zone, model...).
    #[serde(default)]
    pub tags: BTreeMap<String, String>,
}

impl DeviceMetadata {
    /// Builds metadata with a single `room` tag, the default matching key.
    pub fn in_room(device_id: &str, sensor_type: &str, room: &str) -> Self {
        DeviceMetadata {
            device_id: device_id.into(),
            sensor_type: sensor_type.into(),
            tags: BTreeMap::from([("room".to_string(), room.to_string())]),
        }
    }
}

/// One voting-state message exchanged between devices.
///
/// `vote = 1` announcements are triggered by a drift event; peers also
/// publish `vote = 0` heartbeats so "peer saw nothing" is distinguishable
/// from "peer silent".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftAnnouncement {
    /// Announcing device.
    #[serde(flatten)]
    pub metadata: DeviceMetadata,
    /// Voting state (0 heartbeat, 1 drift).
    pub vote: u8,
    /// One-sample KS statistic of the device's current window.
    #[serde(rename = "z")]
    pub z_statistic: f64,
    /// Window mean minus baseline mean.
    pub mean_offset: f64,
    /// Voting-window length behind the statistic.
    pub window_length: u64,
    /// Sample ordinal the announcement refers to.
    pub sample_index: u64,
    /// Announcement timestamp in milliseconds.
    pub issued_at: u64,
}

/// Copies a drift event into an announcement (vote is always 1).
pub fn build_announcement(
    event: &DriftEvent,
    metadata: DeviceMetadata,
    issued_at: u64,
) -> DriftAnnouncement {
    DriftAnnouncement {
        metadata,
        vote: 1,
        z_statistic: event.z_statistic,
        mean_offset: event.mean_offset,
        window_length: event.window_length as u64,
        sample_index: event.end_index,
        issued_at,
    }
}

/// Builds a vote-0 heartbeat carrying the device's current statistic.
pub fn heartbeat(
    metadata: DeviceMetadata,
    z_statistic: f64,
    mean_offset: f64,
    window_length: u64,
    sample_index: u64,
    issued_at: u64,
) -> DriftAnnouncement {
    DriftAnnouncement {
        metadata,
        vote: 0,
        z_statistic,
        mean_offset,
        window_length,
        sample_index,
        issued_at,
    }
}

/// Verdict over one subject announcement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Peers corroborate the drift; environmental change.
    Natural,
    /// The drift is specific to the subject device.
    Abnormal,
    /// Too few matching peer announcements to decide.
    InsufficientPeers,
}

/// Outcome of classifying one drift announcement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    /// The verdict.
    pub verdict: Verdict,
    /// Device that announced the drift.
    pub subject: String,
    /// Matching peers with an announcement inside the correlation window.
    pub peer_count: usize,
    /// Of those, peers whose latest announcement also votes 1.
    pub agreeing_peers: usize,
    /// KS statistics used (subject first, then peers in device order).
    pub z_values: Vec<f64>,
    /// Peers whose clock differs from the subject's by more than half the
    /// correlation window (still counted, but flagged).
    #[serde(default)]
    pub skewed_peers: usize,
}

/// Matching and significance parameters for classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetConfig {
    /// Tag keys (beyond the sensor type) that peers must share.
    pub match_keys: Vec<String>,
    /// Minimum in-window peers for a verdict.
    pub min_peers: usize,
    /// Correlation window in milliseconds.
    pub correlation_window_ms: u64,
    /// Outlier multiplier on the MAD.
    pub mad_kappa: f64,
}

impl FleetConfig {
    /// Config with the default keys and a correlation window of five maximal
    /// voting windows at the given cadence.
    pub fn for_cadence(sample_period_ms: u64, l_max: u64) -> Self {
        FleetConfig {
            match_keys: vec!["room".to_string()],
            min_peers: DEFAULT_MIN_PEERS,
            correlation_window_ms: 5 * sample_period_ms * l_max,
            mad_kappa: DEFAULT_MAD_KAPPA,
        }
    }

    /// Interval at which devices publish heartbeats.
    pub fn heartbeat_interval_ms(&self) -> u64 {
        (self.correlation_window_ms / 2).max(1)
    }

    fn validate(&self) -> Result<()> {
        if self.match_keys.is_empty() {
            return Err(Error::input("at least one matching tag key is required"));
        }
        if self.correlation_window_ms == 0 || !(self.mad_kappa > 0.0) {
            return Err(Error::input("correlation window and MAD multiplier must be positive"));
        }
        Ok(())
    }
}

/// Bus topic a device announces on.
pub fn announce_topic(device_id: &str, sensor_type: &str) -> String {
    format!("drift/{device_id}/{sensor_type}/announce")
}

/// Bus topic a device's verdicts are published on.
pub fn verdict_topic(device_id: &str, sensor_type: &str) -> String {
    format!("drift/{device_id}/{sensor_type}/verdict")
}

fn tags_match(subject: &DeviceMetadata, candidate: &DeviceMetadata, keys: &[String]) -> bool {
    candidate.device_id != subject.device_id
        && candidate.sensor_type == subject.sensor_type
        && keys.iter().all(|k| candidate.tags.get(k) == subject.tags.get(k))
}

/// Devices whose sensor type and listed tags all equal the subject's
/// (subject itself excluded).
pub fn match_peers<'a>(
    subject: &DeviceMetadata,
    all: &'a [DeviceMetadata],
    keys: &[String],
) -> Result<Vec<&'a DeviceMetadata>> {
    if keys.is_empty() {
        return Err(Error::input("at least one matching tag key is required"));
    }
    Ok(all.iter().filter(|c| tags_match(subject, c, keys)).collect())
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn median_of(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite statistics"));
    median(&sorted)
}

/// Median absolute deviation, floored at [`MAD_FLOOR`].
fn mad(values: &[f64], center: f64) -> f64 {
    let deviations: Vec<f64> = values.iter().map(|v| (v - center).abs()).collect();
    median_of(&deviations).max(MAD_FLOOR)
}

/// Classifies one subject drift announcement against a snapshot of all
/// received announcements.
///
/// Only metadata-matched peer announcements issued within the correlation
/// window around the subject's timestamp count; the latest announcement per
/// peer device wins. The drift is natural when a majority of those peers
/// also vote 1 *and* the subject's KS statistic is within
/// `mad_kappa`·MAD of the peer-set median; abnormal otherwise.
pub fn classify(
    subject: &DriftAnnouncement,
    announcements: &[DriftAnnouncement],
    config: &FleetConfig,
) -> Result<ClassificationResult> {
    config.validate()?;
    if subject.vote != 1 {
        return Err(Error::input("classification requires a vote-1 subject announcement"));
    }
    let t_c = config.correlation_window_ms;
    let in_window =
        |a: &DriftAnnouncement| subject.issued_at.abs_diff(a.issued_at) <= t_c;

    // Latest in-window announcement per matching peer device.
    let mut latest: BTreeMap<&str, &DriftAnnouncement> = BTreeMap::new();
    for a in announcements {
        if tags_match(&subject.metadata, &a.metadata, &config.match_keys) && in_window(a) {
            let entry = latest.entry(a.metadata.device_id.as_str()).or_insert(a);
            if a.issued_at >= entry.issued_at {
                *entry = a;
            }
        }
    }

    let peer_count = latest.len();
    let agreeing = latest.values().filter(|a| a.vote == 1).count();
    let skewed = latest
        .values()
        .filter(|a| subject.issued_at.abs_diff(a.issued_at) > t_c / 2)
        .count();
    let mut z_values = vec![subject.z_statistic];
    z_values.extend(latest.values().map(|a| a.z_statistic));

    let verdict = if peer_count < config.min_peers {
        Verdict::InsufficientPeers
    } else {
        let required = (peer_count + 1).div_ceil(2);
        let center = median_of(&z_values);
        let spread = mad(&z_values, center);
        let in_line = (subject.z_statistic - center).abs() <= config.mad_kappa * spread;
        if agreeing >= required && in_line {
            Verdict::Natural
        } else {
            Verdict::Abnormal
        }
    };
    Ok(ClassificationResult {
        verdict,
        subject: subject.metadata.device_id.clone(),
        peer_count,
        agreeing_peers: agreeing,
        z_values,
        skewed_peers: skewed,
    })
}

/// Loads a fleet manifest (JSON list of device metadata) and checks device
/// IDs are unique.
pub fn load_manifest<P: AsRef<Path>>(path: P) -> Result<Vec<DeviceMetadata>> {
    let text = std::fs::read_to_string(path)?;
    parse_manifest(&text)
}

/// Parses and validates manifest JSON.
pub fn parse_manifest(json: &str) -> Result<Vec<DeviceMetadata>> {
    let devices: Vec<DeviceMetadata> = serde_json::from_str(json)?;
    let mut seen = std::collections::BTreeSet::new();
    for d in &devices {
        if !seen.insert(d.device_id.as_str()) {
            return Err(Error::format(format!("duplicate device_id '{}' in manifest", d.device_id)));
        }
    }
    Ok(devices)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> FleetConfig {
        FleetConfig {
            match_keys: vec!["room".to_string()],
            min_peers: 2,
            correlation_window_ms: 100_000,
            mad_kappa: 3.0,
        }
    }

    fn ann(device: &str, room: &str, vote: u8, z: f64, issued_at: u64) -> DriftAnnouncement {
        DriftAnnouncement {
            metadata: DeviceMetadata::in_room(device, "temperature", room),
            vote,
            z_statistic: z,
            mean_offset: 0.5,
            window_length: 700,
            sample_index: 4200,
            issued_at,
        }
    }

    #[test]
    fn match_peers_requires_sensor_and_tag_equality() {
        let subject = DeviceMetadata::in_room("dev0", "temperature", "A");
        let fleet = vec![
            DeviceMetadata::in_room("dev1", "temperature", "A"),
            DeviceMetadata::in_room("dev2", "temperature", "B"),
            DeviceMetadata::in_room("dev3", "humidity", "A"),
        ];
        let keys = vec!["room".to_string()];
        let peers = match_peers(&subject, &fleet, &keys).unwrap();
        assert_eq!(peers.len(), 1);
        assert_eq!(peers[0].device_id, "dev1");

        assert!(match_peers(&subject, &fleet, &[]).is_err());
        assert!(match_peers(&subject, &[], &keys).unwrap().is_empty());
    }

    #[test]
    fn match_peers_excludes_subject_and_keeps_identical_peers() {
        let subject = DeviceMetadata::in_room("dev0", "temperature", "A");
        let mut fleet = vec![subject.clone()];
        for i in 1..=5 {
            fleet.push(DeviceMetadata::in_room(&format!("dev{i}"), "temperature", "A"));
        }
        let peers = match_peers(&subject, &fleet, &["room".to_string()]).unwrap();
        assert_eq!(peers.len(), 5);
        assert!(peers.iter().all(|p| p.device_id != "dev0"));
    }

    #[test]
    fn unanimous_fleet_with_tight_statistics_is_natural() {
        let subject = ann("dev0", "A", 1, 0.33, 1000);
        let peers: Vec<_> = [0.30, 0.32, 0.34, 0.36]
            .iter()
            .enumerate()
            .map(|(i, &z)| ann(&format!("dev{}", i + 1), "A", 1, z, 1000))
            .collect();
        let result = classify(&subject, &peers, &config()).unwrap();
        assert_eq!(result.verdict, Verdict::Natural);
        assert_eq!(result.peer_count, 4);
        assert_eq!(result.agreeing_peers, 4);
        assert_eq!(result.z_values.len(), 5);
    }

    #[test]
    fn lone_voter_among_quiet_peers_is_abnormal() {
        let subject = ann("dev0", "A", 1, 0.42, 1000);
        let peers: Vec<_> =
            (1..=4).map(|i| ann(&format!("dev{i}"), "A", 0, 0.02, 1000)).collect();
        let result = classify(&subject, &peers, &config()).unwrap();
        assert_eq!(result.verdict, Verdict::Abnormal);
        assert_eq!(result.agreeing_peers, 0);
    }

    #[test]
    fn outlying_statistic_is_abnormal_even_with_co_votes() {
        // Peers co-vote, but the subject's statistic is far outside their
        // tight cluster.
        let subject = ann("dev0", "A", 1, 0.95, 1000);
        let peers: Vec<_> = [0.30, 0.31, 0.32, 0.33]
            .iter()
            .enumerate()
            .map(|(i, &z)| ann(&format!("dev{}", i + 1), "A", 1, z, 1000))
            .collect();
        let result = classify(&subject, &peers, &config()).unwrap();
        assert_eq!(result.verdict, Verdict::Abnormal);
        assert_eq!(result.agreeing_peers, 4);
    }

    #[test]
    fn small_fleets_yield_insufficient_peers() {
        let subject = ann("dev0", "A", 1, 0.4, 1000);
        let result = classify(&subject, &[], &config()).unwrap();
        assert_eq!(result.verdict, Verdict::InsufficientPeers);
        assert_eq!(result.peer_count, 0);

        let one_peer = [ann("dev1", "A", 1, 0.4, 1000)];
        let result = classify(&subject, &one_peer, &config()).unwrap();
        assert_eq!(result.verdict, Verdict::InsufficientPeers);
        assert_eq!(result.peer_count, 1);
    }

    #[test]
    fn stale_announcements_are_discarded() {
        let subject = ann("dev0", "A", 1, 0.4, 1_000_000);
        let peers = [
            ann("dev1", "A", 1, 0.4, 1_000_000 - 200_000),
            ann("dev2", "A", 1, 0.4, 1_000_000),
        ];
        // dev1's announcement is outside the 100 s window.
        let result = classify(&subject, &peers, &config()).unwrap();
        assert_eq!(result.verdict, Verdict::InsufficientPeers);
        assert_eq!(result.peer_count, 1);
    }

    #[test]
    fn latest_announcement_per_peer_wins() {
        let subject = ann("dev0", "A", 1, 0.4, 10_000);
        let peers = [
            ann("dev1", "A", 0, 0.02, 1_000),
            ann("dev1", "A", 1, 0.41, 9_000),
            ann("dev2", "A", 1, 0.39, 9_500),
        ];
        let result = classify(&subject, &peers, &config()).unwrap();
        assert_eq!(result.peer_count, 2);
        assert_eq!(result.agreeing_peers, 2);
        assert_eq!(result.verdict, Verdict::Natural);
    }

    #[test]
    fn clock_skew_beyond_half_window_is_flagged_but_counted() {
        let subject = ann("dev0", "A", 1, 0.4, 200_000);
        let peers = [
            ann("dev1", "A", 1, 0.4, 200_000 - 60_000),
            ann("dev2", "A", 1, 0.4, 200_000),
        ];
        let result = classify(&subject, &peers, &config()).unwrap();
        assert_eq!(result.verdict, Verdict::Natural);
        assert_eq!(result.peer_count, 2);
        assert_eq!(result.skewed_peers, 1);
    }

    #[test]
    fn classification_is_permutation_invariant() {
        let subject = ann("dev0", "A", 1, 0.40, 1000);
        let mut peers = vec![
            ann("dev1", "A", 1, 0.38, 900),
            ann("dev2", "A", 0, 0.05, 950),
            ann("dev3", "A", 1, 0.41, 1000),
            ann("dev4", "A", 1, 0.39, 1050),
        ];
        let reference = classify(&subject, &peers, &config()).unwrap();
        for rotation in 1..peers.len() {
            peers.rotate_left(1);
            let _ = rotation;
            assert_eq!(classify(&subject, &peers, &config()).unwrap(), reference);
        }
    }

    #[test]
    fn non_matching_peer_never_changes_the_verdict() {
        let subject = ann("dev0", "A", 1, 0.40, 1000);
        let mut peers = vec![
            ann("dev1", "A", 1, 0.39, 1000),
            ann("dev2", "A", 1, 0.41, 1000),
        ];
        let before = classify(&subject, &peers, &config()).unwrap();
        peers.push(ann("dev9", "B", 0, 0.99, 1000));
        let mut other_sensor = ann("dev10", "A", 0, 0.99, 1000);
        other_sensor.metadata.sensor_type = "humidity".into();
        peers.push(other_sensor);
        let after = classify(&subject, &peers, &config()).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn equal_statistics_with_majority_votes_are_natural_at_any_size() {
        for fleet_size in 3..=8 {
            let subject = ann("dev0", "A", 1, 0.37, 1000);
            let peers: Vec<_> = (1..fleet_size)
                .map(|i| ann(&format!("dev{i}"), "A", 1, 0.37, 1000))
                .collect();
            let result = classify(&subject, &peers, &config()).unwrap();
            assert_eq!(result.verdict, Verdict::Natural, "fleet size {fleet_size}");
        }
    }

    #[test]
    fn subject_must_vote_one() {
        let subject = ann("dev0", "A", 0, 0.4, 1000);
        assert!(classify(&subject, &[], &config()).is_err());
    }

    #[test]
    fn announcement_json_uses_the_wire_schema() {
        let a = ann("dev1", "A", 1, 0.25, 123_000);
        let json = serde_json::to_value(&a).unwrap();
        let obj = json.as_object().unwrap();
        let mut keys: Vec<_> = obj.keys().map(String::as_str).collect();
        keys.sort_unstable();
        assert_eq!(
            keys,
            [
                "device_id",
                "issued_at",
                "mean_offset",
                "sample_index",
                "sensor_type",
                "tags",
                "vote",
                "window_length",
                "z"
            ]
        );
        assert_eq!(json["vote"], 1);
        assert_eq!(json["z"], 0.25);
        assert_eq!(json["tags"]["room"], "A");
        let back: DriftAnnouncement = serde_json::from_value(json).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn build_announcement_copies_event_fields() {
        let event = DriftEvent {
            stream_id: "dev1/temperature".into(),
            start_index: 4000,
            end_index: 4499,
            vote: 1,
            per_estimator_counts: [3, 2, 41],
            z_statistic: 0.44,
            mean_offset: 2.2,
            window_length: 500,
            };
        let meta = DeviceMetadata::in_room("dev1", "temperature", "A");
        let a = build_announcement(&event, meta.clone(), 9_000);
        assert_eq!(a.vote, 1);
        assert_eq!(a.z_statistic, 0.44);
        assert_eq!(a.mean_offset, 2.2);
        assert_eq!(a.window_length, 500);
        assert_eq!(a.sample_index, 4499);
        assert_eq!(a.issued_at, 9_000);
        assert_eq!(a.metadata, meta);

        let hb = heartbeat(meta, 0.03, 0.0, 700, 100, 10_000);
        assert_eq!(hb.vote, 0);
    }

    #[test]
    fn manifest_round_trips_and_rejects_duplicates() {
        let fleet = vec![
            DeviceMetadata::in_room("dev1", "temperature", "A"),
            DeviceMetadata::in_room("dev2", "temperature", "A"),
        ];
        let json = serde_json::to_string(&fleet).unwrap();
        assert_eq!(parse_manifest(&json).unwrap(), fleet);

        let dup = vec![
            DeviceMetadata::in_room("dev1", "temperature", "A"),
            DeviceMetadata::in_room("dev1", "temperature", "B"),
        ];
        let json = serde_json::to_string(&dup).unwrap();
        assert!(matches!(parse_manifest(&json), Err(Error::Format(_))));
        assert!(load_manifest("/nonexistent/fleet.json").is_err());
    }

    #[test]
    fn topics_follow_the_fixed_layout() {
        assert_eq!(announce_topic("dev1", "temperature"), "drift/dev1/temperature/announce");
        assert_eq!(verdict_topic("dev1", "temperature"), "drift/dev1/temperature/verdict");
    }
}
