//! Per-stream ensemble drift detector.
//!
//! Each sample is fed to the three estimators; their verdicts are recorded and
//! a 2-of-3 majority vote is evaluated over an adaptive window of recent
//! verdicts. A non-overlapping trend window measures the relative mean change
//! between consecutive blocks and resizes the voting window through the
//! exponential [`WindowModel`] (sharp changes shrink it, weak changes grow
//! it). When the vote fires outside a cooldown period, a [`DriftEvent`] is
//! emitted carrying the one-sample KS statistic of the firing window against
//! the calibration baseline.

mod trend;
mod voting;
mod window;

pub use trend::{TrendStats, TrendWindow, MEAN_EPSILON};
pub use voting::{vote, VerdictHistory, N_ESTIMATORS};
pub use window::{adapt_voting_length, WindowModel};

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{one_sample_ks_z, AdwinState, Estimator, KswinState, PhtState};
use crate::real::Real;
use crate::sample::Sample;

/// Default trend-window length in samples.
pub const DEFAULT_TREND_LEN: usize = 64;

/// Default multiplier applied to the trend's relative mean change before the
/// window-model inversion. The trend reports a plain ratio while the model
/// coefficients are calibrated on a percentage scale, so the default is 100.
pub const DEFAULT_UPSILON_SCALE: f64 = 100.0;

fn default_trend_len() -> usize {
    DEFAULT_TREND_LEN
}

fn default_upsilon_scale() -> f64 {
    DEFAULT_UPSILON_SCALE
}

/// Calibrated per-stream detector configuration.
///
/// Estimator indices throughout the detector are 0 = adaptive windowing,
/// 1 = two-sided cumulative test, 2 = sliding-window KS test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    /// Confidence parameter of the adaptive-windowing estimator.
    pub delta: f64,
    /// Magnitude parameter of the cumulative test.
    pub beta: f64,
    /// Firing threshold of the cumulative test.
    pub lambda: f64,
    /// Significance level of the sliding-window KS test.
    pub alpha: f64,
    /// Size of the KS subsample drawn from the older window region.
    pub l_omega: usize,
    /// Size of the KS recent window.
    pub l_r: usize,
    /// Seed for the KS estimator's subsampling RNG.
    #[serde(default)]
    pub kswin_seed: u64,
    /// Baseline mean of the drift-free calibration prefix.
    pub baseline_mean: f64,
    /// Baseline standard deviation of the calibration prefix (`> 0`).
    pub baseline_sd: f64,
    /// Window model mapping trend magnitude to voting-window length.
    pub window_model: WindowModel,
    /// Trend-window length in samples.
    #[serde(default = "default_trend_len")]
    pub trend_len: usize,
    /// Multiplier from the trend's mean-change ratio to the model's scale.
    #[serde(default = "default_upsilon_scale")]
    pub upsilon_scale: f64,
    /// Startup voting-window length; defaults to the model's initial length.
    #[serde(default)]
    pub initial_voting_len: Option<usize>,
}

/// A fired majority vote: the voting window it covers and the evidence in it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftEvent {
    /// Stream the event belongs to.
    pub stream_id: String,
    /// First sample ordinal covered by the firing voting window.
    pub start_index: u64,
    /// Last sample ordinal covered (the sample that fired).
    pub end_index: u64,
    /// Majority vote value; always 1 for an emitted event.
    pub vote: u8,
    /// Per-estimator count of firing verdicts within the window.
    pub per_estimator_counts: [usize; N_ESTIMATORS],
    /// One-sample KS statistic of the window against the baseline normal.
    pub z_statistic: f64,
    /// Mean of the window minus the baseline mean.
    pub mean_offset: f64,
    /// Voting-window length at firing time; equals `end - start + 1`.
    pub window_length: usize,
}

/// Result of ingesting one accepted sample.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestOutcome {
    /// 0-based ordinal of this sample among accepted samples.
    pub index: u64,
    /// Which estimators fired on this sample (see index order above).
    pub fired: [bool; N_ESTIMATORS],
    /// Majority vote over the voting window ending at this sample.
    pub vote: u8,
    /// Voting-window length used for this sample's vote.
    pub voting_len: usize,
    /// Event emitted at this sample, if any.
    pub event: Option<DriftEvent>,
}

struct Engine<R: Real> {
    params: DetectorParams,
    adwin: AdwinState<R>,
    pht: PhtState<R>,
    kswin: KswinState<R>,
    history: VerdictHistory,
    /// Most recent raw values, retained up to the largest voting window.
    values: VecDeque<R>,
    trend: TrendWindow<R>,
    voting_len: usize,
    cooldown: usize,
    /// Verdicts at positions below the floor no longer count toward event
    /// emission; set past the cooldown horizon when an event fires so that
    /// straggling confirmations of the same episode cannot seed a new event.
    fire_floor: u64,
    last_event_end: Option<u64>,
    ingested: u64,
    last_vote: u8,
}

impl<R: Real> Engine<R> {
    fn new(params: DetectorParams) -> Result<Self> {
        if !params.baseline_mean.is_finite() {
            return Err(Error::input("baseline mean must be finite"));
        }
        if !(params.baseline_sd > 0.0) || !params.baseline_sd.is_finite() {
            return Err(Error::input(format!(
                "baseline standard deviation must be positive, got {}",
                params.baseline_sd
            )));
        }
        if params.trend_len < 2 {
            return Err(Error::input("trend window needs at least 2 samples"));
        }
        if !(params.upsilon_scale > 0.0) || !params.upsilon_scale.is_finite() {
            return Err(Error::input("upsilon scale must be positive"));
        }
        let model = &params.window_model;
        let ks_total = params.l_omega + params.l_r;
        if model.l_min <= ks_total {
            return Err(Error::input(format!(
                "smallest voting window ({}) must exceed the KS window span ({ks_total})",
                model.l_min
            )));
        }
        let voting_len = match params.initial_voting_len {
            Some(l) => {
                if l < model.l_min || l > model.l_max {
                    return Err(Error::input(format!(
                        "initial voting length {l} outside [{}, {}]",
                        model.l_min, model.l_max
                    )));
                }
                l
            }
            None => model.initial_voting_len(),
        };
        Ok(Engine {
            adwin: AdwinState::new(params.delta)?,
            pht: PhtState::new(params.beta, params.lambda)?,
            kswin: KswinState::new(params.alpha, params.l_omega, params.l_r, params.kswin_seed)?,
            history: VerdictHistory::new(model.l_max),
            values: VecDeque::with_capacity(model.l_max),
            trend: TrendWindow::new(params.trend_len),
            voting_len,
            cooldown: 0,
            fire_floor: 0,
            last_event_end: None,
            ingested: 0,
            last_vote: 0,
            params,
        })
    }

    /// Counts estimators whose most recent firing both lies inside the
    /// current voting window and postdates the episode floor.
    fn fresh_agreement(&self, window_start: u64) -> usize {
        let floor = self.fire_floor.max(window_start);
        (0..N_ESTIMATORS)
            .filter(|&e| self.history.last_fire(e).is_some_and(|p| p >= floor))
            .count()
    }
}

/// Streaming ensemble detector over one scalar stream.
///
/// Construct with [`DetectorState::new`] once calibration parameters exist,
/// or start [`DetectorState::uncalibrated`] and apply parameters later;
/// ingesting into an uncalibrated detector is a state error. Sample ordinals
/// in outcomes and events count accepted samples from 0.
pub struct DetectorState<R: Real = f64> {
    stream_id: String,
    engine: Option<Engine<R>>,
    skipped_non_finite: u64,
}

impl<R: Real> DetectorState<R> {
    /// Creates a calibrated detector for `stream_id`.
    pub fn new(stream_id: impl Into<String>, params: DetectorParams) -> Result<Self> {
        Ok(DetectorState {
            stream_id: stream_id.into(),
            engine: Some(Engine::new(params)?),
            skipped_non_finite: 0,
        })
    }

    /// Creates a detector that rejects samples until parameters are applied.
    pub fn uncalibrated(stream_id: impl Into<String>) -> Self {
        DetectorState { stream_id: stream_id.into(), engine: None, skipped_non_finite: 0 }
    }

    /// Applies (or replaces) calibration parameters, resetting all stream
    /// state.
    pub fn apply_params(&mut self, params: DetectorParams) -> Result<()> {
        self.engine = Some(Engine::new(params)?);
        Ok(())
    }

    /// Stream identifier carried into emitted events.
    pub fn stream_id(&self) -> &str {
        &self.stream_id
    }

    /// True once calibration parameters have been applied.
    pub fn is_calibrated(&self) -> bool {
        self.engine.is_some()
    }

    /// Current parameters, if calibrated.
    pub fn params(&self) -> Option<&DetectorParams> {
        self.engine.as_ref().map(|e| &e.params)
    }

    /// Voting-window length in effect for the next sample.
    pub fn voting_len(&self) -> Option<usize> {
        self.engine.as_ref().map(|e| e.voting_len)
    }

    /// Majority vote at the most recent sample (0 before any sample).
    pub fn vote_state(&self) -> u8 {
        self.engine.as_ref().map_or(0, |e| e.last_vote)
    }

    /// Current length of the adaptive-windowing estimator's kept window.
    pub fn adwin_window_len(&self) -> Option<u64> {
        self.engine.as_ref().map(|e| e.adwin.window_len())
    }

    /// Current adaptive voting-window length.
    pub fn voting_window_len(&self) -> Option<usize> {
        self.engine.as_ref().map(|e| e.voting_len)
    }

    /// KS statistic and mean offset of the current voting window against the
    /// baseline; `None` before calibration or the first sample.
    pub fn window_statistic(&self) -> Option<(R, R)> {
        let engine = self.engine.as_ref()?;
        if engine.values.is_empty() {
            return None;
        }
        let skip = engine.values.len().saturating_sub(engine.voting_len);
        let window: Vec<R> = engine.values.iter().skip(skip).copied().collect();
        let mu = R::from_f64_lossy(engine.params.baseline_mean);
        let sd = R::from_f64_lossy(engine.params.baseline_sd);
        let z = one_sample_ks_z(&window, mu, sd).ok()?;
        let sum = window.iter().fold(R::zero(), |acc, &v| acc + v);
        let mean = sum / R::from_f64_lossy(window.len() as f64);
        Some((z, mean - mu))
    }

    /// Number of accepted samples so far.
    pub fn samples_ingested(&self) -> u64 {
        self.engine.as_ref().map_or(0, |e| e.ingested)
    }

    /// Number of non-finite samples rejected so far.
    pub fn skipped_non_finite(&self) -> u64 {
        self.skipped_non_finite
    }

    /// Feeds one sample; see [`DetectorState::ingest_value`].
    pub fn ingest(&mut self, sample: &Sample<R>) -> Result<IngestOutcome> {
        self.ingest_value(sample.value)
    }

    /// Feeds one value through the estimators, the vote, and the trend
    /// window; returns the per-sample outcome.
    ///
    /// A resize triggered by a completed trend window applies from the next
    /// sample. After an event, re-votes are suppressed for one voting-window
    /// length, a new event's window must start after the previous event's
    /// end, and only estimator firings newer than the ended episode count
    /// toward the next emission.
    pub fn ingest_value(&mut self, value: R) -> Result<IngestOutcome> {
        if self.engine.is_none() {
            return Err(Error::state("detector not calibrated: apply parameters before ingesting"));
        }
        if !value.is_finite() {
            self.skipped_non_finite += 1;
            return Err(Error::input("non-finite sample value skipped"));
        }
        let engine = self.engine.as_mut().expect("checked above");

        let index = engine.ingested;
        let fired = [
            engine.adwin.insert(value)?.drifted,
            engine.pht.insert(value)?.drifted,
            engine.kswin.insert(value)?.drifted,
        ];
        engine.history.push(fired);
        if engine.values.len() == engine.params.window_model.l_max {
            engine.values.pop_front();
        }
        engine.values.push_back(value);
        engine.ingested += 1;

        let l_v = engine.voting_len;
        let vote = voting::vote(&engine.history, l_v);
        engine.last_vote = vote;

        let mut event = None;
        if engine.cooldown > 0 {
            engine.cooldown -= 1;
        } else if vote == 1 {
            let start = index + 1 - l_v as u64;
            let begins_after_previous = engine.last_event_end.map_or(true, |end| start > end);
            if begins_after_previous && engine.fresh_agreement(start) >= 2 {
                let skip = engine.values.len() - l_v;
                let window: Vec<R> = engine.values.iter().skip(skip).copied().collect();
                let mu = R::from_f64_lossy(engine.params.baseline_mean);
                let sd = R::from_f64_lossy(engine.params.baseline_sd);
                let z = one_sample_ks_z(&window, mu, sd)?.as_f64();
                let window_mean =
                    window.iter().map(|v| v.as_f64()).sum::<f64>() / window.len() as f64;
                event = Some(DriftEvent {
                    stream_id: self.stream_id.clone(),
                    start_index: start,
                    end_index: index,
                    vote: 1,
                    per_estimator_counts: engine.history.window_counts(l_v),
                    z_statistic: z,
                    mean_offset: window_mean - engine.params.baseline_mean,
                    window_length: l_v,
                });
                engine.cooldown = l_v;
                engine.fire_floor = index + l_v as u64 + 1;
                engine.last_event_end = Some(index);
            }
        }

        if let Some(stats) = engine.trend.push(value) {
            if !stats.degenerate {
                if let Some(upsilon) = stats.upsilon {
                    engine.voting_len = adapt_voting_length(
                        upsilon * engine.params.upsilon_scale,
                        &engine.params.window_model,
                    );
                }
            }
        }

        Ok(IngestOutcome { index, fired, vote, voting_len: l_v, event })
    }
}
