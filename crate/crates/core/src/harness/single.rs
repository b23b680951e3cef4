//! Standalone single-estimator detector used as an experiment baseline.
//!
//! Wraps one estimator in the same adaptive voting-window machinery as the
//! ensemble, but with a 1-of-1 vote: the per-sample prediction is 1 while
//! the estimator has fired within the current voting window. This is the
//! "each estimator on its own" comparison variant; it gets no ensemble
//! voting and no baseline-similarity check.

use serde::{Deserialize, Serialize};

use crate::detector::{adapt_voting_length, DetectorParams, TrendWindow, WindowModel};
use crate::error::Result;
use crate::estimators::{AdwinState, Estimator, KswinState, PhtState};

/// Which estimator a [`SingleDetector`] wraps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    /// Adaptive windowing.
    Adwin,
    /// Two-sided Page-Hinkley.
    Pht,
    /// Sliding-window KS.
    Kswin,
}

impl EstimatorKind {
    /// All three kinds, in reporting order.
    pub const ALL: [EstimatorKind; 3] = [EstimatorKind::Adwin, EstimatorKind::Pht, EstimatorKind::Kswin];

    /// Lower-case label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::Adwin => "adwin",
            EstimatorKind::Pht => "pht",
            EstimatorKind::Kswin => "kswin",
        }
    }
}

enum Est {
    Adwin(AdwinState<f64>),
    Pht(PhtState<f64>),
    Kswin(KswinState<f64>),
}

impl Est {
    fn insert(&mut self, value: f64) -> Result<bool> {
        let verdict = match self {
            Est::Adwin(e) => e.insert(value)?,
            Est::Pht(e) => e.insert(value)?,
            Est::Kswin(e) => e.insert(value)?,
        };
        Ok(verdict.drifted)
    }
}

/// One estimator plus the adaptive voting-window machinery.
pub struct SingleDetector {
    est: Est,
    model: WindowModel,
    upsilon_scale: f64,
    trend: TrendWindow<f64>,
    voting_len: usize,
    last_fire: Option<u64>,
    pushed: u64,
    fires: u64,
}

impl SingleDetector {
    /// Builds the wrapped estimator from the same calibrated parameters the
    /// ensemble uses.
    pub fn new(kind: EstimatorKind, params: &DetectorParams) -> Result<Self> {
        let est = match kind {
            EstimatorKind::Adwin => Est::Adwin(AdwinState::new(params.delta)?),
            EstimatorKind::Pht => Est::Pht(PhtState::new(params.beta, params.lambda)?),
            EstimatorKind::Kswin => Est::Kswin(KswinState::new(
                params.alpha,
                params.l_omega,
                params.l_r,
                params.kswin_seed,
            )?),
        };
        let model = params.window_model.clone();
        let voting_len =
            params.initial_voting_len.unwrap_or_else(|| model.initial_voting_len());
        Ok(SingleDetector {
            est,
            model,
            upsilon_scale: params.upsilon_scale,
            trend: TrendWindow::new(params.trend_len),
            voting_len,
            last_fire: None,
            pushed: 0,
            fires: 0,
        })
    }

    /// Number of times the estimator has fired.
    pub fn fires(&self) -> u64 {
        self.fires
    }

    /// Current voting-window length.
    pub fn voting_len(&self) -> usize {
        self.voting_len
    }

    /// Feeds one value; returns this sample's 1-of-1 vote.
    pub fn ingest(&mut self, value: f64) -> Result<u8> {
        if self.est.insert(value)? {
            self.last_fire = Some(self.pushed);
            self.fires += 1;
        }
        self.pushed += 1;
        let window = self.voting_len as u64;
        let vote = if self.pushed < window {
            0
        } else {
            match self.last_fire {
                Some(at) if at + window >= self.pushed => 1,
                _ => 0,
            }
        };
        // The window resize from this sample's trend applies from the next
        // sample, mirroring the ensemble detector.
        if let Some(stats) = self.trend.push(value) {
            if !stats.degenerate {
                if let Some(upsilon) = stats.upsilon {
                    self.voting_len =
                        adapt_voting_length(upsilon * self.upsilon_scale, &self.model);
                }
            }
        }
        Ok(vote)
    }
}
