//! Exponential window model mapping observed trend magnitude to voting-window
//! length.
//!
//! The model `Y(x) = zeta * exp(eta * x) + gamma` relates a normalized window
//! size `x` in `[0, 1]` to the relative mean change `Y` it should react to;
//! `eta < 0`, so sharp changes map to small windows and weak changes to large
//! ones. [`adapt_voting_length`] inverts the model and maps `x` affinely onto
//! `[l_min, l_max]` samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients and bounds of the window model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowModel {
    /// Scale coefficient (`> 0`).
    pub zeta: f64,
    /// Exponent coefficient (`< 0`).
    pub eta: f64,
    /// Offset coefficient.
    pub gamma: f64,
    /// Smallest voting-window length in samples.
    pub l_min: usize,
    /// Largest voting-window length in samples.
    pub l_max: usize,
}

impl WindowModel {
    /// Builds a model after validating coefficient signs and bounds.
    pub fn new(zeta: f64, eta: f64, gamma: f64, l_min: usize, l_max: usize) -> Result<Self> {
        if !(zeta > 0.0) || !zeta.is_finite() {
            return Err(Error::input(format!("zeta must be positive, got {zeta}")));
        }
        if !(eta < 0.0) || !eta.is_finite() {
            return Err(Error::input(format!("eta must be negative, got {eta}")));
        }
        if !gamma.is_finite() {
            return Err(Error::input("gamma must be finite"));
        }
        if l_min < 2 || l_min >= l_max {
            return Err(Error::input(format!("need 2 <= l_min < l_max, got {l_min}..{l_max}")));
        }
        Ok(WindowModel { zeta, eta, gamma, l_min, l_max })
    }

    /// Temperature-stream coefficients with default window bounds.
    pub fn temperature() -> Self {
        WindowModel::new(8.782, -5.021, 1.468, 331, 2000).expect("valid fixture")
    }

    /// Humidity-stream coefficients with default window bounds.
    pub fn humidity() -> Self {
        WindowModel::new(9.641, -4.117, 1.508, 331, 2000).expect("valid fixture")
    }

    /// Pressure-stream coefficients with default window bounds.
    pub fn pressure() -> Self {
        WindowModel::new(7.590, -5.132, 1.829, 331, 2000).expect("valid fixture")
    }

    /// Forward evaluation `Y(x) = zeta * exp(eta * x) + gamma`.
    pub fn forward(&self, x: f64) -> f64 {
        self.zeta * (self.eta * x).exp() + self.gamma
    }

    /// Startup voting-window length: one quarter of the way up the range.
    pub fn initial_voting_len(&self) -> usize {
        self.l_min + (self.l_max - self.l_min) / 4
    }

    /// Continuous inverse: the normalized window size `x` in `[0, 1]` whose
    /// forward evaluation equals `upsilon`, saturating outside the model's
    /// range (`upsilon <= gamma` -> 1, `upsilon >= zeta + gamma` -> 0).
    pub fn invert(&self, upsilon: f64) -> f64 {
        if upsilon <= self.gamma {
            1.0
        } else if upsilon >= self.zeta + self.gamma {
            0.0
        } else {
            (((upsilon - self.gamma) / self.zeta).ln() / self.eta).clamp(0.0, 1.0)
        }
    }
}

/// Inverts the window model at trend magnitude `upsilon` and returns the
/// voting-window length in samples.
///
/// `upsilon <= gamma` saturates at `l_max` (weakest change, largest window);
/// `upsilon >= zeta + gamma` saturates at `l_min`. In between,
/// `x = ln((upsilon - gamma) / zeta) / eta`, clamped to `[0, 1]`.
pub fn adapt_voting_length(upsilon: f64, model: &WindowModel) -> usize {
    let x = model.invert(upsilon);
    let span = (model.l_max - model.l_min) as f64;
    model.l_min + (x * span).round() as usize
}
