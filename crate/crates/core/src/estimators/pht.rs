//! Two-sided Page-Hinkley cumulative change test.
//!
//! Two one-sided statistics are tracked against the running mean: `u_up`
//! accumulates `x - mean - beta/2` (with its running minimum) and fires on a
//! sustained mean increase, `u_down` accumulates `x - mean + beta/2` (with its
//! running maximum) and fires on a decrease. `beta` is the tolerated magnitude
//! and `lambda` the detection threshold. On detection the whole state resets
//! so the test re-learns the post-change level.


use crate::error::{Error, Result};
use crate::estimators::{DriftDirection, Estimator, Verdict};
use crate::real::Real;

/// Page-Hinkley estimator state.
#[derive(Debug, Clone)]
pub struct PhtState<R = f64> {
    beta: f64,
    lambda: f64,
    half_beta: R,
    lambda_r: R,
    n: u64,
    running_mean: R,
    u_up: R,
    u_up_min: R,
    u_down: R,
    u_down_max: R,
}

impl<R: Real> PhtState<R> {
    /// Creates a test with tolerated magnitude `beta > 0` and threshold
    /// `lambda > 0`.
    pub fn new(beta: f64, lambda: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::input(format!("beta must be positive, got {beta}")));
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::input(format!("lambda must be positive, got {lambda}")));
        }
        Ok(PhtState {
            beta,
            lambda,
            half_beta: R::from_f64_lossy(beta) / R::from_f64_lossy(2.0),
            lambda_r: R::from_f64_lossy(lambda),
            n: 0,
            running_mean: R::zero(),
            u_up: R::zero(),
            u_up_min: R::zero(),
            u_down: R::zero(),
            u_down_max: R::zero(),
        })
    }

    /// Tolerated magnitude parameter.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Detection threshold parameter.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Current upward statistic and its running minimum.
    pub fn upward(&self) -> (R, R) {
        (self.u_up, self.u_up_min)
    }

    /// Current downward statistic and its running maximum.
    pub fn downward(&self) -> (R, R) {
        (self.u_down, self.u_down_max)
    }

    /// Returns all accumulators to their initial values.
    pub fn reset(&mut self) {
        self.n = 0;
        self.running_mean = R::zero();
        self.u_up = R::zero();
        self.u_up_min = R::zero();
        self.u_down = R::zero();
        self.u_down_max = R::zero();
    }
}

impl<R: Real> Estimator<R> for PhtState<R> {
    /// Updates the running mean (including `x`), advances both one-sided
    /// statistics, and fires when either deviates from its extremum by at
    /// least `lambda`. The state fully resets on detection.
    fn insert(&mut self, x: R) -> Result<Verdict> {
        if !x.is_finite() {
            return Err(Error::input("non-finite sample"));
        }
        self.n += 1;
        let n_r = R::from_u64(self.n).expect("count fits scalar");
        self.running_mean = self.running_mean + (x - self.running_mean) / n_r;
        let dev = x - self.running_mean;
        self.u_up = self.u_up + (dev - self.half_beta);
        if self.u_up < self.u_up_min {
            self.u_up_min = self.u_up;
        }
        self.u_down = self.u_down + (dev + self.half_beta);
        if self.u_down > self.u_down_max {
            self.u_down_max = self.u_down;
        }
        let up_excess = self.u_up - self.u_up_min;
        let down_excess = self.u_down_max - self.u_down;
        let up = up_excess >= self.lambda_r;
        let down = down_excess >= self.lambda_r;
        if up || down {
            let direction = if up && (!down || up_excess >= down_excess) {
                DriftDirection::Up
            } else {
                DriftDirection::Down
            };
            self.reset();
            return Ok(Verdict::drift(Some(direction)));
        }
        Ok(Verdict::none())
    }

    fn mean(&self) -> Option<R> {
        if self.n == 0 {
            None
        } else {
            Some(self.running_mean)
        }
    }

    fn std_dev(&self) -> Option<R> {
        // The test only tracks first-order deviations from the running mean;
        // expose the mean absolute deviation rate of the upward statistic as a
        // rough spread proxy.
        if self.n == 0 {
            return None;
        }
        let n_r = R::from_u64(self.n).expect("count fits scalar");
        Some(((self.u_up - self.u_up_min) / n_r).abs())
    }

    fn len(&self) -> usize {
        self.n as usize
    }
}
