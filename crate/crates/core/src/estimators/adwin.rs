//! Adaptive-window estimator over an exponential histogram.
//!
//! The window is stored as levels of buckets; level `l` buckets each summarise
//! `2^l` consecutive samples and at most `max_buckets_per_level` buckets live
//! on a level before the two oldest are merged one level up. Every bucket
//! boundary is a candidate cut between historical and recent data; a cut whose
//! mean difference exceeds a Bernstein-style bound drops the historical side.

use std::collections::VecDeque;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::estimators::{Estimator, Verdict};
use crate::real::Real;

/// Default cap on buckets per histogram level.
pub const DEFAULT_MAX_BUCKETS: usize = 5;

#[derive(Debug, Clone, Copy)]
struct Bucket<R> {
    count: u64,
    sum: R,
    sum_sq: R,
}

impl<R: Real> Bucket<R> {
    fn single(x: R) -> Self {
        Bucket { count: 1, sum: x, sum_sq: x * x }
    }

    fn merge(a: Bucket<R>, b: Bucket<R>) -> Self {
        Bucket { count: a.count + b.count, sum: a.sum + b.sum, sum_sq: a.sum_sq + b.sum_sq }
    }
}

/// Significance-threshold term for one candidate cut.
///
/// `m` is the harmonic mean of the two side lengths, the per-cut significance
/// is `delta / l_total`, and the bound combines a variance term with a
/// second-order correction:
/// `sqrt((2/m) * var * ln(2/delta')) + (2/(3m)) * ln(2/delta')`.
pub fn epsilon_cut(l_hist: u64, l_new: u64, var_window: f64, delta: f64, l_total: u64) -> f64 {
    let m = 1.0 / (1.0 / l_hist as f64 + 1.0 / l_new as f64);
    let delta_prime = delta / l_total as f64;
    let ln_term = (2.0 / delta_prime).ln();
    ((2.0 / m) * var_window * ln_term).sqrt() + (2.0 / (3.0 * m)) * ln_term
}

/// Adaptive-window drift estimator state.
///
/// Generic over the scalar type; see the crate root for `f64` aliases.
#[derive(Debug, Clone)]
pub struct AdwinState<R = f64> {
    delta: f64,
    max_buckets_per_level: usize,
    /// `levels[l]` holds buckets of 2^l samples, oldest first; every bucket on
    /// level `l + 1` is older than every bucket on level `l`.
    levels: Vec<VecDeque<Bucket<R>>>,
    total_count: u64,
    total_sum: R,
    total_sum_sq: R,
}

impl<R: Real> AdwinState<R> {
    /// Creates an estimator with confidence parameter `delta` in `(0, 1)`.
    pub fn new(delta: f64) -> Result<Self> {
        Self::with_max_buckets(delta, DEFAULT_MAX_BUCKETS)
    }

    /// Creates an estimator with an explicit per-level bucket cap (>= 2).
    pub fn with_max_buckets(delta: f64, max_buckets_per_level: usize) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::input(format!("delta must be in (0, 1), got {delta}")));
        }
        if max_buckets_per_level < 2 {
            return Err(Error::input("max buckets per level must be >= 2"));
        }
        Ok(AdwinState {
            delta,
            max_buckets_per_level,
            levels: Vec::new(),
            total_count: 0,
            total_sum: R::zero(),
            total_sum_sq: R::zero(),
        })
    }

    /// Confidence parameter.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Number of samples in the current window.
    pub fn window_len(&self) -> u64 {
        self.total_count
    }

    /// Variance of the current window (population form, clamped at zero).
    pub fn variance(&self) -> Option<R> {
        if self.total_count == 0 {
            return None;
        }
        let n = R::from_u64(self.total_count).expect("count fits scalar");
        let mean = self.total_sum / n;
        Some((self.total_sum_sq / n - mean * mean).max(R::zero()))
    }

    /// Size in samples of the largest bucket currently held.
    pub fn largest_bucket_len(&self) -> u64 {
        self.levels
            .iter()
            .enumerate()
            .rev()
            .find(|(_, level)| !level.is_empty())
            .map(|(l, _)| 1u64 << l)
            .unwrap_or(0)
    }

    fn append(&mut self, x: R) {
        if self.levels.is_empty() {
            self.levels.push(VecDeque::new());
        }
        self.levels[0].push_back(Bucket::single(x));
        self.total_count += 1;
        self.total_sum += x;
        self.total_sum_sq += x * x;
        self.compress();
    }

    /// Merges the two oldest buckets of any over-full level one level up.
    fn compress(&mut self) {
        let mut l = 0;
        while l < self.levels.len() {
            while self.levels[l].len() > self.max_buckets_per_level {
                let a = self.levels[l].pop_front().expect("len checked");
                let b = self.levels[l].pop_front().expect("len checked");
                let merged = Bucket::merge(a, b);
                if l + 1 == self.levels.len() {
                    self.levels.push(VecDeque::new());
                }
                self.levels[l + 1].push_back(merged);
            }
            l += 1;
        }
    }

    /// Buckets oldest to newest: high levels first, front to back inside one.
    fn buckets_oldest_first(&self) -> impl Iterator<Item = &Bucket<R>> {
        self.levels.iter().rev().flat_map(|level| level.iter())
    }

    /// Scans all cuts; returns the oldest-first bucket count to drop, if any
    /// boundary's mean difference exceeds its threshold.
    fn find_cut(&self) -> Option<usize> {
        if self.total_count < 2 {
            return None;
        }
        let var = self.variance().expect("non-empty window").as_f64();
        let total = self.total_count;
        let total_sum = self.total_sum;
        let delta_prime = self.delta / total as f64;
        let ln_term = (2.0 / delta_prime).ln();
        let mut hist_count = 0u64;
        let mut hist_sum = R::zero();
        let n_buckets = self.buckets_oldest_first().count();
        for (idx, bucket) in self.buckets_oldest_first().enumerate() {
            hist_count += bucket.count;
            hist_sum += bucket.sum;
            if idx + 1 == n_buckets {
                break; // no boundary after the newest bucket
            }
            let new_count = total - hist_count;
            let mu_hist = hist_sum.as_f64() / hist_count as f64;
            let mu_new = (total_sum - hist_sum).as_f64() / new_count as f64;
            let phi = (mu_hist - mu_new).abs();
            let m = 1.0 / (1.0 / hist_count as f64 + 1.0 / new_count as f64);
            let eps = ((2.0 / m) * var * ln_term).sqrt() + (2.0 / (3.0 * m)) * ln_term;
            if phi > eps {
                return Some(idx + 1);
            }
        }
        None
    }

    /// Drops the `n_buckets` oldest buckets and fixes up the totals.
    fn drop_oldest(&mut self, n_buckets: usize) {
        let mut remaining = n_buckets;
        for level in self.levels.iter_mut().rev() {
            while remaining > 0 {
                match level.pop_front() {
                    Some(b) => {
                        self.total_count -= b.count;
                        self.total_sum -= b.sum;
                        self.total_sum_sq -= b.sum_sq;
                        remaining -= 1;
                    }
                    None => break,
                }
            }
        }
    }
}

impl<R: Real> Estimator<R> for AdwinState<R> {
    /// Appends `x` and tests every bucket boundary, repeatedly discarding the
    /// historical side while any cut exceeds its threshold. Returns a firing
    /// verdict when at least one drop happened.
    fn insert(&mut self, x: R) -> Result<Verdict> {
        if !x.is_finite() {
            return Err(Error::input("non-finite sample"));
        }
        self.append(x);
        let mut drifted = false;
        while let Some(cut) = self.find_cut() {
            self.drop_oldest(cut);
            drifted = true;
        }
        if drifted {
            Ok(Verdict::drift(None))
        } else {
            Ok(Verdict::none())
        }
    }

    fn mean(&self) -> Option<R> {
        if self.total_count == 0 {
            return None;
        }
        Some(self.total_sum / R::from_u64(self.total_count).expect("count fits scalar"))
    }

    fn std_dev(&self) -> Option<R> {
        self.variance().map(Float::sqrt)
    }

    fn len(&self) -> usize {
        self.total_count as usize
    }
}
