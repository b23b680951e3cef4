//! Sliding-window Kolmogorov-Smirnov drift estimator.
//!
//! A bounded FIFO holds the last `l_omega + l_r` values. Once full, the most
//! recent `l_r` values form the recent sub-window and a seeded uniform
//! subsample of size `l_omega` from the remaining (older) values forms the
//! statistical sub-window. Drift fires when the exact two-sample KS distance
//! between them exceeds `sqrt(-ln(alpha) / l_r)`; the window then resets to
//! the most recent `l_r` values.
//!
//! Both sub-windows are kept incrementally sorted so the per-sample test is a
//! linear merge walk rather than a fresh sort.

use std::collections::VecDeque;

use rand::rngs::StdRng;
use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::estimators::ks::ks_two_sample_distance_sorted;
use crate::estimators::{Estimator, Verdict};
use crate::real::Real;

/// Sliding-window KS estimator state.
#[derive(Debug, Clone)]
pub struct KswinState<R = f64> {
    alpha: f64,
    l_omega: usize,
    l_r: usize,
    rng_seed: u64,
    rng: StdRng,
    threshold: R,
    /// Chronological window, oldest first; capacity `l_omega + l_r`.
    window: VecDeque<R>,
    /// Ascending copy of the older region (all but the last `l_r` values).
    sorted_old: Vec<R>,
    /// Ascending copy of the most recent `min(len, l_r)` values.
    sorted_recent: Vec<R>,
    /// Scratch buffer for subsampled older values.
    scratch: Vec<R>,
}

fn sorted_insert<R: Real>(v: &mut Vec<R>, x: R) {
    let idx = v.partition_point(|&y| y < x);
    v.insert(idx, x);
}

fn sorted_remove<R: Real>(v: &mut Vec<R>, x: R) {
    let idx = v.partition_point(|&y| y < x);
    debug_assert!(idx < v.len() && v[idx] == x, "value must be present");
    v.remove(idx);
}

impl<R: Real> KswinState<R> {
    /// Creates an estimator with significance `alpha` in `(0, 1)`, statistical
    /// sub-window `l_omega >= 2`, recent sub-window `l_r >= l_omega`, and a
    /// subsample seed.
    pub fn new(alpha: f64, l_omega: usize, l_r: usize, rng_seed: u64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::input(format!("alpha must be in (0, 1), got {alpha}")));
        }
        if l_omega < 2 {
            return Err(Error::input("l_omega must be >= 2"));
        }
        if l_r < l_omega {
            return Err(Error::input("l_r must be >= l_omega"));
        }
        Ok(KswinState {
            alpha,
            l_omega,
            l_r,
            rng_seed,
            rng: StdRng::seed_from_u64(rng_seed),
            threshold: R::from_f64_lossy((-alpha.ln() / l_r as f64).sqrt()),
            window: VecDeque::with_capacity(l_omega + l_r),
            sorted_old: Vec::with_capacity(l_omega),
            sorted_recent: Vec::with_capacity(l_r),
            scratch: Vec::with_capacity(l_omega),
        })
    }

    /// Significance level.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Statistical sub-window length.
    pub fn l_omega(&self) -> usize {
        self.l_omega
    }

    /// Recent sub-window length.
    pub fn l_r(&self) -> usize {
        self.l_r
    }

    /// Seed of the subsample generator.
    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    /// Detection threshold `sqrt(-ln(alpha) / l_r)`.
    pub fn threshold(&self) -> R {
        self.threshold
    }

    fn capacity(&self) -> usize {
        self.l_omega + self.l_r
    }

    /// KS distance between the older subsample and the recent sub-window.
    fn test_distance(&mut self) -> R {
        debug_assert_eq!(self.window.len(), self.capacity());
        if self.sorted_old.len() == self.l_omega {
            // The older region is exactly the subsample size: every subsample
            // equals the whole region, so no draw is needed.
            ks_two_sample_distance_sorted(&self.sorted_old, &self.sorted_recent)
        } else {
            let picked =
                rand::seq::index::sample(&mut self.rng, self.sorted_old.len(), self.l_omega);
            self.scratch.clear();
            self.scratch.extend(picked.iter().map(|i| self.sorted_old[i]));
            self.scratch.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
            ks_two_sample_distance_sorted(&self.scratch, &self.sorted_recent)
        }
    }

    /// Drops everything but the most recent `l_r` values.
    fn reset_to_recent(&mut self) {
        while self.window.len() > self.l_r {
            let evicted = self.window.pop_front().expect("len checked");
            sorted_remove(&mut self.sorted_old, evicted);
        }
        debug_assert!(self.sorted_old.is_empty());
    }
}

impl<R: Real> Estimator<R> for KswinState<R> {
    /// Appends `x`, evicting the oldest value when full, and runs the KS test
    /// once the window holds `l_omega + l_r` values.
    fn insert(&mut self, x: R) -> Result<Verdict> {
        if !x.is_finite() {
            return Err(Error::input("non-finite sample"));
        }
        if self.window.len() == self.capacity() {
            let evicted = self.window.pop_front().expect("window full");
            sorted_remove(&mut self.sorted_old, evicted);
        }
        self.window.push_back(x);
        sorted_insert(&mut self.sorted_recent, x);
        if self.window.len() > self.l_r {
            // The (l_r + 1)-th newest value migrates from recent to old.
            let migrating = self.window[self.window.len() - 1 - self.l_r];
            sorted_remove(&mut self.sorted_recent, migrating);
            sorted_insert(&mut self.sorted_old, migrating);
        }
        if self.window.len() == self.capacity() {
            let dist = self.test_distance();
            if dist > self.threshold {
                self.reset_to_recent();
                return Ok(Verdict::drift(None));
            }
        }
        Ok(Verdict::none())
    }

    fn mean(&self) -> Option<R> {
        if self.window.is_empty() {
            return None;
        }
        let n = R::from_usize(self.window.len()).expect("len fits scalar");
        Some(self.window.iter().copied().sum::<R>() / n)
    }

    fn std_dev(&self) -> Option<R> {
        let mean = self.mean()?;
        let n = R::from_usize(self.window.len()).expect("len fits scalar");
        let ss = self.window.iter().map(|&x| (x - mean) * (x - mean)).sum::<R>();
        Some((ss / n).sqrt())
    }

    fn len(&self) -> usize {
        self.window.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_bad_parameters() {
        assert!(KswinState::<f64>::new(0.0, 30, 300, 1).is_err());
        assert!(KswinState::<f64>::new(1.0, 30, 300, 1).is_err());
        assert!(KswinState::<f64>::new(0.001, 1, 300, 1).is_err());
        assert!(KswinState::<f64>::new(0.001, 30, 20, 1).is_err());
    }

    #[test]
    fn threshold_matches_scalar_check() {
        let k = KswinState::<f64>::new(0.001, 30, 300, 1).unwrap();
        assert_relative_eq!(k.threshold(), 0.15174, epsilon = 5e-6);
    }

    #[test]
    fn constant_stream_never_fires() {
        let mut k = KswinState::<f64>::new(0.001, 30, 300, 42).unwrap();
        for _ in 0..3000 {
            assert!(!k.insert(1.25).unwrap().drifted);
        }
        assert_eq!(k.len(), 330);
    }

    #[test]
    fn separated_sub_windows_fire() {
        // 30 old values near zero, then 300 recent values near five: the test
        // fires on the first full window for any alpha <= 0.01.
        for &alpha in &[0.01, 0.001, 0.0001] {
            let mut k = KswinState::<f64>::new(alpha, 30, 300, 7).unwrap();
            let mut fired = false;
            for i in 0..330 {
                let x = if i < 30 { 0.0 + (i as f64) * 1e-6 } else { 5.0 + (i as f64) * 1e-6 };
                fired |= k.insert(x).unwrap().drifted;
            }
            assert!(fired, "alpha {alpha} must fire on separated sub-windows");
        }
    }

    #[test]
    fn reset_keeps_most_recent_values() {
        let mut k = KswinState::<f64>::new(0.01, 30, 300, 7).unwrap();
        let mut fired_at = None;
        for i in 0..330 {
            let x = if i < 30 { 0.0 } else { 5.0 };
            if k.insert(x).unwrap().drifted {
                fired_at = Some(i);
                break;
            }
        }
        assert_eq!(fired_at, Some(329));
        assert_eq!(k.len(), 300);
        assert_eq!(k.mean(), Some(5.0));
    }

    #[test]
    fn detection_indices_are_seed_deterministic() {
        use rand::rngs::StdRng;
        use rand::SeedableRng;
        let stream: Vec<f64> = {
            let mut rng = StdRng::seed_from_u64(99);
            (0..4000)
                .map(|i| {
                    let mu = if (i / 700) % 2 == 0 { 0.0 } else { 1.5 };
                    crate::real::Real::sample_normal(&mut rng, mu, 1.0)
                })
                .collect()
        };
        let run = |seed: u64| -> Vec<usize> {
            let mut k = KswinState::<f64>::new(0.001, 30, 300, seed).unwrap();
            stream
                .iter()
                .enumerate()
                .filter_map(|(i, &x)| k.insert(x).unwrap().drifted.then_some(i))
                .collect()
        };
        assert_eq!(run(5), run(5));
        assert!(!run(5).is_empty());
    }

    #[test]
    fn sorted_views_stay_consistent_with_window() {
        use rand::rngs::StdRng;
        use rand::SeedableRng;
        let mut rng = StdRng::seed_from_u64(3);
        let mut k = KswinState::<f64>::new(0.001, 5, 12, 0).unwrap();
        for _ in 0..500 {
            let x: f64 = crate::real::Real::sample_normal(&mut rng, 0.0, 1.0);
            k.insert(x).unwrap();
            let len = k.window.len();
            let recent_n = len.min(k.l_r);
            let mut recent: Vec<f64> = k.window.iter().skip(len - recent_n).copied().collect();
            recent.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(recent, k.sorted_recent);
            let mut old: Vec<f64> = k.window.iter().take(len - recent_n).copied().collect();
            old.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(old, k.sorted_old);
        }
    }

    #[test]
    fn non_finite_sample_is_rejected() {
        let mut k = KswinState::<f64>::new(0.001, 30, 300, 1).unwrap();
        assert!(k.insert(f64::NAN).is_err());
        assert_eq!(k.len(), 0);
    }
}
