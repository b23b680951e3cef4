//! Baseline statistics and two-stage hyperparameter calibration.
//!
//! A short trusted prefix of the stream establishes the "normal" behaviour
//! (mean, variance). A coarse grid search then a fine re-sweep around the
//! coarse winner select per-estimator hyperparameters; every candidate is
//! scored by replaying the baseline prefix through a fresh estimator and
//! requiring zero detections. Preference among zero-alarm candidates is
//! fixed: the adaptive-windowing estimator takes the largest confidence
//! parameter, the cumulative test the lexicographically smallest
//! `(lambda, beta)`, and the sliding KS test the largest significance level
//! then the smallest recent-window length.

use serde::{Deserialize, Serialize};

use crate::detector::{DetectorParams, WindowModel};
use crate::error::{Error, Result};
use crate::estimators::{AdwinState, Estimator, KswinState, PhtState};

/// Smallest baseline prefix accepted.
pub const MIN_BASELINE_LEN: usize = 30;

/// Default baseline prefix length.
pub const DEFAULT_BASELINE_LEN: usize = 100;

/// Standard-deviation floor substituted when a constant baseline would
/// otherwise produce a degenerate detector configuration.
pub const CONSTANT_SIGMA_FLOOR: f64 = 1e-6;

/// Mean and dispersion of the drift-free calibration prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineStats {
    /// Baseline mean.
    pub mu_prime: f64,
    /// Unbiased sample variance.
    pub sigma2: f64,
    /// Standard deviation (`sqrt(sigma2)`).
    pub sigma: f64,
    /// Prefix length the statistics were computed from.
    pub b: usize,
    /// Retained prefix values (empty for published fixture profiles).
    #[serde(default)]
    pub samples: Vec<f64>,
    /// True when the prefix had zero variance.
    #[serde(default)]
    pub constant: bool,
}

impl BaselineStats {
    /// Computes statistics from a prefix of at least [`MIN_BASELINE_LEN`]
    /// finite values; the prefix is retained for replay.
    pub fn collect(prefix: &[f64]) -> Result<Self> {
        if prefix.len() < MIN_BASELINE_LEN {
            return Err(Error::input(format!(
                "baseline prefix needs at least {MIN_BASELINE_LEN} samples, got {}",
                prefix.len()
            )));
        }
        if let Some(bad) = prefix.iter().find(|v| !v.is_finite()) {
            return Err(Error::input(format!("non-finite value {bad} in baseline prefix")));
        }
        let n = prefix.len() as f64;
        let mean = prefix.iter().sum::<f64>() / n;
        let ss = prefix.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
        let sigma2 = ss / (n - 1.0);
        Ok(BaselineStats {
            mu_prime: mean,
            sigma2,
            sigma: sigma2.sqrt(),
            b: prefix.len(),
            samples: prefix.to_vec(),
            constant: sigma2 == 0.0,
        })
    }

    /// Builds statistics from published values, without a retained prefix.
    pub fn published(mu_prime: f64, sigma2: f64, b: usize) -> Self {
        BaselineStats {
            mu_prime,
            sigma2,
            sigma: sigma2.sqrt(),
            b,
            samples: Vec::new(),
            constant: sigma2 == 0.0,
        }
    }
}

/// Coarse search grids, refinement resolution, and replay budget.
///
/// Stage 2 re-sweeps each hyperparameter between its coarse winner's
/// neighboring grid points (one coarse step per side; only inward at grid
/// edges) at `refine_factor` times the coarse resolution — linearly for the
/// confidence parameter and the recent-window length, geometrically for the
/// log-spaced grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Confidence-parameter candidates, ascending, each in (0, 1).
    pub delta_grid: Vec<f64>,
    /// Cumulative-test magnitude candidates, ascending, positive.
    pub beta_grid: Vec<f64>,
    /// Cumulative-test threshold candidates, ascending, positive.
    pub lambda_grid: Vec<f64>,
    /// KS significance-level candidates, ascending, each in (0, 1).
    pub alpha_grid: Vec<f64>,
    /// KS recent-window length candidates, ascending.
    pub l_r_grid: Vec<usize>,
    /// Fixed KS subsample size.
    pub l_omega: usize,
    /// Fine-step divisor for stage 2.
    pub refine_factor: usize,
    /// Number of seeded subsample draws per KS zero-alarm check.
    pub kswin_check_seeds: u64,
    /// Total replay budget across both stages.
    pub budget: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        let beta_grid = geometric_steps(0.01, 5.0, 12);
        GridSpec {
            delta_grid: (1..=19).map(|k| k as f64 * 0.05).collect(),
            beta_grid,
            lambda_grid: vec![
                10.0, 20.0, 50.0, 100.0, 200.0, 480.0, 1e3, 2e3, 5e3, 1e4, 3e4, 1e5,
            ],
            alpha_grid: vec![1e-5, 1e-4, 1e-3, 1e-2, 1e-1],
            l_r_grid: vec![100, 200, 300, 500],
            l_omega: 30,
            refine_factor: 10,
            kswin_check_seeds: 10,
            budget: 5000,
        }
    }
}

impl GridSpec {
    /// Checks grid ordering and domains.
    pub fn validate(&self) -> Result<()> {
        fn sorted_positive(name: &str, grid: &[f64], below_one: bool) -> Result<()> {
            if grid.is_empty() {
                return Err(Error::input(format!("{name} grid is empty")));
            }
            for w in grid.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::input(format!("{name} grid must be strictly ascending")));
                }
            }
            for &v in grid {
                if !(v > 0.0) || !v.is_finite() || (below_one && v >= 1.0) {
                    return Err(Error::input(format!("{name} grid value {v} out of domain")));
                }
            }
            Ok(())
        }
        sorted_positive("delta", &self.delta_grid, true)?;
        sorted_positive("beta", &self.beta_grid, false)?;
        sorted_positive("lambda", &self.lambda_grid, false)?;
        sorted_positive("alpha", &self.alpha_grid, true)?;
        if self.l_r_grid.is_empty() || self.l_r_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::input("recent-window grid must be non-empty and ascending"));
        }
        if self.l_r_grid.iter().any(|&l| l < 2) || self.l_omega < 2 {
            return Err(Error::input("KS window sizes must be at least 2"));
        }
        if self.refine_factor < 2 {
            return Err(Error::input("refine factor must be at least 2"));
        }
        if self.kswin_check_seeds == 0 || self.budget == 0 {
            return Err(Error::input("seed count and budget must be positive"));
        }
        Ok(())
    }
}

/// Calibrated hyperparameters for one stream, with its baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationProfile {
    /// Sensor kind this profile belongs to (free-form label).
    pub sensor_type: String,
    /// Adaptive-windowing confidence parameter.
    pub delta: f64,
    /// Cumulative-test magnitude parameter.
    pub beta: f64,
    /// Cumulative-test firing threshold.
    pub lambda: f64,
    /// KS significance level.
    pub alpha: f64,
    /// KS recent-window length.
    pub l_r: usize,
    /// KS subsample size.
    pub l_omega: usize,
    /// Baseline statistics.
    pub baseline: BaselineStats,
    /// Voting-window model for this sensor.
    pub window_model: WindowModel,
    /// True when no zero-false-alarm grid point existed for some estimator;
    /// the least-false-alarm point was kept instead.
    #[serde(default)]
    pub degraded: bool,
}

impl CalibrationProfile {
    /// Published temperature profile and baseline.
    pub fn temperature_fixture() -> Self {
        CalibrationProfile {
            sensor_type: "temperature".into(),
            delta: 0.44,
            beta: 0.095,
            lambda: 480.0,
            alpha: 0.001,
            l_r: 300,
            l_omega: 30,
            baseline: BaselineStats::published(20.32, 1.178, DEFAULT_BASELINE_LEN),
            window_model: WindowModel::temperature(),
            degraded: false,
        }
    }

    /// Published humidity profile and baseline.
    pub fn humidity_fixture() -> Self {
        CalibrationProfile {
            sensor_type: "humidity".into(),
            delta: 0.44,
            beta: 0.095,
            lambda: 560.0,
            alpha: 0.001,
            l_r: 300,
            l_omega: 30,
            baseline: BaselineStats::published(30.14, 0.966, DEFAULT_BASELINE_LEN),
            window_model: WindowModel::humidity(),
            degraded: false,
        }
    }

    /// Published pressure profile and baseline.
    pub fn pressure_fixture() -> Self {
        CalibrationProfile {
            sensor_type: "pressure".into(),
            delta: 0.34,
            beta: 2.9,
            lambda: 29000.0,
            alpha: 0.0001,
            l_r: 300,
            l_omega: 30,
            baseline: BaselineStats::published(102.4, 224.52, DEFAULT_BASELINE_LEN),
            window_model: WindowModel::pressure(),
            degraded: false,
        }
    }

    /// Bundled fixture by sensor name.
    pub fn fixture(sensor_type: &str) -> Option<Self> {
        match sensor_type {
            "temperature" => Some(Self::temperature_fixture()),
            "humidity" => Some(Self::humidity_fixture()),
            "pressure" => Some(Self::pressure_fixture()),
            _ => None,
        }
    }

    /// Detector parameters for this profile. A constant baseline gets a
    /// nominal standard-deviation floor so downstream tests stay defined.
    pub fn detector_params(&self, kswin_seed: u64) -> DetectorParams {
        DetectorParams {
            delta: self.delta,
            beta: self.beta,
            lambda: self.lambda,
            alpha: self.alpha,
            l_omega: self.l_omega,
            l_r: self.l_r,
            kswin_seed,
            baseline_mean: self.baseline.mu_prime,
            baseline_sd: self.baseline.sigma.max(CONSTANT_SIGMA_FLOOR),
            window_model: self.window_model.clone(),
            trend_len: crate::detector::DEFAULT_TREND_LEN,
            upsilon_scale: crate::detector::DEFAULT_UPSILON_SCALE,
            initial_voting_len: None,
        }
    }

    /// Serializes to a flat `key = value` text document.
    pub fn to_flat_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        put("sensor_type", self.sensor_type.clone());
        put("delta", format!("{}", self.delta));
        put("beta", format!("{}", self.beta));
        put("lambda", format!("{}", self.lambda));
        put("alpha", format!("{}", self.alpha));
        put("l_r", format!("{}", self.l_r));
        put("l_omega", format!("{}", self.l_omega));
        put("degraded", format!("{}", self.degraded));
        put("baseline.mu_prime", format!("{}", self.baseline.mu_prime));
        put("baseline.sigma2", format!("{}", self.baseline.sigma2));
        put("baseline.sigma", format!("{}", self.baseline.sigma));
        put("baseline.b", format!("{}", self.baseline.b));
        put("baseline.constant", format!("{}", self.baseline.constant));
        let joined: Vec<String> =
            self.baseline.samples.iter().map(|v| format!("{v}")).collect();
        put("baseline.samples", joined.join(","));
        put("window_model.zeta", format!("{}", self.window_model.zeta));
        put("window_model.eta", format!("{}", self.window_model.eta));
        put("window_model.gamma", format!("{}", self.window_model.gamma));
        put("window_model.l_min", format!("{}", self.window_model.l_min));
        put("window_model.l_max", format!("{}", self.window_model.l_max));
        out
    }

    /// Parses the flat `key = value` document written by
    /// [`CalibrationProfile::to_flat_text`]. Blank lines and `#` comments are
    /// ignored.
    pub fn from_flat_text(text: &str) -> Result<Self> {
        use std::collections::HashMap;
        let mut kv = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(format!("line {}: missing '='", lineno + 1)))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        fn take<'m>(kv: &'m HashMap<String, String>, key: &str) -> Result<&'m str> {
            kv.get(key)
                .map(String::as_str)
                .ok_or_else(|| Error::format(format!("missing key '{key}'")))
        }
        fn num<T: std::str::FromStr>(kv: &HashMap<String, String>, key: &str) -> Result<T> {
            take(kv, key)?
                .parse()
                .map_err(|_| Error::format(format!("key '{key}' has an unparsable value")))
        }
        let samples_raw = take(&kv, "baseline.samples")?;
        let samples = if samples_raw.is_empty() {
            Vec::new()
        } else {
            samples_raw
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::format("unparsable baseline sample"))
                })
                .collect::<Result<Vec<_>>>()?
        };
        Ok(CalibrationProfile {
            sensor_type: take(&kv, "sensor_type")?.to_string(),
            delta: num(&kv, "delta")?,
            beta: num(&kv, "beta")?,
            lambda: num(&kv, "lambda")?,
            alpha: num(&kv, "alpha")?,
            l_r: num(&kv, "l_r")?,
            l_omega: num(&kv, "l_omega")?,
            degraded: num(&kv, "degraded")?,
            baseline: BaselineStats {
                mu_prime: num(&kv, "baseline.mu_prime")?,
                sigma2: num(&kv, "baseline.sigma2")?,
                sigma: num(&kv, "baseline.sigma")?,
                b: num(&kv, "baseline.b")?,
                constant: num(&kv, "baseline.constant")?,
                samples,
            },
            window_model: WindowModel::new(
                num(&kv, "window_model.zeta")?,
                num(&kv, "window_model.eta")?,
                num(&kv, "window_model.gamma")?,
                num(&kv, "window_model.l_min")?,
                num(&kv, "window_model.l_max")?,
            )?,
        })
    }
}

/// `n` evenly spaced points from `lo` to `hi` inclusive, ascending; the
/// endpoints are carried over exactly.
fn linear_steps(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || lo >= hi {
        return vec![lo];
    }
    (0..n)
        .map(|k| match k {
            0 => lo,
            k if k == n - 1 => hi,
            k => lo + (hi - lo) * k as f64 / (n - 1) as f64,
        })
        .collect()
}

/// `n` geometrically spaced points from `lo` to `hi` inclusive, ascending;
/// the endpoints are carried over exactly.
fn geometric_steps(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || lo >= hi {
        return vec![lo];
    }
    let (ln_lo, ln_hi) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| match k {
            0 => lo,
            k if k == n - 1 => hi,
            k => (ln_lo + (ln_hi - ln_lo) * k as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

/// Inserts `v` into the ascending list unless an exactly equal value exists,
/// so a refinement sweep always revisits the coarse winner.
fn insert_exact(list: &mut Vec<f64>, v: f64) {
    if !list.iter().any(|&x| x == v) {
        list.push(v);
        list.sort_by(|a, b| a.partial_cmp(b).expect("finite grid values"));
    }
}

/// Neighboring grid values around index `i` (the value itself at the edges).
fn neighbors<T: Copy>(grid: &[T], i: usize) -> (T, T) {
    let lo = if i == 0 { grid[i] } else { grid[i - 1] };
    let hi = if i + 1 == grid.len() { grid[i] } else { grid[i + 1] };
    (lo, hi)
}

/// Replay-budget bookkeeping shared by both stages.
struct Budget {
    left: usize,
}

impl Budget {
    fn take(&mut self, n: usize) -> bool {
        if self.left >= n {
            self.left -= n;
            true
        } else {
            false
        }
    }
}

fn adwin_alarms(delta: f64, samples: &[f64]) -> usize {
    let mut est = AdwinState::<f64>::new(delta).expect("grid-validated delta");
    samples.iter().filter(|&&v| est.insert(v).expect("finite").drifted).count()
}

fn pht_alarms(beta: f64, lambda: f64, samples: &[f64]) -> usize {
    let mut est = PhtState::<f64>::new(beta, lambda).expect("grid-validated params");
    samples.iter().filter(|&&v| est.insert(v).expect("finite").drifted).count()
}

fn kswin_alarms_one_seed(
    alpha: f64,
    l_omega: usize,
    l_r: usize,
    seed: u64,
    samples: &[f64],
) -> usize {
    let mut est =
        KswinState::<f64>::new(alpha, l_omega, l_r, seed).expect("grid-validated params");
    samples.iter().filter(|&&v| est.insert(v).expect("finite").drifted).count()
}

/// Searches candidates in preference order; returns the first zero-alarm
/// candidate, or the least-alarm one with `degraded = true`.
///
/// `candidates` must be non-empty and ordered most-preferred first; `alarms`
/// runs one candidate and reports its false-alarm count. Each evaluation
/// consumes `cost` replays; once the budget runs out the best candidate so
/// far (or, failing that, the most preferred) is kept as degraded.
fn search<T: Copy>(
    candidates: &[T],
    budget: &mut Budget,
    cost: usize,
    mut alarms: impl FnMut(T) -> usize,
) -> (T, bool) {
    let mut best: Option<(T, usize)> = None;
    for &cand in candidates {
        if !budget.take(cost) {
            break;
        }
        let count = alarms(cand);
        if count == 0 {
            return (cand, false);
        }
        if best.map_or(true, |(_, c)| count < c) {
            best = Some((cand, count));
        }
    }
    match best {
        Some((cand, _)) => (cand, true),
        None => (candidates[0], true),
    }
}

/// Two-stage grid calibration against the retained baseline prefix.
///
/// Deterministic for a given prefix and grid: candidate order is fixed and
/// the KS subsample checks use seeds `0..kswin_check_seeds`. When the replay
/// budget runs out mid-search the best candidate evaluated so far is kept.
pub fn calibrate(
    sensor_type: impl Into<String>,
    baseline: &BaselineStats,
    grid: &GridSpec,
    window_model: WindowModel,
) -> Result<CalibrationProfile> {
    grid.validate()?;
    if baseline.samples.len() != baseline.b || baseline.b < MIN_BASELINE_LEN {
        return Err(Error::input("baseline must retain its prefix for calibration replays"));
    }
    let prefix = &baseline.samples;
    let mut budget = Budget { left: grid.budget };
    let mut degraded = false;

    // Adaptive-windowing confidence: largest zero-alarm value.
    let fine_n = 2 * grid.refine_factor + 1;
    let (delta, d1) = {
        let desc: Vec<f64> = grid.delta_grid.iter().copied().rev().collect();
        let (coarse, deg) = search(&desc, &mut budget, 1, |d| adwin_alarms(d, prefix));
        if deg {
            (coarse, true)
        } else {
            let i = grid.delta_grid.iter().position(|&d| d == coarse).expect("from grid");
            let (lo, hi) = neighbors(&grid.delta_grid, i);
            let mut fine = linear_steps(lo.max(1e-6), hi.min(1.0 - 1e-6), fine_n);
            insert_exact(&mut fine, coarse);
            fine.reverse();
            match search(&fine, &mut budget, 1, |d| adwin_alarms(d, prefix)) {
                (d, false) => (d, false),
                _ => (coarse, false),
            }
        }
    };
    degraded |= d1;

    // Cumulative test: lexicographically smallest zero-alarm (lambda, beta).
    let pht_pairs = |lambdas: &[f64], betas: &[f64]| -> Vec<(f64, f64)> {
        lambdas.iter().flat_map(|&l| betas.iter().map(move |&b| (l, b))).collect()
    };
    let (pht, d2) = {
        let coarse_pairs = pht_pairs(&grid.lambda_grid, &grid.beta_grid);
        let (coarse, deg) =
            search(&coarse_pairs, &mut budget, 1, |(l, b)| pht_alarms(b, l, prefix));
        if deg {
            (coarse, true)
        } else {
            let li = grid.lambda_grid.iter().position(|&l| l == coarse.0).expect("from grid");
            let bi = grid.beta_grid.iter().position(|&b| b == coarse.1).expect("from grid");
            let (llo, lhi) = neighbors(&grid.lambda_grid, li);
            let (blo, bhi) = neighbors(&grid.beta_grid, bi);
            let mut fine_lambdas = geometric_steps(llo, lhi, fine_n);
            insert_exact(&mut fine_lambdas, coarse.0);
            let mut fine_betas = geometric_steps(blo, bhi, fine_n);
            insert_exact(&mut fine_betas, coarse.1);
            let fine_pairs = pht_pairs(&fine_lambdas, &fine_betas);
            match search(&fine_pairs, &mut budget, 1, |(l, b)| pht_alarms(b, l, prefix)) {
                (p, false) => (p, false),
                _ => (coarse, false),
            }
        }
    };
    let (lambda, beta) = pht;
    degraded |= d2;

    // Sliding KS test: largest zero-alarm alpha, then smallest recent window,
    // required across all subsample seeds.
    let seeds = grid.kswin_check_seeds;
    let ks_alarms = |alpha: f64, l_r: usize, prefix: &[f64]| -> usize {
        (0..seeds).map(|s| kswin_alarms_one_seed(alpha, grid.l_omega, l_r, s, prefix)).sum()
    };
    let ks_pairs = |alphas_desc: &[f64], l_rs: &[usize]| -> Vec<(f64, usize)> {
        alphas_desc.iter().flat_map(|&a| l_rs.iter().map(move |&l| (a, l))).collect()
    };
    let (ks, d3) = {
        let alphas_desc: Vec<f64> = grid.alpha_grid.iter().copied().rev().collect();
        let coarse_pairs = ks_pairs(&alphas_desc, &grid.l_r_grid);
        let (coarse, deg) =
            search(&coarse_pairs, &mut budget, seeds as usize, |(a, l)| ks_alarms(a, l, prefix));
        if deg {
            (coarse, true)
        } else {
            let ai = grid.alpha_grid.iter().position(|&a| a == coarse.0).expect("from grid");
            let li = grid.l_r_grid.iter().position(|&l| l == coarse.1).expect("from grid");
            let (alo, ahi) = neighbors(&grid.alpha_grid, ai);
            let mut fine_alphas = geometric_steps(alo, ahi.min(1.0 - 1e-9), fine_n);
            insert_exact(&mut fine_alphas, coarse.0);
            fine_alphas.reverse();
            let (llo, lhi) = neighbors(&grid.l_r_grid, li);
            let step = ((lhi - llo) / grid.refine_factor).max(1);
            let mut fine_l: Vec<usize> = (llo..=lhi).step_by(step).collect();
            if !fine_l.contains(&coarse.1) {
                fine_l.push(coarse.1);
                fine_l.sort_unstable();
            }
            let fine_pairs = ks_pairs(&fine_alphas, &fine_l);
            match search(&fine_pairs, &mut budget, seeds as usize, |(a, l)| {
                ks_alarms(a, l, prefix)
            }) {
                (p, false) => (p, false),
                _ => (coarse, false),
            }
        }
    };
    let (alpha, l_r) = ks;
    degraded |= d3;

    Ok(CalibrationProfile {
        sensor_type: sensor_type.into(),
        delta,
        beta,
        lambda,
        alpha,
        l_r,
        l_omega: grid.l_omega,
        baseline: baseline.clone(),
        window_model,
        degraded,
    })
}
