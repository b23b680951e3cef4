//! Mapping ensemble detections onto per-sample drift predictions.
//!
//! The ensemble's majority vote marks a trailing window after each
//! estimator fire, which by itself cannot tell "the stream drifted away
//! from baseline" apart from "the stream returned to baseline" — both are
//! changes. The offline evaluation therefore runs two passes:
//!
//! 1. Ingest the stream, recording the per-sample vote and every fire of
//!    the adaptive-windowing estimator together with its kept-window length.
//! 2. Cut the stream into segments at those fires. The kept window after a
//!    cut spans the post-change data, so `fire_index - kept + 1` recovers
//!    the change point itself rather than the detection point. Because the
//!    online estimator can miss weak boundaries (two adjacent mild offsets
//!    average out into one flat-looking stretch), each segment is further
//!    split recursively wherever the strongest internal left/right mean
//!    contrast is significant. The calibration mean is then re-estimated
//!    from the segments that sit near it — the densest cluster of
//!    near-baseline segment means, weighted by length — which sharpens the
//!    reference far beyond what the short calibration prefix alone allows.
//!    A segment counts as drifted when its mean deviates from that refined
//!    baseline by more than `kappa` standard errors (accounting for both
//!    the reference and segment sample counts).
//!
//! A sample is *covered* when an emitted event's index range includes it or
//! the majority vote is 1 there ("the values within the voting window are
//! perceived as drifted", persisting while the vote holds). A segment is
//! predicted drifted as a whole when it deviates from baseline and contains
//! at least one covered sample: coverage supplies the detection machinery's
//! opinion, the segment check supplies the direction-of-change
//! disambiguation, and the cut points stop event windows from reaching back
//! into pre-change data. Marking whole segments rather than raw covered
//! samples matters because the estimators flag changes, not states — the
//! vote decays partway through a long drift once every estimator has
//! adapted to the new level. Only the adaptive-windowing estimator defines
//! initial cut points because the sliding KS estimator fires continuously
//! and would shred segments too small to test.

use crate::calibration::BaselineStats;
use crate::detector::{DetectorParams, DetectorState, DriftEvent};
use crate::error::Result;

/// Default deviation threshold, in baseline standard errors, above which a
/// segment counts as drifted.
pub const DEFAULT_SEGMENT_KAPPA: f64 = 2.0;

/// Shortest segment the recursive split may produce.
const MIN_SPLIT_SEGMENT: usize = 150;

/// Two-sample z-score an internal change point must reach before a segment
/// is split around it. A spurious split on stationary noise is harmless as
/// long as the resulting halves stay below the `kappa` gate: at this level
/// a false split leaves each half within ~0.2 standard deviations of the
/// segment mean, well under the gate threshold for any segment length.
const SPLIT_Z: f64 = 3.0;

/// Half-width, in baseline standard deviations, of the band around the
/// calibration mean from which segments may contribute to the refined
/// baseline mean.
const REFINE_BAND_SIGMA: f64 = 0.5;

/// Most effective samples credited to the stream-refined baseline mean.
/// The cap keeps a floor under the gate's standard error, absorbing the
/// residual bias that weakly drifted segments inside the refinement band
/// can leave in the refined mean.
const REFINED_BASELINE_CAP: usize = 1600;

/// Outcome of evaluating the ensemble over one stream.
pub struct EnsembleRun {
    /// Per-sample 0/1 predictions.
    pub predictions: Vec<u8>,
    /// Raw per-sample majority votes.
    pub votes: Vec<u8>,
    /// Emitted drift events.
    pub events: Vec<DriftEvent>,
    /// Segment boundaries used by the baseline-similarity check (ordinals
    /// into `values`, ascending, excluding 0 and the stream end).
    pub boundaries: Vec<usize>,
}

/// Runs the calibrated ensemble over `values` and derives per-sample
/// predictions with the segment gate described in the module docs.
pub fn run_ensemble(
    stream_id: &str,
    params: &DetectorParams,
    baseline: &BaselineStats,
    values: &[f64],
    kappa: f64,
) -> Result<EnsembleRun> {
    let mut detector = DetectorState::<f64>::new(stream_id, params.clone())?;
    let mut votes = Vec::with_capacity(values.len());
    let mut events = Vec::new();
    let mut cuts: Vec<usize> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        let outcome = detector.ingest_value(v)?;
        votes.push(outcome.vote);
        if let Some(event) = outcome.event {
            events.push(event);
        }
        if outcome.fired[0] {
            let kept = detector.adwin_window_len().unwrap_or(0) as usize;
            // First sample of the post-change regime.
            let boundary = (i + 1).saturating_sub(kept);
            if boundary > 0 && boundary <= i {
                cuts.push(boundary);
            }
        }
    }
    cuts.sort_unstable();
    cuts.dedup();
    cuts.retain(|&b| b < values.len());

    let sigma = baseline.sigma.max(crate::calibration::CONSTANT_SIGMA_FLOOR);
    let mut prefix = Vec::with_capacity(values.len() + 1);
    let mut acc = 0.0;
    prefix.push(0.0);
    for &v in values {
        acc += v;
        prefix.push(acc);
    }
    let seed_bounds: Vec<usize> = std::iter::once(0)
        .chain(cuts.iter().copied())
        .chain(std::iter::once(values.len()))
        .collect();
    for pair in seed_bounds.windows(2) {
        refine_cuts(&prefix, sigma, pair[0], pair[1], &mut cuts);
    }
    cuts.sort_unstable();
    cuts.dedup();

    let mut covered: Vec<u8> = votes.clone();
    for event in &events {
        let start = event.start_index as usize;
        let end = (event.end_index as usize).min(values.len().saturating_sub(1));
        for c in covered.iter_mut().take(end + 1).skip(start) {
            *c = 1;
        }
    }

    let predictions = gate_predictions(&covered, values, baseline, &cuts, kappa);
    Ok(EnsembleRun { predictions, votes, events, boundaries: cuts })
}

/// Recursively appends cut points inside `[start, end)` wherever the best
/// split yields a left/right mean difference of at least `SPLIT_Z` standard
/// errors. `prefix` holds running sums of the values with a leading zero.
fn refine_cuts(prefix: &[f64], sigma: f64, start: usize, end: usize, out: &mut Vec<usize>) {
    if end - start < 2 * MIN_SPLIT_SEGMENT {
        return;
    }
    let mean = |l: usize, r: usize| (prefix[r] - prefix[l]) / (r - l) as f64;
    let mut best_z = 0.0_f64;
    let mut best_at = 0_usize;
    for t in (start + MIN_SPLIT_SEGMENT)..=(end - MIN_SPLIT_SEGMENT) {
        let n_left = (t - start) as f64;
        let n_right = (end - t) as f64;
        let std_err = sigma * (1.0 / n_left + 1.0 / n_right).sqrt();
        let z = (mean(start, t) - mean(t, end)).abs() / std_err;
        if z > best_z {
            best_z = z;
            best_at = t;
        }
    }
    if best_z > SPLIT_Z {
        out.push(best_at);
        refine_cuts(prefix, sigma, start, best_at, out);
        refine_cuts(prefix, sigma, best_at, end, out);
    }
}

/// Applies the per-segment baseline-similarity check and combines it with
/// the covered samples.
fn gate_predictions(
    covered: &[u8],
    values: &[f64],
    baseline: &BaselineStats,
    cuts: &[usize],
    kappa: f64,
) -> Vec<u8> {
    let mut predictions = vec![0_u8; values.len()];
    let sigma = baseline.sigma.max(crate::calibration::CONSTANT_SIGMA_FLOOR);
    let mut segments: Vec<(usize, usize, f64)> = Vec::with_capacity(cuts.len() + 1);
    let mut start = 0_usize;
    for end in cuts.iter().copied().chain(std::iter::once(values.len())) {
        if start < end {
            let mean = values[start..end].iter().sum::<f64>() / (end - start) as f64;
            segments.push((start, end, mean));
        }
        start = end;
    }
    let (mu, eff_b) =
        refine_baseline_mean(&segments, baseline.mu_prime, sigma, baseline.b);
    for &(start, end, mean) in &segments {
        let n = (end - start) as f64;
        let std_err = sigma * (1.0 / eff_b as f64 + 1.0 / n).sqrt();
        let drifted = (mean - mu).abs() > kappa * std_err;
        // A drifted segment is marked whole once any detection coverage
        // falls inside it: estimators flag changes rather than states, so
        // the vote decays partway through long drifts, and the segment cut
        // points already stop marks from reaching back into pre-change
        // data.
        if drifted && covered[start..end].iter().any(|&c| c == 1) {
            for p in &mut predictions[start..end] {
                *p = 1;
            }
        }
    }
    predictions
}

/// Re-estimates the stationary baseline mean from the stream itself.
///
/// The calibration prefix pins the mean to ~1/sqrt(b) standard deviations,
/// which leaves the gate blind to offsets below ~2/sqrt(b). Stretches of
/// the stream that sit near the calibration mean are far longer than the
/// prefix, so the weighted mode of their segment means (the shortest
/// interval holding half the near-baseline weight) sharpens the reference.
/// Returns the refined mean and the effective sample count backing it;
/// falls back to the calibration values when the stream offers nothing
/// better.
fn refine_baseline_mean(
    segments: &[(usize, usize, f64)],
    mu: f64,
    sigma: f64,
    b: usize,
) -> (f64, usize) {
    let mut cands: Vec<(f64, usize)> = segments
        .iter()
        .filter(|(_, _, m)| (m - mu).abs() <= REFINE_BAND_SIGMA * sigma)
        .map(|&(s, e, m)| (m, e - s))
        .collect();
    let total: usize = cands.iter().map(|c| c.1).sum();
    if total <= b {
        return (mu, b);
    }
    cands.sort_by(|a, c| a.0.total_cmp(&c.0));
    let half = total.div_ceil(2);
    let mut best: Option<(f64, usize, usize)> = None;
    let mut weight = 0_usize;
    let mut lo = 0_usize;
    for hi in 0..cands.len() {
        weight += cands[hi].1;
        while weight - cands[lo].1 >= half {
            weight -= cands[lo].1;
            lo += 1;
        }
        if weight >= half {
            let width = cands[hi].0 - cands[lo].0;
            if best.is_none_or(|(w, _, _)| width < w) {
                best = Some((width, lo, hi));
            }
        }
    }
    match best {
        Some((_, lo, hi)) => {
            let window = &cands[lo..=hi];
            let w: usize = window.iter().map(|c| c.1).sum();
            let mean = window.iter().map(|&(m, n)| m * n as f64).sum::<f64>() / w as f64;
            (mean, w.min(REFINED_BASELINE_CAP))
        }
        None => (mu, b),
    }
}
