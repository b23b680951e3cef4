//! Non-overlapping trend windows: slope, angle, and relative mean change.
//!
//! Samples accumulate into a fixed-length buffer; every time it fills, the
//! window's least-squares slope, its angle in degrees, the window mean, and
//! the relative change versus the previous window's mean are reported and the
//! buffer starts over.

use crate::real::Real;

/// Guard against division by a near-zero previous mean.
pub const MEAN_EPSILON: f64 = 1e-9;

/// Statistics of one completed trend window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrendStats {
    /// Least-squares slope per sample.
    pub slope: f64,
    /// `atan(slope)` in degrees.
    pub theta_deg: f64,
    /// Mean of the window.
    pub mean: f64,
    /// Relative mean change `|mean - prev_mean| / prev_mean`; `None` for the
    /// first completed window.
    pub upsilon: Option<f64>,
    /// True when the previous mean was too close to zero for a meaningful
    /// relative change; callers should leave the voting window unchanged.
    pub degenerate: bool,
}

/// Accumulator for non-overlapping trend windows of fixed length.
#[derive(Debug, Clone)]
pub struct TrendWindow<R = f64> {
    len: usize,
    buf: Vec<R>,
    prev_mean: Option<f64>,
}

impl<R: Real> TrendWindow<R> {
    /// Creates an accumulator over windows of `len >= 2` samples.
    pub fn new(len: usize) -> Self {
        assert!(len >= 2, "trend window needs at least 2 samples");
        TrendWindow { len, buf: Vec::with_capacity(len), prev_mean: None }
    }

    /// Configured window length.
    pub fn window_len(&self) -> usize {
        self.len
    }

    /// Number of samples buffered toward the next window.
    pub fn pending(&self) -> usize {
        self.buf.len()
    }

    /// Adds one sample; returns the window statistics when a window completes.
    pub fn push(&mut self, value: R) -> Option<TrendStats> {
        self.buf.push(value);
        if self.buf.len() < self.len {
            return None;
        }
        let n = self.len as f64;
        let mean_y = self.buf.iter().map(|v| v.as_f64()).sum::<f64>() / n;
        // Ordinals 0..n-1: mean (n-1)/2, variance sum n(n^2-1)/12.
        let mean_x = (n - 1.0) / 2.0;
        let sxx = n * (n * n - 1.0) / 12.0;
        let sxy = self
            .buf
            .iter()
            .enumerate()
            .map(|(i, v)| (i as f64 - mean_x) * (v.as_f64() - mean_y))
            .sum::<f64>();
        let slope = sxy / sxx;
        let (upsilon, degenerate) = match self.prev_mean {
            None => (None, false),
            Some(pm) => {
                if pm.abs() < MEAN_EPSILON {
                    (Some((mean_y - pm).abs() / MEAN_EPSILON), true)
                } else {
                    (Some((mean_y - pm).abs() / pm.abs()), false)
                }
            }
        };
        self.prev_mean = Some(mean_y);
        self.buf.clear();
        Some(TrendStats {
            slope,
            theta_deg: slope.atan().to_degrees(),
            mean: mean_y,
            upsilon,
            degenerate,
        })
    }
}
