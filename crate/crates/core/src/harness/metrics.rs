//! Per-sample classification metrics on the drift (positive) class.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confusion counts over one prediction/truth pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    /// Predicted 1, truth 1.
    pub true_pos: u64,
    /// Predicted 1, truth 0.
    pub false_pos: u64,
    /// Predicted 0, truth 1.
    pub false_neg: u64,
    /// Predicted 0, truth 0.
    pub true_neg: u64,
}

impl Confusion {
    /// Total samples counted.
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }

    /// False-positive rate (share of truth-0 samples predicted 1; 0 when
    /// there are none).
    pub fn false_positive_rate(&self) -> f64 {
        let negatives = self.false_pos + self.true_neg;
        if negatives == 0 {
            0.0
        } else {
            self.false_pos as f64 / negatives as f64
        }
    }
}

/// Precision/recall/F1 with degenerate-case bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Stats {
    /// Precision on the positive class (0 when nothing was predicted 1).
    pub precision: f64,
    /// Recall on the positive class (0 when the truth has no positives).
    pub recall: f64,
    /// Harmonic mean of precision and recall (0/0 -> 0).
    pub f1: f64,
    /// True when either the predicted or the true positive class is empty,
    /// making the corresponding ratio a 0/0 convention.
    pub degenerate: bool,
    /// Underlying counts.
    pub confusion: Confusion,
}

/// Counts the confusion table; labels must be 0/1 and of equal length.
pub fn confusion(pred: &[u8], truth: &[u8]) -> Result<Confusion> {
    if pred.len() != truth.len() {
        return Err(Error::input(format!(
            "prediction length {} does not match truth length {}",
            pred.len(),
            truth.len()
        )));
    }
    let mut c = Confusion::default();
    for (&p, &t) in pred.iter().zip(truth) {
        if p > 1 || t > 1 {
            return Err(Error::input("labels must be 0 or 1"));
        }
        match (p, t) {
            (1, 1) => c.true_pos += 1,
            (1, 0) => c.false_pos += 1,
            (0, 1) => c.false_neg += 1,
            _ => c.true_neg += 1,
        }
    }
    Ok(c)
}

/// Precision, recall, and F1 of `pred` against `truth` on the positive
/// class, with every 0/0 ratio defined as 0 and flagged degenerate.
pub fn f1_score(pred: &[u8], truth: &[u8]) -> Result<F1Stats> {
    Ok(scores(confusion(pred, truth)?))
}

/// Scores from an existing confusion table.
pub fn scores(c: Confusion) -> F1Stats {
    let predicted_pos = c.true_pos + c.false_pos;
    let actual_pos = c.true_pos + c.false_neg;
    let precision =
        if predicted_pos == 0 { 0.0 } else { c.true_pos as f64 / predicted_pos as f64 };
    let recall = if actual_pos == 0 { 0.0 } else { c.true_pos as f64 / actual_pos as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    F1Stats {
        precision,
        recall,
        f1,
        degenerate: predicted_pos == 0 || actual_pos == 0,
        confusion: c,
    }
}
