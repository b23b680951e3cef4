//! Per-estimator verdict history and the 2-of-3 majority vote.

use std::collections::VecDeque;

/// Number of estimators feeding the vote.
pub const N_ESTIMATORS: usize = 3;

/// Rolling verdict sequences for the three estimators.
///
/// All three sequences always have equal length; retention is bounded by the
/// capacity fixed at construction (the largest voting window in use), so a
/// voting-window resize never looks at truncated data.
#[derive(Debug, Clone)]
pub struct VerdictHistory {
    cap: usize,
    verdicts: [VecDeque<bool>; N_ESTIMATORS],
    /// Absolute position (0-based) of each estimator's most recent firing.
    last_fire: [Option<u64>; N_ESTIMATORS],
    pushed: u64,
}

impl VerdictHistory {
    /// Creates a history retaining the last `cap >= 1` verdicts per estimator.
    pub fn new(cap: usize) -> Self {
        assert!(cap >= 1, "history capacity must be >= 1");
        VerdictHistory {
            cap,
            verdicts: std::array::from_fn(|_| VecDeque::with_capacity(cap.min(4096))),
            last_fire: [None; N_ESTIMATORS],
            pushed: 0,
        }
    }

    /// Appends one verdict per estimator.
    pub fn push(&mut self, fired: [bool; N_ESTIMATORS]) {
        for (e, &f) in fired.iter().enumerate() {
            let dq = &mut self.verdicts[e];
            if dq.len() == self.cap {
                dq.pop_front();
            }
            dq.push_back(f);
            if f {
                self.last_fire[e] = Some(self.pushed);
            }
        }
        self.pushed += 1;
    }

    /// Total verdicts pushed per estimator since construction.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    /// Retained sequence length (equal for all three estimators).
    pub fn len(&self) -> usize {
        self.verdicts[0].len()
    }

    /// True before any verdict has been pushed.
    pub fn is_empty(&self) -> bool {
        self.pushed == 0
    }

    /// Retention capacity.
    pub fn capacity(&self) -> usize {
        self.cap
    }

    /// Position (0-based push ordinal) of estimator `e`'s most recent firing.
    pub fn last_fire(&self, e: usize) -> Option<u64> {
        self.last_fire[e]
    }

    /// True when estimator `e` fired within the last `window` verdicts.
    pub fn fired_within(&self, e: usize, window: usize) -> bool {
        match self.last_fire[e] {
            None => false,
            Some(pos) => pos + window as u64 >= self.pushed,
        }
    }

    /// Counts verdict-1 entries per estimator within the last `window`
    /// verdicts (bounded by what is retained).
    pub fn window_counts(&self, window: usize) -> [usize; N_ESTIMATORS] {
        std::array::from_fn(|e| {
            let dq = &self.verdicts[e];
            let take = window.min(dq.len());
            dq.iter().rev().take(take).filter(|&&f| f).count()
        })
    }
}

/// Majority vote: 1 iff at least 2 of the 3 estimators fired within the last
/// `window` verdicts. Returns 0 while fewer than `window` verdicts exist
/// (startup condition, not an error).
pub fn vote(history: &VerdictHistory, window: usize) -> u8 {
    if history.pushed() < window as u64 {
        return 0;
    }
    let agreeing =
        (0..N_ESTIMATORS).filter(|&e| history.fired_within(e, window)).count();
    u8::from(agreeing >= 2)
}
