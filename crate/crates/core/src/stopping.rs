//! Patience rule shared by epoch-level and meta-epoch-level early stopping.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopDecision {
    Continue,
    StopAtBest { best: usize },
}

/// Earliest index of the maximum score.
pub fn best_index(history: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in history.iter().enumerate() {
        match best {
            Some(b) if v <= history[b] => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Stops once the best score is `patience` entries old. A patience of zero
/// stops at the first entry that fails to improve.
pub fn patience_decision(history: &[f64], patience: usize) -> StopDecision {
    let Some(best) = best_index(history) else {
        return StopDecision::Continue;
    };
    let since_best = history.len() - 1 - best;
    if since_best >= patience.max(1) {
        StopDecision::StopAtBest { best }
    } else {
        StopDecision::Continue
    }
}
