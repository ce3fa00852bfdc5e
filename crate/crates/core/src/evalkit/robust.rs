use serde::{Deserialize, Serialize};

use super::EvalError;

/// Percentile `h` and threshold `τ` of the robust vehicle score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustScoreParams {
    pub h: f64,
    pub tau: f64,
}

impl RobustScoreParams {
    pub fn new(h: f64, tau: f64) -> Result<Self, EvalError> {
        check_h(h)?;
        Ok(RobustScoreParams { h, tau })
    }
}

fn check_h(h: f64) -> Result<(), EvalError> {
    if h > 0.0 && h <= 100.0 {
        Ok(())
    } else {
        Err(EvalError::InvalidPercentile(h))
    }
}

/// Number of top snippets averaged: `max(1, floor(n·h/100))`.
pub(crate) fn top_count(n: usize, h: f64) -> usize {
    ((n as f64 * h / 100.0).floor() as usize).clamp(1, n)
}

/// Mean of the largest `h` percent of a vehicle's snippet scores.
pub fn robust_vehicle_score(snippet_scores: &[f64], h: f64) -> Result<f64, EvalError> {
    check_h(h)?;
    if snippet_scores.is_empty() {
        return Err(EvalError::NoSnippets);
    }
    if snippet_scores.iter().any(|s| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore);
    }
    let k = top_count(snippet_scores.len(), h);
    let mut sorted = snippet_scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(sorted[..k].iter().sum::<f64>() / k as f64)
}

/// Abnormal iff the vehicle score is strictly above `τ`.
pub fn robust_vehicle_predict(score: f64, tau: f64) -> bool {
    score > tau
}
