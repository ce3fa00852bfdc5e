use serde::{Deserialize, Serialize};

use super::metrics::f1_score;
use super::robust::{robust_vehicle_predict, robust_vehicle_score, RobustScoreParams};
use super::roc::auroc;
use super::EvalError;

pub const DEFAULT_H_GRID: [f64; 7] = [1.0, 2.0, 5.0, 10.0, 25.0, 50.0, 100.0];
pub const DEFAULT_TAU_LEVELS: usize = 50;

/// Linear-interpolation quantile (`q` in [0, 1]) of unsorted data.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Quantiles at levels `i/levels`, `i = 0..levels`, sorted and deduplicated.
pub fn tau_candidates(scores: &[f64], levels: usize) -> Vec<f64> {
    let mut out: Vec<f64> = (0..levels.max(1)).map(|i| quantile(scores, i as f64 / levels.max(1) as f64)).collect();
    out.dedup();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub params: RobustScoreParams,
    pub validation_auroc: f64,
    pub validation_f1: f64,
}

/// Threshold maximizing F1 over quantile candidates; ties keep the smaller τ.
pub fn select_threshold(labels: &[bool], scores: &[f64], levels: usize) -> Result<(f64, f64), EvalError> {
    auroc(labels, scores)?;
    let mut best = (f64::NAN, -1.0);
    for tau in tau_candidates(scores, levels) {
        let pred: Vec<bool> = scores.iter().map(|&s| robust_vehicle_predict(s, tau)).collect();
        let f1 = f1_score(labels, &pred);
        if f1 > best.1 {
            best = (tau, f1);
        }
    }
    Ok(best)
}

/// Chooses `h` by validation AUROC, then `τ` by validation F1.
///
/// `vehicles` pairs each validation vehicle's label (true = anomalous) with
/// its snippet scores. Ties go to the smaller `h`, then the smaller `τ`.
pub fn select_hyperparams(vehicles: &[(bool, Vec<f64>)], h_grid: &[f64], tau_levels: usize) -> Result<Selection, EvalError> {
    if h_grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let labels: Vec<bool> = vehicles.iter().map(|v| v.0).collect();
    let mut grid = h_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    for &h in &grid {
        let scores = vehicles
            .iter()
            .map(|(_, s)| robust_vehicle_score(s, h))
            .collect::<Result<Vec<f64>, _>>()?;
        let a = auroc(&labels, &scores)?;
        if best.as_ref().is_none_or(|b| a > b.1) {
            best = Some((h, a, scores));
        }
    }
    let (h, validation_auroc, scores) = best.expect("grid is non-empty");
    let (tau, validation_f1) = select_threshold(&labels, &scores, tau_levels)?;
    Ok(Selection {
        params: RobustScoreParams::new(h, tau)?,
        validation_auroc,
        validation_f1,
    })
}
