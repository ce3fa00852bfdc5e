use serde::{Deserialize, Serialize};

use super::metrics::{mean_std, Confusion};

/// Test results of one cross-validation round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub auroc: f64,
    /// Selected percentile; absent for detectors that score vehicles directly.
    pub h: Option<f64>,
    pub tau: f64,
    pub validation_auroc: f64,
    pub validation_f1: f64,
    pub confusion: Confusion,
    pub test_normal: usize,
    pub test_anomalous: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub algorithm: String,
    pub seed: u64,
    pub folds: usize,
    pub rounds: Vec<RoundReport>,
    pub auroc_mean: f64,
    pub auroc_std: f64,
    /// `auroc_mean ± auroc_std` in percent, one decimal.
    pub summary: String,
}

impl EvalReport {
    pub fn new(algorithm: impl Into<String>, seed: u64, rounds: Vec<RoundReport>) -> Self {
        let aurocs: Vec<f64> = rounds.iter().map(|r| r.auroc).collect();
        let (auroc_mean, auroc_std) = mean_std(&aurocs);
        EvalReport {
            algorithm: algorithm.into(),
            seed,
            folds: rounds.len(),
            summary: format_mean_std(auroc_mean * 100.0, auroc_std * 100.0, 1),
            rounds,
            auroc_mean,
            auroc_std,
        }
    }
}

/// `"77.9±5.0"`-style rendering.
pub fn format_mean_std(mean: f64, std: f64, decimals: usize) -> String {
    format!("{mean:.decimals$}±{std:.decimals$}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round(r: usize, auroc: f64) -> RoundReport {
        RoundReport {
            round: r,
            auroc,
            h: Some(10.0),
            tau: 0.5,
            validation_auroc: 1.0,
            validation_f1: 1.0,
            confusion: Confusion::default(),
            test_normal: 4,
            test_anomalous: 4,
        }
    }

    #[test]
    fn summary_format() {
        assert_eq!(format_mean_std(77.94, 4.96, 1), "77.9±5.0");
        assert_eq!(format_mean_std(1.734, 0.061, 2), "1.73±0.06");
        let rep = EvalReport::new("dyad", 1, (0..5).map(|r| round(r, 0.7 + 0.02 * r as f64)).collect());
        assert_eq!(rep.rounds.len(), 5);
        assert!((rep.auroc_mean - 0.74).abs() < 1e-12);
        assert_eq!(rep.summary, "74.0±2.8");
    }

    #[test]
    fn json_round_trip() {
        let rep = EvalReport::new("ae", 3, vec![round(0, 0.5)]);
        let s = serde_json::to_string(&rep).unwrap();
        assert_eq!(serde_json::from_str::<EvalReport>(&s).unwrap(), rep);
        assert!(s.contains("\"fn\""));
    }
}
