use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::folds::{build_folds, FoldPlan};
use super::metrics::Confusion;
use super::report::{EvalReport, RoundReport};
use super::robust::{robust_vehicle_predict, robust_vehicle_score};
use super::roc::{auroc, average_roc, roc_curve, AveragedRoc, RocPoint};
use super::select::{select_hyperparams, select_threshold, DEFAULT_H_GRID, DEFAULT_TAU_LEVELS};
use super::EvalError;
use crate::data::Vehicle;
use crate::detectors::{fit, DetectorSpec, SnippetScore, VehicleScore};
use crate::exec::Execution;
use crate::seed::{self, streams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionSettings {
    pub folds: usize,
    pub seed: u64,
    pub h_grid: Vec<f64>,
    pub tau_levels: usize,
    pub roc_grid_points: usize,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for DetectionSettings {
    fn default() -> Self {
        DetectionSettings {
            folds: 5,
            seed: 42,
            h_grid: DEFAULT_H_GRID.to_vec(),
            tau_levels: DEFAULT_TAU_LEVELS,
            roc_grid_points: 101,
            execution: Execution::default(),
        }
    }
}

/// Everything one round produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub report: RoundReport,
    pub roc: Vec<RocPoint>,
    /// Snippet scores of the round's test vehicles.
    pub test_scores: Vec<SnippetScore>,
    pub training_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRun {
    pub plan: FoldPlan,
    pub report: EvalReport,
    pub rounds: Vec<RoundOutcome>,
    pub average_roc: AveragedRoc,
}

/// Full cross-validation: per round, train on normal folds, pick (h, τ) on
/// validation, then score the held-out vehicles.
pub fn run_detection(vehicles: &[Vehicle], spec: &DetectorSpec, settings: &DetectionSettings) -> Result<DetectionRun, EvalError> {
    let plan = build_folds(vehicles, settings.folds, seed::derive(settings.seed, streams::FOLDS))?;
    let by_id: HashMap<&str, &Vehicle> = vehicles.iter().map(|v| (v.vehicle_id.as_str(), v)).collect();
    let exec = settings.execution;
    let outcomes = exec.map(&plan.rounds, |roles| -> Result<RoundOutcome, EvalError> {
        let train: Vec<&Vehicle> = roles.train.iter().map(|id| by_id[id.as_str()]).collect();
        let detector = fit(spec, &train, seed::derive_indexed(settings.seed, streams::DETECTOR, roles.round as u64), exec)?;
        let score = |pairs: Vec<(&str, bool)>| -> Result<Vec<(bool, VehicleScore)>, EvalError> {
            pairs
                .into_iter()
                .map(|(id, label)| Ok((label, detector.score_vehicle(by_id[id], exec)?)))
                .collect()
        };
        let validation = score(roles.validation().collect())?;
        let test = score(roles.test().collect())?;
        let val_labels: Vec<bool> = validation.iter().map(|v| v.0).collect();
        let test_labels: Vec<bool> = test.iter().map(|v| v.0).collect();

        let direct = |set: &[(bool, VehicleScore)]| -> Vec<f64> {
            set.iter()
                .map(|(_, s)| match s {
                    VehicleScore::Direct(x) => *x,
                    VehicleScore::Snippets(_) => unreachable!("mixed score kinds"),
                })
                .collect()
        };
        let snippets = |set: &[(bool, VehicleScore)]| -> Vec<(bool, Vec<f64>)> {
            set.iter()
                .map(|(l, s)| match s {
                    VehicleScore::Snippets(v) => (*l, v.iter().map(|x| x.score).collect()),
                    VehicleScore::Direct(_) => unreachable!("mixed score kinds"),
                })
                .collect()
        };

        let is_direct = matches!(validation.first().map(|v| &v.1), Some(VehicleScore::Direct(_)));
        let (h, tau, validation_auroc, validation_f1, test_scores) = if is_direct {
            let val = direct(&validation);
            let va = auroc(&val_labels, &val)?;
            let (tau, f1) = select_threshold(&val_labels, &val, settings.tau_levels)?;
            (None, tau, va, f1, direct(&test))
        } else {
            let sel = select_hyperparams(&snippets(&validation), &settings.h_grid, settings.tau_levels)?;
            let h = sel.params.h;
            let scores = snippets(&test)
                .iter()
                .map(|(_, s)| robust_vehicle_score(s, h))
                .collect::<Result<Vec<f64>, _>>()?;
            (Some(h), sel.params.tau, sel.validation_auroc, sel.validation_f1, scores)
        };

        let predicted: Vec<bool> = test_scores.iter().map(|&s| robust_vehicle_predict(s, tau)).collect();
        let report = RoundReport {
            round: roles.round,
            auroc: auroc(&test_labels, &test_scores)?,
            h,
            tau,
            validation_auroc,
            validation_f1,
            confusion: Confusion::from_predictions(&test_labels, &predicted),
            test_normal: roles.test_normal.len(),
            test_anomalous: roles.test_anomalous.len(),
        };
        let snippet_scores = test
            .into_iter()
            .flat_map(|(_, s)| match s {
                VehicleScore::Snippets(v) => v,
                VehicleScore::Direct(_) => Vec::new(),
            })
            .collect();
        Ok(RoundOutcome {
            roc: roc_curve(&test_labels, &test_scores)?,
            report,
            test_scores: snippet_scores,
            training_loss: detector.loss_history().to_vec(),
        })
    });
    let rounds = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;
    let curves: Vec<Vec<RocPoint>> = rounds.iter().map(|r| r.roc.clone()).collect();
    let average_roc = average_roc(&curves, settings.roc_grid_points)?;
    let report = EvalReport::new(spec.name(), settings.seed, rounds.iter().map(|r| r.report.clone()).collect());
    Ok(DetectionRun {
        plan,
        report,
        rounds,
        average_roc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::HealthLabel;
    use crate::detectors::test_support::toy_vehicle;
    use crate::data::Channel;

    fn fleet() -> Vec<Vehicle> {
        (0..15)
            .map(|i| {
                let anomalous = i >= 10;
                let r = if anomalous { 0.006 } else { 0.003 };
                let label = if anomalous { HealthLabel::Anomalous } else { HealthLabel::Normal };
                toy_vehicle(&format!("v{i:02}"), 4, r + 0.0001 * i as f64, label)
            })
            .collect()
    }

    #[test]
    fn variance_protocol_end_to_end() {
        let settings = DetectionSettings {
            execution: Execution::Sequential,
            ..DetectionSettings::default()
        };
        let spec = DetectorSpec::Variance {
            channel: Channel::AvgCellVoltage,
        };
        let run = run_detection(&fleet(), &spec, &settings).unwrap();
        assert_eq!(run.report.rounds.len(), 5);
        assert!(run.report.rounds.iter().all(|r| r.h.is_none() && r.test_normal == 2 && r.test_anomalous == 4));
        assert_eq!(run.average_roc.fpr.len(), 101);
        let par = run_detection(
            &fleet(),
            &spec,
            &DetectionSettings {
                execution: Execution::Parallel,
                ..settings
            },
        )
        .unwrap();
        assert_eq!(run, par);
    }

    #[test]
    fn too_few_anomalies_is_a_protocol_error() {
        let mut f = fleet();
        f.truncate(13);
        assert!(run_detection(&f, &DetectorSpec::variance(), &DetectionSettings::default()).is_err());
    }
}
