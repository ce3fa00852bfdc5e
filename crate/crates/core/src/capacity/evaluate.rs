use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{train_regressor, RegressorConfig};
use super::{CapacityDataset, CapacityError};
use crate::data::ChargingSnippet;
use crate::evalkit::{build_plain_folds, format_mean_std, mean_std, rmse};
use crate::exec::Execution;
use crate::seed::{self, streams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CapacitySettings {
    pub folds: usize,
    pub seed: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for CapacitySettings {
    fn default() -> Self {
        CapacitySettings {
            folds: 5,
            seed: 42,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityPrediction {
    pub vehicle_id: String,
    pub snippet_index: usize,
    pub predicted_capacity: f64,
    pub true_capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityRoundReport {
    pub round: usize,
    pub rmse: f64,
    /// RMSE of predicting the training-label mean for every test snippet.
    pub baseline_rmse: f64,
    pub train_snippets: usize,
    pub test_snippets: usize,
    pub test_vehicles: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    pub regressor: String,
    pub seed: u64,
    pub folds: usize,
    pub rounds: Vec<CapacityRoundReport>,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub baseline_rmse_mean: f64,
    pub baseline_rmse_std: f64,
    /// `mean±std` of the test RMSE, two decimals.
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityRun {
    pub folds: Vec<Vec<String>>,
    pub report: CapacityReport,
    /// Test predictions of every round, round by round.
    pub predictions: Vec<CapacityPrediction>,
}

/// K-fold cross-validation over all vehicles. Each round trains on the
/// other folds' labeled snippets and reports test RMSE next to the
/// training-mean baseline.
pub fn evaluate_capacity(
    dataset: &CapacityDataset,
    config: &RegressorConfig,
    settings: &CapacitySettings,
) -> Result<CapacityRun, CapacityError> {
    config.validate()?;
    let exec = settings.execution;
    let folds = build_plain_folds(&dataset.vehicle_ids(), settings.folds, seed::derive(settings.seed, streams::CAPACITY_FOLDS))?;
    let mut rounds = Vec::with_capacity(folds.len());
    let mut predictions = Vec::new();
    for (r, test_ids) in folds.iter().enumerate() {
        let train_ids: Vec<String> = folds
            .iter()
            .enumerate()
            .filter(|&(f, _)| f != r)
            .flat_map(|(_, ids)| ids.iter().cloned())
            .collect();
        let train = dataset.snippets_of(&train_ids);
        let test = dataset.snippets_of(test_ids);
        if test.is_empty() {
            return Err(CapacityError::NoTestSnippets(r));
        }
        let model_seed = seed::derive_indexed(settings.seed, streams::REGRESSOR, r as u64);
        let model = train_regressor(&train, config, model_seed, exec)?;
        let pred = model.predict(&test, exec)?;
        let truth: Vec<f64> = test.iter().map(|s| label(s)).collect();
        let train_mean = train.iter().map(|s| label(s)).sum::<f64>() / train.len() as f64;
        rounds.push(CapacityRoundReport {
            round: r,
            rmse: rmse(&pred, &truth)?,
            baseline_rmse: rmse(&vec![train_mean; truth.len()], &truth)?,
            train_snippets: train.len(),
            test_snippets: test.len(),
            test_vehicles: test_ids.clone(),
        });
        predictions.extend(test.iter().zip(pred.iter().zip(&truth)).map(|(s, (&p, &t))| CapacityPrediction {
            vehicle_id: s.vehicle_id.clone(),
            snippet_index: s.snippet_index,
            predicted_capacity: p,
            true_capacity: t,
        }));
    }
    let (rmse_mean, rmse_std) = mean_std(&rounds.iter().map(|r| r.rmse).collect::<Vec<_>>());
    let (baseline_rmse_mean, baseline_rmse_std) = mean_std(&rounds.iter().map(|r| r.baseline_rmse).collect::<Vec<_>>());
    let report = CapacityReport {
        regressor: config.kind.name().to_string(),
        seed: settings.seed,
        folds: settings.folds,
        rounds,
        rmse_mean,
        rmse_std,
        baseline_rmse_mean,
        baseline_rmse_std,
        summary: format_mean_std(rmse_mean, rmse_std, 2),
    };
    Ok(CapacityRun {
        folds,
        report,
        predictions,
    })
}

fn label(s: &ChargingSnippet) -> f64 {
    s.capacity_label.expect("capacity dataset holds labeled snippets only")
}

pub fn write_predictions<W: Write>(w: W, predictions: &[CapacityPrediction]) -> Result<(), CapacityError> {
    let mut out = csv::Writer::from_writer(w);
    for p in predictions {
        out.serialize(p)?;
    }
    out.flush()?;
    Ok(())
}

/// `vehicle_id,snippet_index,predicted_capacity,true_capacity`.
pub fn write_predictions_csv(path: &Path, predictions: &[CapacityPrediction]) -> Result<(), CapacityError> {
    write_predictions(std::fs::File::create(path)?, predictions)
}
