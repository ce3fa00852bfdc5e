//! Snippet-level anomaly scorers: DyAD, a feed-forward autoencoder and the
//! per-vehicle variance statistic.

mod ae;
mod dyad;
pub(crate) mod train;
mod variance;

pub use ae::{ae_score, ae_train, AeConfig, AeModel};
pub use dyad::{dyad_score, dyad_train, DyadConfig, DyadModel};
pub use train::TrainSettings;
pub use variance::variance_score;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Channel, DataError, Row, Vehicle, MODELED_CHANNELS};
use crate::diffkit::DiffError;
use crate::exec::Execution;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("protocol violation: anomalous vehicle {0} in training data")]
    AnomalousInTraining(String),
    #[error("vehicle has no snippets")]
    NoSnippets,
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One snippet's reconstruction error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnippetScore {
    pub vehicle_id: String,
    pub snippet_index: usize,
    pub score: f64,
}

/// Which detector to run, with its settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetectorSpec {
    Dyad(DyadConfig),
    Ae(AeConfig),
    Variance { channel: Channel },
}

impl DetectorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            DetectorSpec::Dyad(_) => "dyad",
            DetectorSpec::Ae(_) => "ae",
            DetectorSpec::Variance { .. } => "variance",
        }
    }

    pub fn dyad() -> Self {
        DetectorSpec::Dyad(DyadConfig::default())
    }

    pub fn ae() -> Self {
        DetectorSpec::Ae(AeConfig::default())
    }

    pub fn variance() -> Self {
        DetectorSpec::Variance {
            channel: Channel::AvgCellVoltage,
        }
    }
}

/// A vehicle's scores: per snippet for the learned detectors, one number for
/// the variance statistic.
#[derive(Debug, Clone, PartialEq)]
pub enum VehicleScore {
    Snippets(Vec<SnippetScore>),
    Direct(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrainedDetector {
    Dyad(Box<DyadModel>),
    Ae(Box<AeModel>),
    Variance { channel: Channel },
}

/// Rejects anomalous vehicles; training is normal-only.
pub fn check_training_vehicles(vehicles: &[&Vehicle]) -> Result<(), DetectorError> {
    if let Some(v) = vehicles.iter().find(|v| v.is_anomalous()) {
        return Err(DetectorError::AnomalousInTraining(v.vehicle_id.clone()));
    }
    Ok(())
}

/// Train `spec` on normal vehicles.
pub fn fit(spec: &DetectorSpec, training: &[&Vehicle], seed: u64, exec: Execution) -> Result<TrainedDetector, DetectorError> {
    check_training_vehicles(training)?;
    Ok(match spec {
        DetectorSpec::Dyad(c) => TrainedDetector::Dyad(Box::new(dyad_train(training, c, seed, exec)?)),
        DetectorSpec::Ae(c) => TrainedDetector::Ae(Box::new(ae_train(training, c, seed, exec)?)),
        DetectorSpec::Variance { channel } => TrainedDetector::Variance { channel: *channel },
    })
}

impl TrainedDetector {
    pub fn score_vehicle(&self, vehicle: &Vehicle, exec: Execution) -> Result<VehicleScore, DetectorError> {
        let wrap = |scores: Vec<f64>| {
            VehicleScore::Snippets(
                vehicle
                    .snippets
                    .iter()
                    .zip(scores)
                    .map(|(s, score)| SnippetScore {
                        vehicle_id: s.vehicle_id.clone(),
                        snippet_index: s.snippet_index,
                        score,
                    })
                    .collect(),
            )
        };
        Ok(match self {
            TrainedDetector::Dyad(m) => wrap(m.score_snippets(&vehicle.snippets, exec)?),
            TrainedDetector::Ae(m) => wrap(m.score_snippets(&vehicle.snippets, exec)?),
            TrainedDetector::Variance { channel } => VehicleScore::Direct(variance_score(vehicle, *channel)?),
        })
    }

    /// Per-epoch mean training loss; empty for the statistic.
    pub fn loss_history(&self) -> &[f64] {
        match self {
            TrainedDetector::Dyad(m) => &m.loss_history,
            TrainedDetector::Ae(m) => &m.loss_history,
            TrainedDetector::Variance { .. } => &[],
        }
    }
}

/// Write `vehicle_id,snippet_index,score` rows.
pub fn write_scores_csv(path: &Path, scores: &[SnippetScore]) -> Result<(), DetectorError> {
    let mut w = csv::Writer::from_path(path)?;
    for s in scores {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

/// Scores from a writer-agnostic sink, used by the CLI for stdout.
pub fn write_scores<W: Write>(out: W, scores: &[SnippetScore]) -> Result<(), DetectorError> {
    let mut w = csv::Writer::from_writer(out);
    for s in scores {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

/// One flattened snippet per row, time-major within the row.
pub(crate) fn flatten(seqs: &[&[Row]]) -> crate::diffkit::Matrix {
    let w = seqs[0].len() * MODELED_CHANNELS.len();
    let mut x = ndarray::Array2::zeros((seqs.len(), w));
    for (b, seq) in seqs.iter().enumerate() {
        for (t, row) in seq.iter().enumerate() {
            for (j, c) in MODELED_CHANNELS.iter().enumerate() {
                x[[b, t * MODELED_CHANNELS.len() + j]] = row[c.index()];
            }
        }
    }
    x
}

/// Copy chosen channels of normalized rows into a time-major matrix block:
/// row `t·B + b`, columns `offset..offset + channels.len()`.
pub(crate) fn fill_time_major(m: &mut crate::diffkit::Matrix, seqs: &[&[Row]], channels: &[Channel], offset: usize) {
    let batch = seqs.len();
    for (b, seq) in seqs.iter().enumerate() {
        for (t, row) in seq.iter().enumerate() {
            for (j, c) in channels.iter().enumerate() {
                m[[t * batch + b, offset + j]] = row[c.index()];
            }
        }
    }
}
