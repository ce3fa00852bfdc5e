//! Capacity regression on capacity-labeled snippets.
//!
//! Three regressors share one interface: a GRU over the snippet, a
//! feed-forward network over the flattened snippet, and a closed-form ridge
//! fit on per-channel summary features. Health labels never enter this
//! module: [`CapacityDataset`] is built from labeled snippets only.

mod dataset;
mod evaluate;
mod model;
mod ridge;

pub use dataset::{CapacityDataset, CapacityVehicle};
pub use evaluate::{
    evaluate_capacity, write_predictions, write_predictions_csv, CapacityPrediction, CapacityReport, CapacityRoundReport,
    CapacityRun, CapacitySettings,
};
pub use model::{predict_capacity, train_regressor, CapacityModel, RegressorConfig, RegressorKind};
pub use ridge::{ridge_fit, ridge_residual, summary_features, RidgeFit, N_SUMMARY_FEATURES};

use thiserror::Error;

use crate::data::DataError;
use crate::diffkit::DiffError;
use crate::evalkit::EvalError;

#[derive(Debug, Error)]
pub enum CapacityError {
    #[error("snippet {vehicle_id}#{snippet_index} has no capacity label")]
    Unlabeled { vehicle_id: String, snippet_index: usize },
    #[error("no labeled snippets to train on")]
    NoTrainingData,
    #[error("round {0} has no labeled test snippets")]
    NoTestSnippets(usize),
    #[error("invalid regressor config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
