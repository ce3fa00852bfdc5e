//! Vehicle-level evaluation: robust top-h% scoring, the five-fold
//! normal-only training protocol, ROC/AUROC and RMSE.

mod folds;
mod metrics;
mod protocol;
mod report;
mod robust;
mod roc;
mod select;

pub use folds::{build_folds, build_plain_folds, FoldPlan, RoundRoles};
pub use metrics::{f1_score, mean_std, rmse, Confusion};
pub use protocol::{run_detection, DetectionRun, DetectionSettings, RoundOutcome};
pub use report::{format_mean_std, EvalReport, RoundReport};
pub use robust::{robust_vehicle_predict, robust_vehicle_score, RobustScoreParams};
pub use roc::{auroc, average_roc, roc_curve, trapezoid_area, AveragedRoc, RocPoint};
pub use select::{quantile, select_hyperparams, select_threshold, tau_candidates, Selection, DEFAULT_H_GRID, DEFAULT_TAU_LEVELS};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("vehicle has no snippets")]
    NoSnippets,
    #[error("percentile h must lie in (0, 100], got {0}")]
    InvalidPercentile(f64),
    #[error("need both classes, got {positives} positive and {negatives} negative")]
    SingleClass { positives: usize, negatives: usize },
    #[error("labels and scores differ in length ({labels} vs {scores})")]
    LengthMismatch { labels: usize, scores: usize },
    #[error("non-finite score")]
    NonFiniteScore,
    #[error("need at least {needed} {class} vehicles for {k}-fold cross-validation, got {got}")]
    InsufficientVehicles {
        class: &'static str,
        needed: usize,
        got: usize,
        k: usize,
    },
    #[error("fold count must be at least 2, got {0}")]
    InvalidFoldCount(usize),
    #[error("empty hyperparameter grid")]
    EmptyGrid,
    #[error("no curves to average")]
    NoCurves,
    #[error("fold plan invariant violated: {0}")]
    PlanInvariant(String),
    #[error(transparent)]
    Detector(#[from] crate::detectors::DetectorError),
}
