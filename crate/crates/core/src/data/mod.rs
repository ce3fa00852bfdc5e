//! Canonical charging-snippet data model.

mod io;
mod normalize;
mod snippet;
mod stats;

pub use io::{read_dataset, read_manifest, write_dataset, Manifest, ManifestEntry, SnippetRecord, DATASET_FILE, MANIFEST_FILE};
pub use normalize::{NormStats, NORM_EPSILON};
pub use snippet::{
    extract_snippets, Channel, ChargingRecord, ChargingSnippet, HealthLabel, Row, Vehicle,
    DEFAULT_STRIDE, MODELED_CHANNELS, N_CHANNELS, SNIPPET_LEN,
};
pub use stats::{dataset_stats, DatasetStats};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("window must be {SNIPPET_LEN}, got {0}")]
    InvalidWindow(usize),
    #[error("stride must be positive")]
    InvalidStride,
    #[error("timestamps not strictly increasing at row {row} ({prev} -> {next})")]
    NonMonotoneTimestamps { row: usize, prev: f64, next: f64 },
    #[error("snippet has {0} rows, expected {SNIPPET_LEN}")]
    WrongLength(usize),
    #[error("snippet {vehicle_id}#{snippet_index} violates invariant at row {row}: {what}")]
    Invariant {
        vehicle_id: String,
        snippet_index: usize,
        row: usize,
        what: &'static str,
    },
    #[error("vehicle {vehicle_id}: {what}")]
    Vehicle { vehicle_id: String, what: String },
    #[error("no training data")]
    NoTrainingData,
    #[error("dataset line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("dataset is inconsistent: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
