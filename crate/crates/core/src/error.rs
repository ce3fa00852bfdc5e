use thiserror::Error;

use crate::{capacity, data, detectors, diffkit, evalkit, synthgen};

/// Crate-level error, wrapping each module's own error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] data::DataError),
    #[error(transparent)]
    Synth(#[from] synthgen::SynthError),
    #[error(transparent)]
    Diff(#[from] diffkit::DiffError),
    #[error(transparent)]
    Detector(#[from] detectors::DetectorError),
    #[error(transparent)]
    Eval(#[from] evalkit::EvalError),
    #[error(transparent)]
    Capacity(#[from] capacity::CapacityError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
