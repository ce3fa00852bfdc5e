//! Battery charging-snippet analytics.
//!
//! The crate covers the whole pipeline for vehicle-level battery anomaly
//! detection and capacity estimation on fixed-length charging snippets:
//!
//! - [`data`]: snippet/vehicle model, sliding windows, normalization, JSON-Lines IO.
//! - [`synthgen`]: CC-CV charging simulator, fault injection, capacity labels, anonymization.
//! - [`diffkit`]: dense/GRU layers with exact backward passes, VAE pieces, Adam.
//! - [`detectors`]: DyAD, a feed-forward autoencoder and the variance statistic.
//! - [`evalkit`]: robust top-h% vehicle scoring, five-fold protocol, ROC/AUROC, RMSE.
//! - [`capacity`]: recurrent, feed-forward and ridge capacity regressors.
//!
//! Data-parallel loops go through [`exec::Execution`]; with the `parallel`
//! feature they run on rayon, otherwise sequentially. Both paths reduce in the
//! same fixed order and produce bit-identical results.

// Validation uses `!(x > 0.0)` on purpose: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod capacity;
pub mod data;
pub mod detectors;
pub mod diffkit;
pub mod evalkit;
pub mod exec;
pub mod seed;
pub mod synthgen;

mod error;

pub use error::{Error, Result};
