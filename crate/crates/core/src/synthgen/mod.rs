//! Synthetic EV fleets.
//!
//! A small equivalent-circuit cell is charged with a pre-charge / CC / CV
//! protocol, faults are injected into a late block of an anomalous vehicle's
//! records, records are windowed into snippets, and capacity labels are
//! computed by integrating current between two voltage crossings.

mod anonymize;
mod battery;
mod fleet;
mod label;

pub use anonymize::{anonymize, AnonymizeConfig, VehicleTransform};
pub use battery::{simulate_charge, BatteryState, ChargeProtocol, OcvCurve, Ripple};
pub use fleet::{generate_fleet, generate_fleet_with, FaultKind, FaultSpec, GenConfig, GeneratedFleet, VehicleTruth, CAPACITY_BAND};
pub use label::{capacity_label, LabelWindow};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("unreachable setpoint: cv voltage {cv_voltage} V is below the starting OCV {start_ocv} V")]
    UnreachableSetpoint { cv_voltage: f64, start_ocv: f64 },
    #[error("invalid battery state: {0}")]
    InvalidState(String),
    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
}
