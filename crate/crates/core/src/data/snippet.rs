use serde::{Deserialize, Serialize};

use super::DataError;

/// Rows per charging snippet.
pub const SNIPPET_LEN: usize = 128;
/// Channels per row.
pub const N_CHANNELS: usize = 8;
/// Default sliding-window stride (half-window overlap).
pub const DEFAULT_STRIDE: usize = 64;

/// One sample of the eight charging channels, in [`Channel`] order.
pub type Row = [f64; N_CHANNELS];

/// Channel positions inside a [`Row`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    /// Average cell voltage (V).
    AvgCellVoltage = 0,
    /// Charging current (A).
    Current = 1,
    MaxCellVoltage = 2,
    MinCellVoltage = 3,
    /// Maximum cell temperature (°C).
    MaxTemp = 4,
    MinTemp = 5,
    /// State of charge (percent).
    Soc = 6,
    /// Seconds.
    Timestamp = 7,
}

impl Channel {
    pub const ALL: [Channel; N_CHANNELS] = [
        Channel::AvgCellVoltage,
        Channel::Current,
        Channel::MaxCellVoltage,
        Channel::MinCellVoltage,
        Channel::MaxTemp,
        Channel::MinTemp,
        Channel::Soc,
        Channel::Timestamp,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Channel> {
        Channel::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::AvgCellVoltage => "avg_cell_voltage",
            Channel::Current => "current",
            Channel::MaxCellVoltage => "max_cell_voltage",
            Channel::MinCellVoltage => "min_cell_voltage",
            Channel::MaxTemp => "max_temp",
            Channel::MinTemp => "min_temp",
            Channel::Soc => "soc",
            Channel::Timestamp => "timestamp",
        }
    }
}

/// Channels fed to models. Timestamps are stored but never modeled.
pub const MODELED_CHANNELS: [Channel; 7] = [
    Channel::AvgCellVoltage,
    Channel::Current,
    Channel::MaxCellVoltage,
    Channel::MinCellVoltage,
    Channel::MaxTemp,
    Channel::MinTemp,
    Channel::Soc,
];

/// Vehicle-level health label; 1 marks an abnormal battery system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum HealthLabel {
    Normal,
    Anomalous,
}

impl HealthLabel {
    pub fn is_anomalous(self) -> bool {
        self == HealthLabel::Anomalous
    }

    pub fn as_u8(self) -> u8 {
        self.into()
    }
}

impl From<HealthLabel> for u8 {
    fn from(l: HealthLabel) -> u8 {
        match l {
            HealthLabel::Normal => 0,
            HealthLabel::Anomalous => 1,
        }
    }
}

impl TryFrom<u8> for HealthLabel {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            0 => Ok(HealthLabel::Normal),
            1 => Ok(HealthLabel::Anomalous),
            other => Err(format!("health label must be 0 or 1, got {other}")),
        }
    }
}

/// A fixed-length window of one charging record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargingSnippet {
    pub vehicle_id: String,
    pub snippet_index: usize,
    /// Kilometers.
    pub mileage: f64,
    pub series: Vec<Row>,
    /// A·h, present only for snippets of eligible records.
    pub capacity_label: Option<f64>,
}

impl ChargingSnippet {
    /// Build a snippet, checking every row-level invariant.
    pub fn new(
        vehicle_id: impl Into<String>,
        snippet_index: usize,
        mileage: f64,
        series: Vec<Row>,
        capacity_label: Option<f64>,
    ) -> Result<Self, DataError> {
        let s = ChargingSnippet {
            vehicle_id: vehicle_id.into(),
            snippet_index,
            mileage,
            series,
            capacity_label,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn channel(&self, c: Channel) -> impl Iterator<Item = f64> + '_ {
        self.series.iter().map(move |r| r[c.index()])
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.series.len() != SNIPPET_LEN {
            return Err(DataError::WrongLength(self.series.len()));
        }
        let fail = |row: usize, what: &'static str| DataError::Invariant {
            vehicle_id: self.vehicle_id.clone(),
            snippet_index: self.snippet_index,
            row,
            what,
        };
        if !(self.mileage >= 0.0 && self.mileage.is_finite()) {
            return Err(fail(0, "mileage must be finite and non-negative"));
        }
        use Channel::*;
        for (i, r) in self.series.iter().enumerate() {
            if r.iter().any(|v| !v.is_finite()) {
                return Err(fail(i, "non-finite value"));
            }
            let avg = r[AvgCellVoltage.index()];
            if !(r[MinCellVoltage.index()] <= avg && avg <= r[MaxCellVoltage.index()]) {
                return Err(fail(i, "min_cell_voltage <= avg_cell_voltage <= max_cell_voltage"));
            }
            if r[MinTemp.index()] > r[MaxTemp.index()] {
                return Err(fail(i, "min_temp <= max_temp"));
            }
            let soc = r[Soc.index()];
            if !(0.0..=100.0).contains(&soc) {
                return Err(fail(i, "soc in [0, 100]"));
            }
            if i > 0 {
                let p = &self.series[i - 1];
                if soc < p[Soc.index()] {
                    return Err(fail(i, "soc non-decreasing"));
                }
                if r[Timestamp.index()] <= p[Timestamp.index()] {
                    return Err(fail(i, "timestamps strictly increasing"));
                }
            }
        }
        Ok(())
    }
}

/// A labeled vehicle: one health label for all of its snippets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub vehicle_id: String,
    pub health_label: HealthLabel,
    pub snippets: Vec<ChargingSnippet>,
}

impl Vehicle {
    pub fn validate(&self) -> Result<(), DataError> {
        for s in &self.snippets {
            if s.vehicle_id != self.vehicle_id {
                return Err(DataError::Vehicle {
                    vehicle_id: self.vehicle_id.clone(),
                    what: format!("snippet {} carries vehicle_id {}", s.snippet_index, s.vehicle_id),
                });
            }
            s.validate()?;
        }
        Ok(())
    }

    pub fn is_anomalous(&self) -> bool {
        self.health_label.is_anomalous()
    }
}

/// A complete, variable-length charging record before windowing.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargingRecord {
    pub vehicle_id: String,
    pub mileage: f64,
    pub series: Vec<Row>,
    /// Record-level capacity label, copied onto every snippet of the record.
    pub capacity_label: Option<f64>,
}

/// Cut `record` into `window`-row snippets every `stride` rows.
///
/// Returns `floor((len - window) / stride) + 1` snippets indexed from 0, or
/// none when the record is shorter than one window.
pub fn extract_snippets(
    record: &ChargingRecord,
    window: usize,
    stride: usize,
) -> Result<Vec<ChargingSnippet>, DataError> {
    if window != SNIPPET_LEN {
        return Err(DataError::InvalidWindow(window));
    }
    if stride == 0 {
        return Err(DataError::InvalidStride);
    }
    let ts = Channel::Timestamp.index();
    for (i, w) in record.series.windows(2).enumerate() {
        if w[1][ts] <= w[0][ts] {
            return Err(DataError::NonMonotoneTimestamps {
                row: i + 1,
                prev: w[0][ts],
                next: w[1][ts],
            });
        }
    }
    if record.series.len() < window {
        return Ok(Vec::new());
    }
    let count = (record.series.len() - window) / stride + 1;
    (0..count)
        .map(|k| {
            let start = k * stride;
            ChargingSnippet::new(
                record.vehicle_id.clone(),
                k,
                record.mileage,
                record.series[start..start + window].to_vec(),
                record.capacity_label,
            )
        })
        .collect()
}
