use serde::{Deserialize, Serialize};

use super::{ChargingSnippet, DataError, Row, N_CHANNELS};

/// Floor applied to every fitted standard deviation.
pub const NORM_EPSILON: f64 = 1e-6;

/// Per-channel z-scoring statistics (population standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: [f64; N_CHANNELS],
    pub std: [f64; N_CHANNELS],
    pub epsilon: f64,
}

impl NormStats {
    /// Fit over every row of every snippet.
    pub fn fit<'a, I>(snippets: I) -> Result<Self, DataError>
    where
        I: IntoIterator<Item = &'a ChargingSnippet>,
    {
        Self::fit_rows(snippets.into_iter().flat_map(|s| s.series.iter()))
    }

    pub fn fit_rows<'a, I>(rows: I) -> Result<Self, DataError>
    where
        I: IntoIterator<Item = &'a Row>,
    {
        // Welford, one accumulator per channel.
        let mut n = 0u64;
        let mut mean = [0.0; N_CHANNELS];
        let mut m2 = [0.0; N_CHANNELS];
        for row in rows {
            n += 1;
            for c in 0..N_CHANNELS {
                let d = row[c] - mean[c];
                mean[c] += d / n as f64;
                m2[c] += d * (row[c] - mean[c]);
            }
        }
        if n == 0 {
            return Err(DataError::NoTrainingData);
        }
        let mut std = [0.0; N_CHANNELS];
        for c in 0..N_CHANNELS {
            std[c] = (m2[c] / n as f64).sqrt().max(NORM_EPSILON);
        }
        Ok(NormStats {
            mean,
            std,
            epsilon: NORM_EPSILON,
        })
    }

    pub fn normalize_row(&self, row: &Row) -> Row {
        let mut out = [0.0; N_CHANNELS];
        for c in 0..N_CHANNELS {
            out[c] = (row[c] - self.mean[c]) / self.std[c];
        }
        out
    }

    pub fn denormalize_row(&self, row: &Row) -> Row {
        let mut out = [0.0; N_CHANNELS];
        for c in 0..N_CHANNELS {
            out[c] = row[c] * self.std[c] + self.mean[c];
        }
        out
    }

    /// z-score a snippet's series.
    pub fn apply(&self, snippet: &ChargingSnippet) -> Vec<Row> {
        snippet.series.iter().map(|r| self.normalize_row(r)).collect()
    }

    pub fn invert(&self, normalized: &[Row]) -> Vec<Row> {
        normalized.iter().map(|r| self.denormalize_row(r)).collect()
    }

    /// Normalize a single value of channel `c`.
    pub fn normalize_value(&self, c: usize, v: f64) -> f64 {
        (v - self.mean[c]) / self.std[c]
    }
}
