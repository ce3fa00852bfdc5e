use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Channel, ChargingRecord, ChargingSnippet, Row, Vehicle, N_CHANNELS};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnonymizeConfig {
    pub seed: u64,
    /// Perturbation standard deviation as a fraction of each channel group's
    /// fleet-wide dynamic range.
    pub amplitude_fraction: f64,
    /// Rows between perturbation knots; values in between are interpolated.
    pub knot_spacing: usize,
    /// Per-vehicle timestamp shifts are drawn from `[0, max_time_shift)` s.
    pub max_time_shift: f64,
    /// Per-vehicle mileage scales are drawn from this range.
    pub mileage_scale: (f64, f64),
}

impl Default for AnonymizeConfig {
    fn default() -> Self {
        AnonymizeConfig {
            seed: 0,
            amplitude_fraction: 0.005,
            knot_spacing: 8,
            max_time_shift: 3.0e7,
            mileage_scale: (0.8, 1.25),
        }
    }
}

/// Channels that move together: one perturbation per group keeps
/// min <= avg <= max orderings intact.
const GROUPS: [&[Channel]; 3] = [
    &[Channel::AvgCellVoltage, Channel::MaxCellVoltage, Channel::MinCellVoltage],
    &[Channel::Current],
    &[Channel::MaxTemp, Channel::MinTemp],
];

/// Per-vehicle affine remapping of timestamps and mileage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleTransform {
    pub time_shift: f64,
    pub mileage_scale: f64,
}

impl VehicleTransform {
    pub fn apply_rows(&self, rows: &mut [Row]) {
        let ts = Channel::Timestamp.index();
        for r in rows {
            r[ts] += self.time_shift;
        }
    }

    pub fn apply_snippet(&self, s: &mut ChargingSnippet) {
        self.apply_rows(&mut s.series);
        s.mileage *= self.mileage_scale;
    }

    pub fn apply_record(&self, r: &mut ChargingRecord) {
        self.apply_rows(&mut r.series);
        r.mileage *= self.mileage_scale;
    }
}

fn fleet_ranges(vehicles: &[Vehicle]) -> [f64; N_CHANNELS] {
    let mut lo = [f64::INFINITY; N_CHANNELS];
    let mut hi = [f64::NEG_INFINITY; N_CHANNELS];
    for r in vehicles.iter().flat_map(|v| v.snippets.iter()).flat_map(|s| s.series.iter()) {
        for c in 0..N_CHANNELS {
            lo[c] = lo[c].min(r[c]);
            hi[c] = hi[c].max(r[c]);
        }
    }
    let mut out = [0.0; N_CHANNELS];
    for c in 0..N_CHANNELS {
        out[c] = if hi[c] > lo[c] { hi[c] - lo[c] } else { 0.0 };
    }
    out
}

/// Smooth zero-mean noise: Gaussian knots every `spacing` rows, linearly
/// interpolated in between.
fn knot_noise(rng: &mut impl Rng, n: usize, spacing: usize, sigma: f64) -> Vec<f64> {
    let spacing = spacing.max(1);
    let n_knots = (n - 1) / spacing + 2;
    let knots: Vec<f64> = (0..n_knots).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect();
    (0..n)
        .map(|i| {
            let k = i / spacing;
            let w = (i % spacing) as f64 / spacing as f64;
            knots[k] * (1.0 - w) + knots[k + 1] * w
        })
        .collect()
}

/// Perturb value channels, shift timestamps and scale mileage.
///
/// Labels, SOC and snippet order are untouched. Each vehicle draws its own
/// stream from `config.seed` and its position in the fleet.
pub fn anonymize(vehicles: &[Vehicle], config: &AnonymizeConfig) -> Vec<Vehicle> {
    let ranges = fleet_ranges(vehicles);
    vehicles
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut rng = seed::rng(seed::derive_indexed(config.seed, seed::streams::ANONYMIZE, i as u64));
            let transform = VehicleTransform {
                time_shift: rng.random_range(0.0..config.max_time_shift.max(f64::MIN_POSITIVE)),
                mileage_scale: rng.random_range(config.mileage_scale.0..=config.mileage_scale.1),
            };
            let snippets = v
                .snippets
                .iter()
                .map(|s| {
                    let mut s = s.clone();
                    for group in GROUPS {
                        let sigma = config.amplitude_fraction * ranges[group[0].index()];
                        let noise = knot_noise(&mut rng, s.series.len(), config.knot_spacing, sigma);
                        for (row, e) in s.series.iter_mut().zip(&noise) {
                            for c in group {
                                row[c.index()] += e;
                            }
                        }
                    }
                    transform.apply_snippet(&mut s);
                    s
                })
                .collect();
            Vehicle {
                vehicle_id: v.vehicle_id.clone(),
                health_label: v.health_label,
                snippets,
            }
        })
        .collect()
}
