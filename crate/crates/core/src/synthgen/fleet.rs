use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    anonymize, capacity_label, simulate_charge, AnonymizeConfig, BatteryState, ChargeProtocol, LabelWindow, OcvCurve,
    Ripple, SynthError,
};
use crate::data::{extract_snippets, Channel, ChargingRecord, ChargingSnippet, HealthLabel, Row, Vehicle, SNIPPET_LEN};
use crate::exec::Execution;
use crate::seed;

/// Range the healthy capacity labels are spread over (A·h).
pub const CAPACITY_BAND: (f64, f64) = (28.28, 46.23);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    /// Internal resistance grows by `1.5 × severity × 100 %`.
    ResistanceDrift,
    /// Bursts of zero-mean noise on all cell-voltage channels.
    VoltageFluctuation,
    /// Capacity fades (and resistance rises) record by record.
    AcceleratedFade,
    /// Max-min cell voltage and temperature spreads widen.
    CellImbalance,
}

impl FaultKind {
    pub const ALL: [FaultKind; 4] = [
        FaultKind::ResistanceDrift,
        FaultKind::VoltageFluctuation,
        FaultKind::AcceleratedFade,
        FaultKind::CellImbalance,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub kind: FaultKind,
    /// In (0, 1].
    pub severity: f64,
    /// Fraction of the vehicle's lifetime after which the fault shows.
    pub onset_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub seed: u64,
    pub n_normal: usize,
    pub n_anomalous: usize,
    /// Records per vehicle; ignored when `snippets_per_vehicle` is set.
    pub records_per_vehicle: usize,
    /// When set, records are generated until a vehicle has exactly this many snippets.
    pub snippets_per_vehicle: Option<usize>,
    pub stride: usize,
    /// Seconds between samples.
    pub sample_period: f64,
    /// Probability that a record is cut short (owner unplugs early).
    pub truncation_probability: f64,
    /// Measurement-noise standard deviation per channel, in channel order.
    /// SOC and timestamp entries are ignored so their monotonicity survives.
    pub noise_std: [f64; 8],
    pub anonymize: bool,
    pub anonymize_amplitude: f64,
    pub fault_severity: f64,
    /// Fraction of an anomalous vehicle's lifetime (the final stretch) in which its fault shows.
    pub transient_fraction: f64,
    /// Fault kinds dealt round-robin to anomalous vehicles.
    pub fault_kinds: Vec<FaultKind>,
    /// Probability that a record's CC phase carries charger-side current ripple.
    pub ripple_probability: f64,
    /// Probability that a record charges at the label reference current.
    pub reference_current_probability: f64,
    pub label_window: LabelWindow,
    pub capacity_band: (f64, f64),
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 42,
            n_normal: 20,
            n_anomalous: 5,
            records_per_vehicle: 20,
            snippets_per_vehicle: None,
            stride: crate::data::DEFAULT_STRIDE,
            sample_period: 10.0,
            truncation_probability: 0.2,
            noise_std: [0.002, 0.2, 0.002, 0.002, 0.1, 0.1, 0.0, 0.0],
            anonymize: false,
            anonymize_amplitude: 0.005,
            fault_severity: 0.6,
            transient_fraction: 0.3,
            fault_kinds: FaultKind::ALL.to_vec(),
            ripple_probability: 0.25,
            reference_current_probability: 0.6,
            label_window: LabelWindow::default(),
            capacity_band: CAPACITY_BAND,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        for (name, p) in [
            ("truncation_probability", self.truncation_probability),
            ("ripple_probability", self.ripple_probability),
            ("reference_current_probability", self.reference_current_probability),
            ("anonymize_amplitude", self.anonymize_amplitude),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1]"));
            }
        }
        if !(self.fault_severity > 0.0 && self.fault_severity <= 1.0) {
            return bad("fault_severity must lie in (0, 1]".into());
        }
        if !(self.transient_fraction > 0.0 && self.transient_fraction <= 1.0) {
            return bad("transient_fraction must lie in (0, 1]".into());
        }
        if self.n_anomalous > 0 && self.fault_kinds.is_empty() {
            return bad("fault_kinds must not be empty".into());
        }
        if self.stride == 0 || !(self.sample_period > 0.0) {
            return bad("stride and sample_period must be positive".into());
        }
        if self.noise_std.iter().any(|s| !(*s >= 0.0)) {
            return bad("noise_std entries must be >= 0".into());
        }
        if !(self.capacity_band.0 > 0.0 && self.capacity_band.1 > self.capacity_band.0) {
            return bad("capacity_band must be an increasing positive range".into());
        }
        Ok(())
    }

    pub fn fault_for(&self, anomalous_index: usize) -> FaultSpec {
        FaultSpec {
            kind: self.fault_kinds[anomalous_index % self.fault_kinds.len()],
            severity: self.fault_severity,
            onset_fraction: 1.0 - self.transient_fraction,
        }
    }
}

/// Generator-side ground truth for one vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleTruth {
    pub fault: Option<FaultSpec>,
    /// Per snippet: does the fault show in it?
    pub manifest: Vec<bool>,
    pub nominal_capacity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedFleet {
    pub vehicles: Vec<Vehicle>,
    pub truth: Vec<VehicleTruth>,
}

/// Generate a labeled fleet (normal vehicles first, then anomalous ones).
pub fn generate_fleet(config: &GenConfig) -> Result<Vec<Vehicle>, SynthError> {
    Ok(generate_fleet_with(config, Execution::default())?.vehicles)
}

/// Generate a fleet plus its ground truth. Vehicles are independent given
/// their sub-seeds, so `exec` does not change the output.
pub fn generate_fleet_with(config: &GenConfig, exec: Execution) -> Result<GeneratedFleet, SynthError> {
    config.validate()?;
    let n = config.n_normal + config.n_anomalous;
    let results = exec.map_range(n, |i| {
        let fault = (i >= config.n_normal).then(|| config.fault_for(i - config.n_normal));
        generate_vehicle(config, i, fault)
    });
    let mut vehicles = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for r in results {
        let (v, t) = r?;
        vehicles.push(v);
        truth.push(t);
    }
    if config.anonymize {
        vehicles = anonymize(
            &vehicles,
            &AnonymizeConfig {
                seed: seed::derive(config.seed, seed::streams::ANONYMIZE),
                amplitude_fraction: config.anonymize_amplitude,
                ..Default::default()
            },
        );
    }
    Ok(GeneratedFleet { vehicles, truth })
}

/// Fraction of effective capacity charged between the label voltages at the
/// reference current, for a cell with resistance `r`.
fn label_fraction(ocv: &OcvCurve, r: f64, w: &LabelWindow) -> f64 {
    (ocv.soc_at(w.v_high - w.i_ref * r) - ocv.soc_at(w.v_low - w.i_ref * r)) / 100.0
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

struct VehicleTraits {
    resistance: f64,
    nominal_capacity: f64,
    temperature_base: f64,
    cell_spread: f64,
    temp_spread: f64,
    thermal_tau: f64,
    heat_gain: f64,
    /// Current of the charger this vehicle usually uses off the reference.
    home_current: f64,
}

fn draw_traits(rng: &mut ChaCha8Rng, config: &GenConfig) -> VehicleTraits {
    let ocv = OcvCurve::default();
    let resistance = rng.random_range(0.0025..0.0035);
    let (lo, hi) = config.capacity_band;
    let inset = 0.1 * (hi - lo);
    let target = rng.random_range(lo + inset..hi - inset);
    let nominal_capacity = target / label_fraction(&ocv, resistance, &config.label_window);
    VehicleTraits {
        resistance,
        nominal_capacity,
        temperature_base: rng.random_range(10.0..30.0),
        cell_spread: rng.random_range(0.008..0.014),
        temp_spread: rng.random_range(1.0..2.0),
        thermal_tau: rng.random_range(1500.0..2500.0),
        heat_gain: rng.random_range(0.3e-3..0.5e-3),
        home_current: rng.random_range(15.0..60.0),
    }
}

/// Seconds of CV current decay per ohm of internal resistance.
const CV_TAU_PER_OHM: f64 = 2.5e5;
/// Capacity lost by a healthy vehicle over its whole lifetime.
const NORMAL_LIFETIME_FADE: f64 = 0.04;

fn generate_vehicle(
    config: &GenConfig,
    index: usize,
    fault: Option<FaultSpec>,
) -> Result<(Vehicle, VehicleTruth), SynthError> {
    let mut rng = seed::rng(seed::derive_indexed(config.seed, seed::streams::VEHICLE, index as u64));
    let id = format!("veh-{index:03}");
    let traits = draw_traits(&mut rng, config);
    let mut snippets: Vec<ChargingSnippet> = Vec::new();
    let mut manifest: Vec<bool> = Vec::new();
    let mut clock = rng.random_range(1.6e9..1.7e9);
    let mut odometer = rng.random_range(1_000.0..30_000.0);

    let target = config.snippets_per_vehicle;
    let max_records = match target {
        Some(t) => 50 * t.max(1),
        None => config.records_per_vehicle,
    };
    for k in 0..max_records {
        let progress = match target {
            Some(t) => snippets.len() as f64 / t.max(1) as f64,
            None => k as f64 / config.records_per_vehicle.max(1) as f64,
        };
        if target.is_some_and(|t| snippets.len() >= t) {
            break;
        }
        let active = fault.filter(|f| progress >= f.onset_fraction);
        let rows = simulate_record(config, &traits, &mut rng, progress, active, clock)?;
        let duration = rows.last().map(|r| r[7] - rows[0][7]).unwrap_or(0.0);
        let label = capacity_label(&rows, &config.label_window);
        let record = ChargingRecord {
            vehicle_id: id.clone(),
            mileage: odometer,
            series: rows,
            capacity_label: label,
        };
        for mut s in extract_snippets(&record, SNIPPET_LEN, config.stride)? {
            s.snippet_index = snippets.len();
            snippets.push(s);
            manifest.push(active.is_some());
        }
        clock += duration + rng.random_range(0.5..3.0) * 86_400.0;
        odometer += rng.random_range(50.0..400.0);
    }
    if let Some(t) = target {
        snippets.truncate(t);
        manifest.truncate(t);
    }
    let vehicle = Vehicle {
        vehicle_id: id,
        health_label: if fault.is_some() { HealthLabel::Anomalous } else { HealthLabel::Normal },
        snippets,
    };
    let truth = VehicleTruth {
        fault,
        manifest,
        nominal_capacity: traits.nominal_capacity,
    };
    Ok((vehicle, truth))
}

fn simulate_record(
    config: &GenConfig,
    traits: &VehicleTraits,
    rng: &mut ChaCha8Rng,
    progress: f64,
    fault: Option<FaultSpec>,
    clock: f64,
) -> Result<Vec<Row>, SynthError> {
    let ambient = traits.temperature_base + rng.random_range(-3.0..3.0);
    let mut state = BatteryState {
        nominal_capacity: traits.nominal_capacity,
        fade_fraction: NORMAL_LIFETIME_FADE * progress.min(1.0),
        internal_resistance: traits.resistance * (1.0 + 0.1 * progress.min(1.0)),
        ocv_curve: OcvCurve::default(),
        temperature_base: ambient,
        cell_spread: traits.cell_spread,
        temp_spread: traits.temp_spread,
        thermal_tau: traits.thermal_tau,
        heat_gain: traits.heat_gain,
        cv_tau: 1.0,
    };
    if let Some(f) = fault {
        match f.kind {
            FaultKind::ResistanceDrift => state.internal_resistance *= 1.0 + 1.5 * f.severity,
            FaultKind::AcceleratedFade => {
                let ramp = ((progress - f.onset_fraction) / (1.0 - f.onset_fraction).max(1e-9)).clamp(0.0, 1.0);
                let extra = f.severity * 0.3 * (0.3 + 0.7 * ramp);
                state.fade_fraction = (state.fade_fraction + extra).min(0.9);
                state.internal_resistance *= 1.0 + extra;
            }
            FaultKind::CellImbalance => {
                state.cell_spread *= 1.0 + 4.0 * f.severity;
                state.temp_spread *= 1.0 + f.severity;
            }
            FaultKind::VoltageFluctuation => {}
        }
    }
    state.cv_tau = CV_TAU_PER_OHM * state.internal_resistance;

    let cc_current = if rng.random_bool(config.reference_current_probability) {
        config.label_window.i_ref
    } else {
        traits.home_current * rng.random_range(0.85..1.15)
    };
    let ripple = rng.random_bool(config.ripple_probability).then(|| Ripple {
        amplitude: rng.random_range(0.1..0.3),
        period: rng.random_range(200.0..900.0),
    });
    let initial_soc = rng.random_range(8.0..45.0);
    let protocol = ChargeProtocol {
        precharge_current: 5.0,
        cc_current,
        cv_voltage: 4.15,
        dt: config.sample_period,
        initial_soc,
        precharge_soc: initial_soc + rng.random_range(0.5..1.5),
        cutoff_fraction: 0.05,
        start_time: clock,
        initial_temperature: ambient + rng.random_range(0.0..2.0),
        ripple,
        max_steps: 20_000,
    };
    let mut rows = simulate_charge(&state, &protocol)?;

    // The BMS counts charge against the nameplate capacity, so a faded
    // pack's reported SOC lags the true SOC that sets its voltage.
    let soc = Channel::Soc.index();
    let soc0 = rows[0][soc];
    let kept = 1.0 - state.fade_fraction;
    for row in &mut rows {
        row[soc] = soc0 + (row[soc] - soc0) * kept;
    }

    match fault.map(|f| (f.kind, f.severity)) {
        Some((FaultKind::VoltageFluctuation, sev)) => {
            // Loose-contact bursts: correlated noise on every voltage channel.
            let n = rows.len();
            let bursts = rng.random_range(2..=4);
            for _ in 0..bursts {
                let len = rng.random_range(40..=120usize).min(n);
                let start = rng.random_range(0..=n - len);
                let sigma = sev * 0.1;
                let mut e = sigma * gauss(rng);
                for row in &mut rows[start..start + len] {
                    e = 0.8 * e + 0.6 * sigma * gauss(rng);
                    for c in [Channel::AvgCellVoltage, Channel::MaxCellVoltage, Channel::MinCellVoltage] {
                        row[c.index()] += e;
                    }
                }
            }
        }
        Some((FaultKind::CellImbalance, sev)) => {
            // A weak cell runs ahead of the pack as charge accumulates.
            let mx = Channel::MaxCellVoltage.index();
            for row in &mut rows {
                row[mx] += sev * 0.1 * row[soc] / 100.0;
            }
        }
        _ => {}
    }

    add_measurement_noise(&mut rows, &config.noise_std, rng);

    if rng.random_bool(config.truncation_probability) {
        let keep = (rows.len() as f64 * rng.random_range(0.3..0.9)) as usize;
        rows.truncate(keep.max(1));
    }
    Ok(rows)
}

fn add_measurement_noise(rows: &mut [Row], std: &[f64; 8], rng: &mut ChaCha8Rng) {
    use Channel::*;
    let (av, cu, mx, mn, tx, tn) = (
        AvgCellVoltage.index(),
        Current.index(),
        MaxCellVoltage.index(),
        MinCellVoltage.index(),
        MaxTemp.index(),
        MinTemp.index(),
    );
    for r in rows {
        let hi = r[mx] - r[av];
        let lo = r[av] - r[mn];
        let v = r[av] + std[av] * gauss(rng);
        r[av] = v;
        r[mx] = v + (hi + std[mx] * gauss(rng)).max(0.0);
        r[mn] = v - (lo + std[mn] * gauss(rng)).max(0.0);
        r[cu] += std[cu] * gauss(rng);
        // Temperatures: shared offset on the mean, independent spread noise.
        let t_hi = 0.6 * (r[tx] - r[tn]);
        let t_lo = 0.4 * (r[tx] - r[tn]);
        let base = r[tx] - t_hi + 0.5 * (std[tx] + std[tn]) * gauss(rng);
        r[tx] = base + (t_hi + 0.25 * std[tx] * gauss(rng)).max(0.0);
        r[tn] = base - (t_lo + 0.25 * std[tn] * gauss(rng)).max(0.0);
    }
}
