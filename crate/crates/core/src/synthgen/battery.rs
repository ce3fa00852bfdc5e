use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::data::{Channel, Row, N_CHANNELS};

/// Piecewise-linear open-circuit voltage as a function of SOC (percent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcvCurve {
    knots: Vec<(f64, f64)>,
}

impl Default for OcvCurve {
    /// Six knots from (0 %, 3.40 V) to (100 %, 4.20 V).
    fn default() -> Self {
        OcvCurve {
            knots: vec![(0.0, 3.40), (20.0, 3.60), (40.0, 3.72), (60.0, 3.85), (80.0, 4.00), (100.0, 4.20)],
        }
    }
}

impl OcvCurve {
    /// Knots must be strictly increasing in both SOC and voltage.
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self, SynthError> {
        if knots.len() < 2 {
            return Err(SynthError::InvalidState("ocv curve needs at least two knots".into()));
        }
        if knots.windows(2).any(|w| !(w[1].0 > w[0].0 && w[1].1 > w[0].1)) {
            return Err(SynthError::InvalidState("ocv curve must be strictly increasing".into()));
        }
        Ok(OcvCurve { knots })
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn min_voltage(&self) -> f64 {
        self.knots[0].1
    }

    pub fn max_voltage(&self) -> f64 {
        self.knots[self.knots.len() - 1].1
    }

    /// OCV at `soc`, clamped to the curve's end points.
    pub fn voltage(&self, soc: f64) -> f64 {
        interp(&self.knots, soc, |k| k.0, |k| k.1)
    }

    /// SOC at which the OCV equals `v`, clamped to the curve's end points.
    pub fn soc_at(&self, v: f64) -> f64 {
        interp(&self.knots, v, |k| k.1, |k| k.0)
    }
}

fn interp(knots: &[(f64, f64)], x: f64, fx: impl Fn(&(f64, f64)) -> f64, fy: impl Fn(&(f64, f64)) -> f64) -> f64 {
    let first = &knots[0];
    let last = &knots[knots.len() - 1];
    if x <= fx(first) {
        return fy(first);
    }
    if x >= fx(last) {
        return fy(last);
    }
    let i = knots.partition_point(|k| fx(k) <= x);
    let (a, b) = (&knots[i - 1], &knots[i]);
    let w = (x - fx(a)) / (fx(b) - fx(a));
    fy(a) + w * (fy(b) - fy(a))
}

/// Equivalent-circuit stand-in for one cell of a pack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryState {
    /// A·h.
    pub nominal_capacity: f64,
    /// Fraction of nominal capacity lost, in [0, 1).
    pub fade_fraction: f64,
    /// Ohm.
    pub internal_resistance: f64,
    pub ocv_curve: OcvCurve,
    /// Ambient temperature the pack relaxes to (°C).
    pub temperature_base: f64,
    /// Max-minus-min cell voltage spread at full current (V).
    pub cell_spread: f64,
    /// Max-minus-min cell temperature spread (°C).
    pub temp_spread: f64,
    /// First-order thermal time constant (s).
    pub thermal_tau: f64,
    /// Heating per watt of I²R loss (°C / (W·s)).
    pub heat_gain: f64,
    /// Time constant of the CV-phase current decay (s).
    pub cv_tau: f64,
}

impl BatteryState {
    /// A·h available after fade.
    pub fn effective_capacity(&self) -> f64 {
        self.nominal_capacity * (1.0 - self.fade_fraction)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidState(m.into()));
        if !(self.internal_resistance >= 0.0) {
            return bad("internal_resistance must be >= 0");
        }
        if !(0.0..1.0).contains(&self.fade_fraction) || !(self.effective_capacity() > 0.0) {
            return bad("effective capacity must be positive");
        }
        if !(self.cell_spread >= 0.0 && self.temp_spread >= 0.0) {
            return bad("spreads must be >= 0");
        }
        if !(self.thermal_tau > 0.0 && self.cv_tau > 0.0 && self.heat_gain >= 0.0) {
            return bad("time constants must be positive");
        }
        Ok(())
    }
}

/// Sinusoidal charger-side current ripple during CC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ripple {
    /// Relative amplitude (fraction of the CC setpoint).
    pub amplitude: f64,
    /// Seconds.
    pub period: f64,
}

/// One charging session's setpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargeProtocol {
    /// A.
    pub precharge_current: f64,
    /// A.
    pub cc_current: f64,
    /// V.
    pub cv_voltage: f64,
    /// Sample period (s).
    pub dt: f64,
    /// SOC at plug-in (percent).
    pub initial_soc: f64,
    /// Pre-charge runs until SOC reaches this value (percent).
    pub precharge_soc: f64,
    /// CV ends once current falls to this fraction of `cc_current`.
    pub cutoff_fraction: f64,
    /// Timestamp of the first sample (s).
    pub start_time: f64,
    /// Pack temperature at plug-in (°C).
    pub initial_temperature: f64,
    pub ripple: Option<Ripple>,
    /// Hard cap on the number of samples.
    pub max_steps: usize,
}

impl Default for ChargeProtocol {
    fn default() -> Self {
        ChargeProtocol {
            precharge_current: 5.0,
            cc_current: 35.0,
            cv_voltage: 4.15,
            dt: 10.0,
            initial_soc: 20.0,
            precharge_soc: 21.0,
            cutoff_fraction: 0.05,
            start_time: 0.0,
            initial_temperature: 25.0,
            ripple: None,
            max_steps: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Precharge,
    ConstantCurrent,
    ConstantVoltage,
}

/// Simulate one charging session, one row per sample.
///
/// Terminal voltage is `ocv(soc) + I·R` during pre-charge and CC. CC hands
/// over to CV when that reaches `cv_voltage`; CV holds the voltage while the
/// current decays as `I_cc·exp(-t/cv_tau)` down to the cutoff. SOC integrates
/// current over effective capacity (rectangle rule, current held over each
/// sample period). Temperature follows a first-order lag driven by I²R.
pub fn simulate_charge(state: &BatteryState, protocol: &ChargeProtocol) -> Result<Vec<Row>, SynthError> {
    state.validate()?;
    let p = protocol;
    if !(p.dt > 0.0) {
        return Err(SynthError::InvalidProtocol("dt must be positive".into()));
    }
    if !(p.cc_current > 0.0 && p.precharge_current > 0.0) {
        return Err(SynthError::InvalidProtocol("currents must be positive".into()));
    }
    if !(0.0..=100.0).contains(&p.initial_soc) {
        return Err(SynthError::InvalidProtocol("initial soc outside [0, 100]".into()));
    }
    let start_ocv = state.ocv_curve.voltage(p.initial_soc);
    if p.cv_voltage < start_ocv {
        return Err(SynthError::UnreachableSetpoint {
            cv_voltage: p.cv_voltage,
            start_ocv,
        });
    }
    if p.cv_voltage > state.ocv_curve.max_voltage() + p.cc_current * state.internal_resistance {
        return Err(SynthError::InvalidProtocol("cv voltage above the reachable range".into()));
    }

    let r = state.internal_resistance;
    let capacity_as = state.effective_capacity() * 3600.0;
    let cutoff = p.cutoff_fraction * p.cc_current;
    let mut soc = p.initial_soc;
    let mut temp = p.initial_temperature;
    let mut phase = if soc < p.precharge_soc {
        Phase::Precharge
    } else {
        Phase::ConstantCurrent
    };
    let mut cv_start = 0.0;
    let mut cv_current = p.cc_current;
    let mut rows = Vec::new();

    for k in 0..p.max_steps {
        let t = k as f64 * p.dt;
        if phase == Phase::Precharge && soc >= p.precharge_soc {
            phase = Phase::ConstantCurrent;
        }
        let mut current = match phase {
            Phase::Precharge => p.precharge_current,
            Phase::ConstantCurrent => {
                let ripple = p
                    .ripple
                    .map(|rp| rp.amplitude * (2.0 * std::f64::consts::PI * t / rp.period).sin())
                    .unwrap_or(0.0);
                p.cc_current * (1.0 + ripple)
            }
            Phase::ConstantVoltage => cv_current * (-(t - cv_start) / state.cv_tau).exp(),
        };
        let ocv = state.ocv_curve.voltage(soc);
        if phase == Phase::ConstantCurrent && ocv + current * r >= p.cv_voltage {
            phase = Phase::ConstantVoltage;
            cv_start = t;
            // Hand over at the current that exactly meets the setpoint.
            cv_current = if r > 0.0 {
                ((p.cv_voltage - ocv) / r).clamp(0.0, current)
            } else {
                0.0
            };
            current = cv_current;
        }
        if phase == Phase::ConstantVoltage && current <= cutoff {
            break;
        }
        let voltage = match phase {
            Phase::ConstantVoltage => p.cv_voltage,
            _ => ocv + current * r,
        };
        let load = current / p.cc_current;
        let spread = state.cell_spread * (0.6 + 0.4 * load.max(0.0));
        let tspread = state.temp_spread * (1.0 + 0.02 * (temp - state.temperature_base).max(0.0));
        let mut row = [0.0; N_CHANNELS];
        row[Channel::AvgCellVoltage.index()] = voltage;
        row[Channel::Current.index()] = current;
        row[Channel::MaxCellVoltage.index()] = voltage + 0.6 * spread;
        row[Channel::MinCellVoltage.index()] = voltage - 0.4 * spread;
        row[Channel::MaxTemp.index()] = temp + 0.6 * tspread;
        row[Channel::MinTemp.index()] = temp - 0.4 * tspread;
        row[Channel::Soc.index()] = soc;
        row[Channel::Timestamp.index()] = p.start_time + t;
        rows.push(row);

        soc = (soc + current * p.dt / capacity_as * 100.0).min(100.0);
        let heat = current * current * r;
        temp += p.dt * ((state.temperature_base - temp) / state.thermal_tau + state.heat_gain * heat);
        if soc >= 100.0 {
            break;
        }
    }
    Ok(rows)
}
