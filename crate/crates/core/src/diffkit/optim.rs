use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::{DiffError, Matrix, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Half-cosine decay from the base rate to zero over `period` steps, no restarts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineSchedule {
    pub period: u64,
}

impl CosineSchedule {
    pub fn factor(&self, step: u64) -> f64 {
        if self.period == 0 {
            return 1.0;
        }
        let s = step.min(self.period) as f64 / self.period as f64;
        0.5 * (1.0 + (std::f64::consts::PI * s).cos())
    }
}

/// Adam moments and step counter for one [`ModelParams`] store.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub schedule: Option<CosineSchedule>,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    step: u64,
}

impl OptimizerState {
    pub fn new(params: &ModelParams, config: AdamConfig, schedule: Option<CosineSchedule>) -> Self {
        let zeros = || params.ids().map(|id| Array2::zeros(params.value(id).dim())).collect();
        OptimizerState {
            config,
            schedule,
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    /// Updates applied so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Learning rate the next update will use.
    pub fn effective_lr(&self) -> f64 {
        self.lr_at(self.step)
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        self.config.learning_rate * self.schedule.map_or(1.0, |s| s.factor(step))
    }

    pub fn second_moments_non_negative(&self) -> bool {
        self.v.iter().all(|v| v.iter().all(|&x| x >= 0.0))
    }
}

/// One bias-corrected Adam update from the store's gradient buffers.
pub fn adam_step(params: &mut ModelParams, state: &mut OptimizerState) -> Result<(), DiffError> {
    let lr = state.effective_lr();
    let AdamConfig { beta1, beta2, eps, .. } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        if !params.is_trainable(id) {
            continue;
        }
        let g = params.grads().get(id).clone();
        let m = &mut state.m[id.0];
        let v = &mut state.v[id.0];
        Zip::from(&mut *m).and(&mut *v).and(&g).for_each(|m, v, &g| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
        });
        let value = params.value_mut(id);
        Zip::from(value).and(&*m).and(&*v).for_each(|w, &m, &v| {
            *w -= lr * (m / c1) / ((v / c2).sqrt() + eps);
        });
    }
    if !params.all_finite() {
        return Err(DiffError::NonFinite(format!("parameters after update {}", state.step)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_gradients_leave_parameters() {
        let mut p = ModelParams::new();
        p.add("w", array![[1.0, -2.0]]);
        let before = p.clone();
        let mut s = OptimizerState::new(&p, AdamConfig::default(), None);
        adam_step(&mut p, &mut s).unwrap();
        assert_eq!(p.value(super::super::ParamId(0)), before.value(super::super::ParamId(0)));
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn cosine_endpoints() {
        let sched = CosineSchedule { period: 100 };
        assert_eq!(sched.factor(0), 1.0);
        assert!((sched.factor(50) - 0.5).abs() < 1e-15);
        assert!(sched.factor(100).abs() < 1e-15);
        assert!(sched.factor(250).abs() < 1e-15);
    }

    #[test]
    fn quadratic_converges() {
        let mut p = ModelParams::new();
        let x = p.add("x", array![[0.0]]);
        let cfg = AdamConfig { learning_rate: 0.1, ..Default::default() };
        let mut s = OptimizerState::new(&p, cfg, Some(CosineSchedule { period: 500 }));
        for _ in 0..500 {
            let v = p.value(x)[[0, 0]];
            p.grads_mut().get_mut(x)[[0, 0]] = 2.0 * (v - 3.0);
            adam_step(&mut p, &mut s).unwrap();
            assert!(s.second_moments_non_negative());
        }
        assert!((p.value(x)[[0, 0]] - 3.0).abs() <= 1e-3, "{}", p.value(x)[[0, 0]]);
        assert!(s.effective_lr().abs() < 1e-15);
    }
}
