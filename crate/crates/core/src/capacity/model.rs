use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::ridge::{ridge_fit, summary_features, RidgeFit};
use super::CapacityError;
use crate::data::{ChargingSnippet, NormStats, Row, MODELED_CHANNELS};
use crate::detectors::train::{accumulate_chunks, apply_update, shuffled_batches, SCORE_CHUNK};
use crate::detectors::{flatten, fill_time_major, TrainSettings};
use crate::diffkit::{last_step, mse, Activation, Dense, DiffError, Grads, Gru, Matrix, ModelParams};
use crate::exec::Execution;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressorKind {
    #[default]
    Recurrent,
    Feedforward,
    Ridge,
}

impl RegressorKind {
    pub fn name(self) -> &'static str {
        match self {
            RegressorKind::Recurrent => "recurrent",
            RegressorKind::Feedforward => "feedforward",
            RegressorKind::Ridge => "ridge",
        }
    }
}

impl fmt::Display for RegressorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RegressorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "recurrent" => Ok(RegressorKind::Recurrent),
            "feedforward" => Ok(RegressorKind::Feedforward),
            "ridge" => Ok(RegressorKind::Ridge),
            other => Err(format!("unknown regressor `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressorConfig {
    pub kind: RegressorKind,
    pub hidden_size: usize,
    /// Ridge penalty on the mean-squared-error objective.
    pub ridge_lambda: f64,
    pub train: TrainSettings,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        RegressorConfig {
            kind: RegressorKind::Recurrent,
            hidden_size: 32,
            ridge_lambda: 1e-3,
            train: TrainSettings {
                epochs: 10,
                batch_size: 32,
                learning_rate: 1e-3,
                clip_norm: None,
            },
        }
    }
}

impl RegressorConfig {
    pub fn with_kind(kind: RegressorKind) -> Self {
        RegressorConfig {
            kind,
            ..RegressorConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), CapacityError> {
        if self.hidden_size == 0 {
            return Err(CapacityError::InvalidConfig("hidden_size must be positive".into()));
        }
        if !(self.ridge_lambda >= 0.0 && self.ridge_lambda.is_finite()) {
            return Err(CapacityError::InvalidConfig("ridge_lambda must be finite and non-negative".into()));
        }
        self.train.validate().map_err(CapacityError::InvalidConfig)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RegressorNet {
    /// GRU over [`recurrent_inputs`], final state → dense ReLU → scalar.
    Recurrent { gru: Gru, hidden: Dense, out: Dense },
    /// Flattened snippet → two dense ReLU layers → scalar.
    Feedforward { first: Dense, second: Dense, out: Dense },
    Ridge { fit: RidgeFit },
}

impl RegressorNet {
    fn new(config: &RegressorConfig, params: &mut ModelParams, seed: u64) -> RegressorNet {
        let mut rng = seed::rng(seed);
        let h = config.hidden_size;
        let channels = MODELED_CHANNELS.len();
        match config.kind {
            RegressorKind::Recurrent => RegressorNet::Recurrent {
                gru: Gru::new(params, "gru", 2 * channels, h, &mut rng),
                hidden: Dense::new(params, "hidden", h, h, Activation::Relu, &mut rng),
                out: Dense::new(params, "out", h, 1, Activation::Identity, &mut rng),
            },
            RegressorKind::Feedforward => {
                let width = crate::data::SNIPPET_LEN * channels;
                RegressorNet::Feedforward {
                    first: Dense::new(params, "first", width, h, Activation::Relu, &mut rng),
                    second: Dense::new(params, "second", h, h, Activation::Relu, &mut rng),
                    out: Dense::new(params, "out", h, 1, Activation::Identity, &mut rng),
                }
            }
            RegressorKind::Ridge => RegressorNet::Ridge {
                fit: RidgeFit {
                    coef: Vec::new(),
                    intercept: 0.0,
                },
            },
        }
    }

    /// Standardized predictions, one per sequence.
    fn infer(&self, p: &ModelParams, seqs: &[&[Row]]) -> Result<Vec<f64>, DiffError> {
        let y = match self {
            RegressorNet::Recurrent { gru, hidden, out } => {
                let hs = gru.infer(p, &recurrent_inputs(seqs), seqs.len(), None)?;
                out.infer(p, &hidden.infer(p, &last_step(&hs, seqs.len()))?)?
            }
            RegressorNet::Feedforward { first, second, out } => {
                out.infer(p, &second.infer(p, &first.infer(p, &flatten(seqs))?)?)?
            }
            RegressorNet::Ridge { fit } => return Ok(seqs.iter().map(|s| fit.predict(&summary_features(s))).collect()),
        };
        Ok(y.column(0).to_vec())
    }

    /// MSE against standardized targets and its gradient.
    fn loss_and_grads(&self, p: &ModelParams, seqs: &[&[Row]], targets: &[f64]) -> Result<(f64, Grads), DiffError> {
        let b = seqs.len();
        let target = Array2::from_shape_fn((b, 1), |(i, _)| targets[i]);
        let mut g = p.zero_grads_like();
        match self {
            RegressorNet::Recurrent { gru, hidden, out } => {
                let (hs, gc) = gru.forward(p, &recurrent_inputs(seqs), b, None)?;
                let (h1, hc) = hidden.forward(p, &last_step(&hs, b))?;
                let (y, oc) = out.forward(p, &h1)?;
                let (loss, dy) = mse(&y, &target)?;
                let dh1 = out.backward(p, &oc, &dy, &mut g)?;
                let dlast = hidden.backward(p, &hc, &dh1, &mut g)?;
                gru.backward(p, &gc, None, Some(&dlast), &mut g)?;
                Ok((loss, g))
            }
            RegressorNet::Feedforward { first, second, out } => {
                let (h1, c1) = first.forward(p, &flatten(seqs))?;
                let (h2, c2) = second.forward(p, &h1)?;
                let (y, oc) = out.forward(p, &h2)?;
                let (loss, dy) = mse(&y, &target)?;
                let dh2 = out.backward(p, &oc, &dy, &mut g)?;
                let dh1 = second.backward(p, &c2, &dh2, &mut g)?;
                first.backward(p, &c1, &dh1, &mut g)?;
                Ok((loss, g))
            }
            RegressorNet::Ridge { .. } => unreachable!("ridge is solved in closed form"),
        }
    }
}

/// Time-major GRU input: each modeled channel's normalized level, then its
/// change since the snippet's first row. Capacity shows up as how far SOC
/// and voltage move for the charge delivered, which a recurrent cell would
/// otherwise have to learn to measure by carrying the first row for the
/// whole window.
fn recurrent_inputs(seqs: &[&[Row]]) -> Matrix {
    let (b, n) = (seqs.len(), MODELED_CHANNELS.len());
    let mut m = Array2::zeros((b * seqs[0].len(), 2 * n));
    fill_time_major(&mut m, seqs, &MODELED_CHANNELS, 0);
    for r in 0..m.nrows() {
        for j in 0..n {
            m[[r, n + j]] = m[[r, j]] - m[[r % b, j]];
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityModel {
    pub config: RegressorConfig,
    pub norm: NormStats,
    pub target_mean: f64,
    pub target_std: f64,
    pub params: ModelParams,
    net: RegressorNet,
    /// Mean standardized training loss per epoch (one entry for ridge).
    pub loss_history: Vec<f64>,
}

fn labels(snippets: &[&ChargingSnippet]) -> Result<Vec<f64>, CapacityError> {
    snippets
        .iter()
        .map(|s| {
            s.capacity_label.ok_or_else(|| CapacityError::Unlabeled {
                vehicle_id: s.vehicle_id.clone(),
                snippet_index: s.snippet_index,
            })
        })
        .collect()
}

/// Fit a regressor on capacity-labeled snippets. Channels are z-scored and
/// targets standardized with training statistics.
pub fn train_regressor(
    snippets: &[&ChargingSnippet],
    config: &RegressorConfig,
    seed: u64,
    exec: Execution,
) -> Result<CapacityModel, CapacityError> {
    config.validate()?;
    if snippets.is_empty() {
        return Err(CapacityError::NoTrainingData);
    }
    let y = labels(snippets)?;
    let n = y.len() as f64;
    let target_mean = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - target_mean) * (v - target_mean)).sum::<f64>() / n).sqrt();
    // Constant targets: standardized values are all zero whatever the scale.
    let target_std = if sd > 1e-12 { sd } else { 1.0 };
    let z: Vec<f64> = y.iter().map(|v| (v - target_mean) / target_std).collect();

    let norm = NormStats::fit(snippets.iter().copied())?;
    let data: Vec<Vec<Row>> = exec.map(snippets, |s| norm.apply(s));
    let mut params = ModelParams::new();
    let mut net = RegressorNet::new(config, &mut params, seed::derive(seed, 0));
    let mut loss_history = Vec::with_capacity(config.train.epochs);

    if config.kind == RegressorKind::Ridge {
        let features: Vec<Vec<f64>> = exec.map(&data, |s| summary_features(s));
        let fit = ridge_fit(&features, &z, config.ridge_lambda);
        let mse = features.iter().zip(&z).map(|(f, t)| (fit.predict(f) - t).powi(2)).sum::<f64>() / n;
        loss_history.push(mse);
        net = RegressorNet::Ridge { fit };
    } else {
        let mut opt = config.train.optimizer(&params, data.len());
        let shuffle_seed = seed::derive(seed, 2);
        for epoch in 0..config.train.epochs {
            let mut epoch_loss = 0.0;
            for batch in shuffled_batches(data.len(), config.train.batch_size, shuffle_seed, epoch) {
                let p = &params;
                let (loss, grads) = accumulate_chunks(exec, &batch, |_, idx| {
                    let seqs: Vec<&[Row]> = idx.iter().map(|&i| data[i].as_slice()).collect();
                    let t: Vec<f64> = idx.iter().map(|&i| z[i]).collect();
                    net.loss_and_grads(p, &seqs, &t)
                })?;
                apply_update(&mut params, grads, &mut opt, config.train.clip_norm)?;
                epoch_loss += loss * batch.len() as f64;
            }
            loss_history.push(epoch_loss / n);
        }
    }
    Ok(CapacityModel {
        config: config.clone(),
        norm,
        target_mean,
        target_std,
        params,
        net,
        loss_history,
    })
}

impl CapacityModel {
    /// Capacities in A·h, in input order. Labels are ignored.
    pub fn predict(&self, snippets: &[&ChargingSnippet], exec: Execution) -> Result<Vec<f64>, CapacityError> {
        let chunks: Vec<&[&ChargingSnippet]> = snippets.chunks(SCORE_CHUNK).collect();
        let out = exec.map(&chunks, |chunk| -> Result<Vec<f64>, DiffError> {
            let data: Vec<Vec<Row>> = chunk.iter().map(|s| self.norm.apply(s)).collect();
            let seqs: Vec<&[Row]> = data.iter().map(Vec::as_slice).collect();
            self.net.infer(&self.params, &seqs)
        });
        let mut preds = Vec::with_capacity(snippets.len());
        for z in out {
            preds.extend(z?.into_iter().map(|v| v * self.target_std + self.target_mean));
        }
        Ok(preds)
    }

    /// Training objective on fixed normalized inputs and standardized targets.
    #[cfg(test)]
    fn objective(&self, p: &ModelParams, seqs: &[&[Row]], targets: &[f64]) -> Result<(f64, Grads), DiffError> {
        self.net.loss_and_grads(p, seqs, targets)
    }
}

pub fn predict_capacity(model: &CapacityModel, snippet: &ChargingSnippet) -> Result<f64, CapacityError> {
    Ok(model.predict(&[snippet], Execution::Sequential)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::HealthLabel;
    use crate::detectors::test_support::toy_vehicle;
    use crate::diffkit::{max_param_error, FD_STEP};

    /// Toy snippets labeled by their current level.
    fn labeled(n: usize) -> Vec<ChargingSnippet> {
        let v = toy_vehicle("a", n, 0.003, HealthLabel::Normal);
        v.snippets
            .into_iter()
            .enumerate()
            .map(|(k, mut s)| {
                s.capacity_label = Some(30.0 + (k % 7) as f64);
                s
            })
            .collect()
    }

    fn quick(kind: RegressorKind, epochs: usize, lr: f64, batch: usize) -> RegressorConfig {
        RegressorConfig {
            kind,
            train: TrainSettings {
                epochs,
                batch_size: batch,
                learning_rate: lr,
                clip_norm: None,
            },
            ..RegressorConfig::default()
        }
    }

    #[test]
    fn recurrent_inputs_hold_levels_then_changes() {
        let rows = |base: f64| -> Vec<Row> { (0..3).map(|t| [base + t as f64; crate::data::N_CHANNELS]).collect() };
        let (a, b) = (rows(0.0), rows(10.0));
        let m = recurrent_inputs(&[&a, &b]);
        let n = MODELED_CHANNELS.len();
        assert_eq!(m.dim(), (6, 2 * n));
        // Row t·B + b: sample b at step t.
        assert_eq!(m[[5, 0]], 12.0);
        assert_eq!(m[[5, n]], 2.0);
        assert_eq!(m[[1, n + 3]], 0.0);
        assert_eq!(m[[2, n + 6]], 1.0);
    }

    #[test]
    fn recurrent_overfits_one_repeated_snippet() {
        let one = labeled(1).remove(0);
        let snips: Vec<&ChargingSnippet> = std::iter::repeat_n(&one, 16).collect();
        let m = train_regressor(&snips, &quick(RegressorKind::Recurrent, 50, 1e-2, 16), 3, Execution::Sequential).unwrap();
        assert!(*m.loss_history.last().unwrap() < 1e-3, "{:?}", m.loss_history);
        assert!((predict_capacity(&m, &one).unwrap() - 30.0).abs() < 0.05);
    }

    #[test]
    fn networks_fit_distinct_labels() {
        let data = labeled(14);
        let snips: Vec<&ChargingSnippet> = data.iter().collect();
        for kind in [RegressorKind::Recurrent, RegressorKind::Feedforward] {
            let m = train_regressor(&snips, &quick(kind, 300, 1e-2, 14), 5, Execution::Sequential).unwrap();
            assert!(*m.loss_history.last().unwrap() < 2e-2, "{kind}: {:?}", m.loss_history.last());
        }
    }

    #[test]
    fn training_is_identical_sequential_and_parallel() {
        let data = labeled(70);
        let snips: Vec<&ChargingSnippet> = data.iter().collect();
        for kind in [RegressorKind::Recurrent, RegressorKind::Feedforward, RegressorKind::Ridge] {
            let cfg = quick(kind, 2, 1e-3, 64);
            let a = train_regressor(&snips, &cfg, 9, Execution::Sequential).unwrap();
            let b = train_regressor(&snips, &cfg, 9, Execution::Parallel).unwrap();
            assert_eq!(a, b);
            let pa = a.predict(&snips, Execution::Sequential).unwrap();
            assert_eq!(pa, a.predict(&snips, Execution::Parallel).unwrap());
            assert_eq!(predict_capacity(&a, snips[3]).unwrap(), predict_capacity(&a, snips[3]).unwrap());
        }
    }

    #[test]
    fn ridge_on_constant_targets_predicts_the_constant() {
        let mut data = labeled(10);
        for s in &mut data {
            s.capacity_label = Some(41.25);
        }
        let snips: Vec<&ChargingSnippet> = data.iter().collect();
        let cfg = RegressorConfig {
            ridge_lambda: 0.0,
            ..RegressorConfig::with_kind(RegressorKind::Ridge)
        };
        let m = train_regressor(&snips, &cfg, 0, Execution::Sequential).unwrap();
        for p in m.predict(&snips, Execution::Sequential).unwrap() {
            assert!((p - 41.25).abs() < 1e-12, "{p}");
        }
    }

    #[test]
    fn ridge_with_huge_penalty_predicts_training_mean() {
        let data = labeled(21);
        let snips: Vec<&ChargingSnippet> = data.iter().collect();
        let cfg = RegressorConfig {
            ridge_lambda: 1e12,
            ..RegressorConfig::with_kind(RegressorKind::Ridge)
        };
        let m = train_regressor(&snips, &cfg, 0, Execution::Sequential).unwrap();
        let mean = data.iter().map(|s| s.capacity_label.unwrap()).sum::<f64>() / 21.0;
        for p in m.predict(&snips, Execution::Sequential).unwrap() {
            assert!((p - mean).abs() < 1e-6);
        }
    }

    #[test]
    fn unlabeled_snippet_is_rejected() {
        let mut data = labeled(3);
        data[1].capacity_label = None;
        let snips: Vec<&ChargingSnippet> = data.iter().collect();
        let err = train_regressor(&snips, &RegressorConfig::default(), 0, Execution::Sequential).unwrap_err();
        assert!(matches!(err, CapacityError::Unlabeled { snippet_index: 1, .. }));
    }

    #[test]
    fn network_gradients_match_finite_differences() {
        let data = labeled(3);
        let snips: Vec<&ChargingSnippet> = data.iter().collect();
        for kind in [RegressorKind::Recurrent, RegressorKind::Feedforward] {
            let cfg = RegressorConfig {
                hidden_size: 5,
                ..quick(kind, 1, 1e-3, 3)
            };
            let m = train_regressor(&snips, &cfg, 4, Execution::Sequential).unwrap();
            let rows: Vec<Vec<Row>> = data.iter().map(|s| m.norm.apply(s)).collect();
            let seqs: Vec<&[Row]> = rows.iter().map(Vec::as_slice).collect();
            let t = [0.3, -1.1, 0.8];
            let (_, g) = m.objective(&m.params, &seqs, &t).unwrap();
            let err = max_param_error(&m.params, &g, FD_STEP, |p| m.objective(p, &seqs, &t).unwrap().0);
            assert!(err < 1e-4, "{kind}: {err}");
        }
    }

    #[test]
    fn kind_parses_and_config_validates() {
        assert_eq!("ridge".parse::<RegressorKind>().unwrap(), RegressorKind::Ridge);
        assert!("lstm".parse::<RegressorKind>().is_err());
        let bad = RegressorConfig {
            ridge_lambda: -1.0,
            ..RegressorConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
