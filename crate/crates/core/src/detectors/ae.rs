use serde::{Deserialize, Serialize};

use super::train::{apply_update, shuffled_batches, TrainSettings, SCORE_CHUNK};
use super::{check_training_vehicles, flatten, DetectorError, SnippetScore};
use crate::data::{ChargingSnippet, NormStats, Row, Vehicle, MODELED_CHANNELS};
use crate::diffkit::{
    dropout_mask, mse, Activation, BatchNorm, BatchNormCache, Dense, DenseCache, DiffError, Grads, Matrix, ModelParams,
};
use crate::exec::Execution;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AeConfig {
    /// Widths of the hidden layers between the flattened input and output.
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub train: TrainSettings,
}

impl Default for AeConfig {
    fn default() -> Self {
        AeConfig {
            hidden: vec![64, 32, 32, 64],
            dropout: 0.1,
            train: TrainSettings {
                epochs: 10,
                batch_size: 128,
                learning_rate: 1e-3,
                clip_norm: None,
            },
        }
    }
}

impl AeConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(DetectorError::InvalidConfig("hidden widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(DetectorError::InvalidConfig("dropout must lie in [0, 1)".into()));
        }
        self.train.validate().map_err(DetectorError::InvalidConfig)
    }
}

/// Hidden blocks are dense → batch norm → sigmoid → dropout; the output
/// layer is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AeNet {
    blocks: Vec<(Dense, BatchNorm)>,
    output: Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeModel {
    pub config: AeConfig,
    pub norm: NormStats,
    pub params: ModelParams,
    net: AeNet,
    pub loss_history: Vec<f64>,
}

fn flat_width(len: usize) -> usize {
    len * MODELED_CHANNELS.len()
}

struct BlockCache {
    dense: DenseCache,
    bn: BatchNormCache,
    act: Matrix,
    mask: Matrix,
}

impl AeNet {
    fn new(config: &AeConfig, width: usize, params: &mut ModelParams, seed: u64) -> AeNet {
        let mut rng = seed::rng(seed);
        let mut blocks = Vec::new();
        let mut prev = width;
        for (i, &h) in config.hidden.iter().enumerate() {
            let d = Dense::new(params, &format!("block{i}.dense"), prev, h, Activation::Identity, &mut rng);
            let bn = BatchNorm::new(params, &format!("block{i}.bn"), h);
            blocks.push((d, bn));
            prev = h;
        }
        let output = Dense::new(params, "output", prev, width, Activation::Identity, &mut rng);
        AeNet { blocks, output }
    }

    fn infer(&self, p: &ModelParams, x: &Matrix) -> Result<Matrix, DiffError> {
        let mut h = x.clone();
        for (d, bn) in &self.blocks {
            h = bn.forward_eval(p, &d.infer(p, &h)?)?;
            h.mapv_inplace(|v| Activation::Sigmoid.apply(v));
        }
        self.output.infer(p, &h)
    }

    /// Training-mode pass; returns loss, gradients and the batch-norm caches
    /// for the running-statistics update.
    fn train_step(
        &self,
        p: &ModelParams,
        x: &Matrix,
        dropout: f64,
        rng: &mut impl rand::Rng,
    ) -> Result<(f64, Grads, Vec<BatchNormCache>), DiffError> {
        let mut caches = Vec::with_capacity(self.blocks.len());
        let mut h = x.clone();
        for (d, bn) in &self.blocks {
            let (a, dense) = d.forward(p, &h)?;
            let (nrm, bn_cache) = bn.forward_train(p, &a)?;
            let act = nrm.mapv(|v| Activation::Sigmoid.apply(v));
            let mask = dropout_mask(rng, act.dim(), dropout);
            h = &act * &mask;
            caches.push(BlockCache {
                dense,
                bn: bn_cache,
                act,
                mask,
            });
        }
        let (y, out_cache) = self.output.forward(p, &h)?;
        let (loss, dy) = mse(&y, x)?;
        let mut g = p.zero_grads_like();
        let mut dh = self.output.backward(p, &out_cache, &dy, &mut g)?;
        for ((d, bn), c) in self.blocks.iter().zip(&caches).rev() {
            let mut dn = &dh * &c.mask;
            ndarray::Zip::from(&mut dn).and(&c.act).for_each(|g, &s| *g *= s * (1.0 - s));
            let da = bn.backward(p, &c.bn, &dn, &mut g)?;
            dh = d.backward(p, &c.dense, &da, &mut g)?;
        }
        Ok((loss, g, caches.into_iter().map(|c| c.bn).collect()))
    }
}

/// Train on the flattened snippets of normal vehicles. Batches are not
/// split because batch normalization needs whole-batch statistics.
pub fn ae_train(vehicles: &[&Vehicle], config: &AeConfig, seed: u64, exec: Execution) -> Result<AeModel, DetectorError> {
    check_training_vehicles(vehicles)?;
    config.validate()?;
    let snippets: Vec<&ChargingSnippet> = vehicles.iter().flat_map(|v| &v.snippets).collect();
    let norm = NormStats::fit(snippets.iter().copied())?;
    let data: Vec<Vec<Row>> = exec.map(&snippets, |s| norm.apply(s));
    let mut params = ModelParams::new();
    let net = AeNet::new(config, flat_width(data[0].len()), &mut params, seed::derive(seed, 0));
    let mut opt = config.train.optimizer(&params, data.len());
    let mut rng = seed::rng(seed::derive(seed, 1));
    let shuffle_seed = seed::derive(seed, 2);
    let mut loss_history = Vec::with_capacity(config.train.epochs);
    for epoch in 0..config.train.epochs {
        let mut epoch_loss = 0.0;
        for batch in shuffled_batches(data.len(), config.train.batch_size, shuffle_seed, epoch) {
            let seqs: Vec<&[Row]> = batch.iter().map(|&i| data[i].as_slice()).collect();
            let x = flatten(&seqs);
            let (loss, grads, bn_caches) = net.train_step(&params, &x, config.dropout, &mut rng)?;
            for ((_, bn), c) in net.blocks.iter().zip(&bn_caches) {
                bn.update_running(&mut params, c, batch.len());
            }
            apply_update(&mut params, grads, &mut opt, config.train.clip_norm)?;
            epoch_loss += loss * batch.len() as f64;
        }
        loss_history.push(epoch_loss / data.len() as f64);
    }
    Ok(AeModel {
        config: config.clone(),
        norm,
        params,
        net,
        loss_history,
    })
}

impl AeModel {
    /// Reconstruction MSE over all modeled channels, dropout off.
    pub fn score_snippets(&self, snippets: &[ChargingSnippet], exec: Execution) -> Result<Vec<f64>, DetectorError> {
        let chunks: Vec<&[ChargingSnippet]> = snippets.chunks(SCORE_CHUNK).collect();
        let scored = exec.map(&chunks, |chunk| -> Result<Vec<f64>, DiffError> {
            let data: Vec<Vec<Row>> = chunk.iter().map(|s| self.norm.apply(s)).collect();
            let seqs: Vec<&[Row]> = data.iter().map(Vec::as_slice).collect();
            let x = flatten(&seqs);
            let y = self.net.infer(&self.params, &x)?;
            Ok(y.rows()
                .into_iter()
                .zip(x.rows())
                .map(|(a, b)| a.iter().zip(b.iter()).map(|(u, v)| (u - v) * (u - v)).sum::<f64>() / x.ncols() as f64)
                .collect())
        });
        let mut out = Vec::with_capacity(snippets.len());
        for s in scored {
            out.extend(s?);
        }
        Ok(out)
    }
}

pub fn ae_score(model: &AeModel, snippet: &ChargingSnippet) -> Result<SnippetScore, DetectorError> {
    let score = model.score_snippets(std::slice::from_ref(snippet), Execution::Sequential)?[0];
    Ok(SnippetScore {
        vehicle_id: snippet.vehicle_id.clone(),
        snippet_index: snippet.snippet_index,
        score,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::HealthLabel;
    use crate::detectors::test_support::toy_vehicle;

    #[test]
    fn overfits_one_repeated_snippet() {
        let base = toy_vehicle("a", 1, 0.003, HealthLabel::Normal);
        let mut v = base.clone();
        v.snippets = (0..16)
            .map(|k| {
                let mut s = base.snippets[0].clone();
                s.snippet_index = k;
                s
            })
            .collect();
        let cfg = AeConfig {
            dropout: 0.0,
            train: TrainSettings {
                epochs: 400,
                batch_size: 16,
                learning_rate: 1e-2,
                clip_norm: None,
            },
            ..AeConfig::default()
        };
        let m = ae_train(&[&v], &cfg, 1, Execution::Sequential).unwrap();
        assert!(*m.loss_history.last().unwrap() < 1e-3, "{:?}", m.loss_history.last());
    }

    #[test]
    fn inference_ignores_dropout_and_is_repeatable() {
        let v = toy_vehicle("a", 20, 0.003, HealthLabel::Normal);
        let cfg = AeConfig {
            dropout: 0.5,
            train: TrainSettings {
                epochs: 2,
                batch_size: 8,
                learning_rate: 1e-3,
                clip_norm: None,
            },
            ..AeConfig::default()
        };
        let m = ae_train(&[&v], &cfg, 2, Execution::Sequential).unwrap();
        let a = ae_score(&m, &v.snippets[4]).unwrap();
        let b = ae_score(&m, &v.snippets[4]).unwrap();
        assert_eq!(a, b);
        assert!(a.score.is_finite() && a.score >= 0.0);
        assert_eq!(
            m.score_snippets(&v.snippets, Execution::Sequential).unwrap(),
            m.score_snippets(&v.snippets, Execution::Parallel).unwrap()
        );
    }

    #[test]
    fn zero_network_scores_zero_on_mean_snippet() {
        let v = toy_vehicle("a", 4, 0.003, HealthLabel::Normal);
        let cfg = AeConfig {
            train: TrainSettings {
                epochs: 1,
                batch_size: 4,
                learning_rate: 1e-3,
                clip_norm: None,
            },
            ..AeConfig::default()
        };
        let mut m = ae_train(&[&v], &cfg, 0, Execution::Sequential).unwrap();
        for id in [m.net.output.w, m.net.output.b] {
            m.params.value_mut(id).fill(0.0);
        }
        let mut s = v.snippets[0].clone();
        for row in s.series.iter_mut() {
            for c in MODELED_CHANNELS {
                row[c.index()] = m.norm.mean[c.index()];
            }
        }
        assert_eq!(ae_score(&m, &s).unwrap().score, 0.0);
    }

    #[test]
    fn rejects_anomalous_training_data() {
        let bad = toy_vehicle("z", 2, 0.003, HealthLabel::Anomalous);
        assert!(matches!(
            ae_train(&[&bad], &AeConfig::default(), 0, Execution::Sequential),
            Err(DetectorError::AnomalousInTraining(_))
        ));
    }
}
