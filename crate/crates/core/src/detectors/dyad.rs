use ndarray::{s, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::train::{accumulate_chunks, apply_update, shuffled_batches, TrainSettings, SCORE_CHUNK};
use super::{check_training_vehicles, fill_time_major, DetectorError, SnippetScore};
use crate::data::{Channel, ChargingSnippet, NormStats, Row, Vehicle, MODELED_CHANNELS};
use crate::diffkit::{
    gaussian_kl_batch, last_step, mse, reparameterize, reparameterize_backward, Activation, Dense, DiffError, Grads,
    Gru, Matrix, ModelParams, ParamId,
};
use crate::exec::Execution;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DyadConfig {
    /// System input: fed to the decoder at every step, never reconstructed.
    pub input_channels: Vec<Channel>,
    /// System response: reconstructed and scored.
    pub response_channels: Vec<Channel>,
    pub hidden_size: usize,
    pub latent_size: usize,
    pub kl_weight: f64,
    pub train: TrainSettings,
}

impl Default for DyadConfig {
    fn default() -> Self {
        DyadConfig {
            input_channels: vec![Channel::Current, Channel::Soc],
            response_channels: vec![
                Channel::AvgCellVoltage,
                Channel::MaxCellVoltage,
                Channel::MinCellVoltage,
                Channel::MaxTemp,
                Channel::MinTemp,
            ],
            hidden_size: 64,
            latent_size: 32,
            kl_weight: 0.001,
            train: TrainSettings {
                epochs: 10,
                batch_size: 128,
                learning_rate: 1e-3,
                clip_norm: Some(5.0),
            },
        }
    }
}

impl DyadConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        let bad = |m: &str| Err(DetectorError::InvalidConfig(m.to_string()));
        if self.response_channels.is_empty() {
            return bad("response channels must be non-empty");
        }
        if self.input_channels.iter().any(|c| self.response_channels.contains(c)) {
            return bad("input and response channels overlap");
        }
        let all = self.input_channels.iter().chain(&self.response_channels);
        if all.clone().any(|c| *c == Channel::Timestamp) {
            return bad("timestamps are not modeled");
        }
        let mut seen = std::collections::HashSet::new();
        if !all.clone().all(|c| seen.insert(*c)) {
            return bad("duplicate channel");
        }
        if self.hidden_size == 0 || self.latent_size == 0 {
            return bad("hidden and latent sizes must be positive");
        }
        if !(self.kl_weight >= 0.0) {
            return bad("kl_weight must be non-negative");
        }
        self.train.validate().map_err(DetectorError::InvalidConfig)
    }
}

/// Encoder GRU over all modeled channels; its final state gives the latent
/// mean and log-variance. The decoder GRU sees `[z, system input]` at each
/// step and a dense head maps its states to the response channels.
///
/// The latent half of the decoder's input weights is kept as a separate
/// `L × 3H` matrix applied once per sequence, since `z` is the same at every
/// step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DyadNet {
    encoder: Gru,
    mu: Dense,
    logvar: Dense,
    decoder: Gru,
    latent_to_decoder: ParamId,
    head: Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadModel {
    pub config: DyadConfig,
    pub norm: NormStats,
    pub params: ModelParams,
    net: DyadNet,
    /// Mean training loss per epoch.
    pub loss_history: Vec<f64>,
}

/// Time-major matrices for one batch of normalized snippets.
struct Batch {
    size: usize,
    encoder_x: Matrix,
    /// System-input channels, fed to the decoder.
    decoder_x: Matrix,
    target: Matrix,
}

impl Batch {
    fn new(config: &DyadConfig, seqs: &[&[Row]]) -> Batch {
        let b = seqs.len();
        let rows = b * seqs[0].len();
        let mut encoder_x = Array2::zeros((rows, MODELED_CHANNELS.len()));
        fill_time_major(&mut encoder_x, seqs, &MODELED_CHANNELS, 0);
        let mut decoder_x = Array2::zeros((rows, config.input_channels.len()));
        fill_time_major(&mut decoder_x, seqs, &config.input_channels, 0);
        let mut target = Array2::zeros((rows, config.response_channels.len()));
        fill_time_major(&mut target, seqs, &config.response_channels, 0);
        Batch {
            size: b,
            encoder_x,
            decoder_x,
            target,
        }
    }
}

impl DyadNet {
    fn new(config: &DyadConfig, params: &mut ModelParams, seed: u64) -> DyadNet {
        let mut rng = seed::rng(seed);
        let (h, l) = (config.hidden_size, config.latent_size);
        DyadNet {
            encoder: Gru::new(params, "encoder", MODELED_CHANNELS.len(), h, &mut rng),
            mu: Dense::new(params, "mu", h, l, Activation::Identity, &mut rng),
            logvar: Dense::new(params, "logvar", h, l, Activation::Identity, &mut rng),
            decoder: Gru::new(params, "decoder", config.input_channels.len(), h, &mut rng),
            latent_to_decoder: {
                let k = 1.0 / (h as f64).sqrt();
                params.add("decoder.wz", Array2::from_shape_fn((l, 3 * h), |_| rng.random_range(-k..k)))
            },
            head: Dense::new(params, "head", h, config.response_channels.len(), Activation::Identity, &mut rng),
        }
    }

    /// Reconstruction using the posterior mean.
    fn reconstruct(&self, p: &ModelParams, batch: &Batch) -> Result<Matrix, DiffError> {
        let hs = self.encoder.infer(p, &batch.encoder_x, batch.size, None)?;
        let mu = self.mu.infer(p, &last_step(&hs, batch.size))?;
        let cond = mu.dot(p.value(self.latent_to_decoder));
        let hd = self.decoder.infer_conditioned(p, &batch.decoder_x, batch.size, None, Some(&cond))?;
        self.head.infer(p, &hd)
    }

    /// Loss `MSE + β·KL` and its gradient for one batch and noise draw.
    fn loss_and_grads(&self, p: &ModelParams, batch: &Batch, noise: &Matrix, beta: f64) -> Result<(f64, Grads), DiffError> {
        let b = batch.size;
        let mut g = p.zero_grads_like();
        let (hs, enc_cache) = self.encoder.forward(p, &batch.encoder_x, b, None)?;
        let last = last_step(&hs, b);
        let (mu, mu_cache) = self.mu.forward(p, &last)?;
        let (lv, lv_cache) = self.logvar.forward(p, &last)?;
        let z = reparameterize(&mu, &lv, noise)?;
        let cond = z.dot(p.value(self.latent_to_decoder));
        let (hd, dec_cache) = self.decoder.forward_conditioned(p, &batch.decoder_x, b, None, Some(&cond))?;
        let (y, head_cache) = self.head.forward(p, &hd)?;
        let (recon, dy) = mse(&y, &batch.target)?;
        let (kl, dmu_kl, dlv_kl) = gaussian_kl_batch(&mu, &lv)?;

        let dhd = self.head.backward(p, &head_cache, &dy, &mut g)?;
        let (_, _, dcond) = self.decoder.backward_conditioned(p, &dec_cache, Some(&dhd), None, &mut g)?;
        *g.get_mut(self.latent_to_decoder) += &z.t().dot(&dcond);
        let dz = dcond.dot(&p.value(self.latent_to_decoder).t());
        let (mut dmu, mut dlv) = reparameterize_backward(&lv, noise, &dz)?;
        dmu.scaled_add(beta, &dmu_kl);
        dlv.scaled_add(beta, &dlv_kl);
        let mut dlast = self.mu.backward(p, &mu_cache, &dmu, &mut g)?;
        dlast += &self.logvar.backward(p, &lv_cache, &dlv, &mut g)?;
        let mut dhs = Array2::zeros(hs.dim());
        let n = hs.nrows();
        dhs.slice_mut(s![n - b.., ..]).assign(&dlast);
        self.encoder.backward(p, &enc_cache, Some(&dhs), None, &mut g)?;
        Ok((recon + beta * kl, g))
    }
}

/// Per-row MSE of time-major reconstructions, one value per batch sample.
fn per_sample_mse(y: &Matrix, target: &Matrix, batch: usize) -> Vec<f64> {
    let mut sums = vec![0.0; batch];
    for (r, (yr, tr)) in y.rows().into_iter().zip(target.rows()).enumerate() {
        sums[r % batch] += yr.iter().zip(tr.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    let denom = (y.nrows() / batch * y.ncols()) as f64;
    sums.into_iter().map(|s| s / denom).collect()
}

/// Train on the snippets of normal vehicles.
pub fn dyad_train(vehicles: &[&Vehicle], config: &DyadConfig, seed: u64, exec: Execution) -> Result<DyadModel, DetectorError> {
    check_training_vehicles(vehicles)?;
    config.validate()?;
    let snippets: Vec<&ChargingSnippet> = vehicles.iter().flat_map(|v| &v.snippets).collect();
    let norm = NormStats::fit(snippets.iter().copied())?;
    let data: Vec<Vec<Row>> = exec.map(&snippets, |s| norm.apply(s));
    let mut params = ModelParams::new();
    let net = DyadNet::new(config, &mut params, seed::derive(seed, 0));
    let mut opt = config.train.optimizer(&params, data.len());
    let noise_seed = seed::derive(seed, 1);
    let shuffle_seed = seed::derive(seed, 2);
    let mut loss_history = Vec::with_capacity(config.train.epochs);
    let mut step = 0u64;
    for epoch in 0..config.train.epochs {
        let batches = shuffled_batches(data.len(), config.train.batch_size, shuffle_seed, epoch);
        let mut epoch_loss = 0.0;
        for batch in &batches {
            let p = &params;
            let (loss, grads) = accumulate_chunks(exec, batch, |ci, idx| {
                let seqs: Vec<&[Row]> = idx.iter().map(|&i| data[i].as_slice()).collect();
                let b = Batch::new(config, &seqs);
                let mut rng = seed::rng(seed::derive_indexed(noise_seed, step, ci as u64));
                let noise = Array2::from_shape_fn((b.size, config.latent_size), |_| StandardNormal.sample(&mut rng));
                net.loss_and_grads(p, &b, &noise, config.kl_weight)
            })?;
            apply_update(&mut params, grads, &mut opt, config.train.clip_norm)?;
            epoch_loss += loss * batch.len() as f64;
            step += 1;
        }
        loss_history.push(epoch_loss / data.len() as f64);
    }
    Ok(DyadModel {
        config: config.clone(),
        norm,
        params,
        net,
        loss_history,
    })
}

impl DyadModel {
    /// Reconstruction errors over the response channels, in input order.
    pub fn score_snippets(&self, snippets: &[ChargingSnippet], exec: Execution) -> Result<Vec<f64>, DetectorError> {
        let chunks: Vec<&[ChargingSnippet]> = snippets.chunks(SCORE_CHUNK).collect();
        let scored = exec.map(&chunks, |chunk| -> Result<Vec<f64>, DiffError> {
            let data: Vec<Vec<Row>> = chunk.iter().map(|s| self.norm.apply(s)).collect();
            let seqs: Vec<&[Row]> = data.iter().map(Vec::as_slice).collect();
            let b = Batch::new(&self.config, &seqs);
            let y = self.net.reconstruct(&self.params, &b)?;
            Ok(per_sample_mse(&y, &b.target, b.size))
        });
        let mut out = Vec::with_capacity(snippets.len());
        for s in scored {
            out.extend(s?);
        }
        Ok(out)
    }

    /// Decoded response channels of one snippet in normalized units, one row
    /// per time step, columns in `config.response_channels` order.
    pub fn reconstruct(&self, snippet: &ChargingSnippet) -> Result<Matrix, DetectorError> {
        let data = self.norm.apply(snippet);
        let b = Batch::new(&self.config, &[data.as_slice()]);
        Ok(self.net.reconstruct(&self.params, &b)?)
    }

    /// Training objective on a fixed set of snippets with a given noise draw.
    #[cfg(test)]
    fn objective(&self, p: &ModelParams, snippets: &[&[Row]], noise: &Matrix) -> Result<(f64, Grads), DiffError> {
        let b = Batch::new(&self.config, snippets);
        self.net.loss_and_grads(p, &b, noise, self.config.kl_weight)
    }
}

pub fn dyad_score(model: &DyadModel, snippet: &ChargingSnippet) -> Result<SnippetScore, DetectorError> {
    let score = model.score_snippets(std::slice::from_ref(snippet), Execution::Sequential)?[0];
    Ok(SnippetScore {
        vehicle_id: snippet.vehicle_id.clone(),
        snippet_index: snippet.snippet_index,
        score,
    })
}
