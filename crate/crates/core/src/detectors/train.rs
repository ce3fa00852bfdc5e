use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::diffkit::{adam_step, AdamConfig, CosineSchedule, DiffError, Grads, ModelParams, OptimizerState};
use crate::exec::Execution;
use crate::seed;

/// Rows per gradient chunk. A batch is split into fixed chunks that are
/// differentiated independently and summed in order, so the update is the
/// same whether chunks run sequentially or on the thread pool.
pub(crate) const GRAD_CHUNK: usize = 32;

/// Snippets per inference call.
pub(crate) const SCORE_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl TrainSettings {
    pub(crate) fn validate(&self) -> Result<(), String> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err("epochs and batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0) {
            return Err("learning_rate must be positive".into());
        }
        Ok(())
    }

    pub(crate) fn optimizer(&self, params: &ModelParams, n: usize) -> OptimizerState {
        let steps = (self.epochs * n.div_ceil(self.batch_size)) as u64;
        OptimizerState::new(
            params,
            AdamConfig {
                learning_rate: self.learning_rate,
                ..AdamConfig::default()
            },
            Some(CosineSchedule { period: steps }),
        )
    }
}

/// Seeded shuffle of `0..n` cut into batches.
pub(crate) fn shuffled_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed::derive(seed, epoch as u64)));
    idx.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Batch-mean loss and gradient from per-chunk means, weighted by chunk size.
pub(crate) fn accumulate_chunks<F>(exec: Execution, batch: &[usize], f: F) -> Result<(f64, Grads), DiffError>
where
    F: Fn(usize, &[usize]) -> Result<(f64, Grads), DiffError> + Sync + Send,
{
    let chunks: Vec<&[usize]> = batch.chunks(GRAD_CHUNK).collect();
    let results = exec.map_range(chunks.len(), |i| f(i, chunks[i]));
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut total: Option<Grads> = None;
    for (r, chunk) in results.into_iter().zip(&chunks) {
        let (l, mut g) = r?;
        let w = chunk.len() as f64 / n;
        g.scale(w);
        loss += l * w;
        match total.as_mut() {
            None => total = Some(g),
            Some(t) => t.add_assign(&g),
        }
    }
    Ok((loss, total.expect("non-empty batch")))
}

/// Clip, install and apply one optimizer step.
pub(crate) fn apply_update(
    params: &mut ModelParams,
    mut grads: Grads,
    state: &mut OptimizerState,
    clip: Option<f64>,
) -> Result<(), DiffError> {
    if let Some(c) = clip {
        grads.clip_global_norm(c);
    }
    params.set_grads(grads)?;
    adam_step(params, state)
}
