use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{DiffError, Matrix};

/// Index of a tensor inside a [`ModelParams`] store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tensor {
    name: String,
    shape: [usize; 2],
    trainable: bool,
    data: Vec<f64>,
}

/// Named parameter tensors with paired gradient buffers.
///
/// Non-trainable entries (batch-norm running statistics) live here too so a
/// checkpoint captures the whole model state; the optimizer skips them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelParams {
    names: Vec<String>,
    trainable: Vec<bool>,
    values: Vec<Matrix>,
    grads: Grads,
}

/// Gradient buffers aligned with a [`ModelParams`] store.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Grads(pub Vec<Matrix>);

impl Grads {
    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.0[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.0[id.0]
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.0 {
            g.mapv_inplace(|v| v * s);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.0.iter().flat_map(|g| g.iter()).map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Rescale so the global norm is at most `max_norm`; returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
        norm
    }
}

impl ModelParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.push(name.into(), value, true)
    }

    pub fn add_state(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.push(name.into(), value, false)
    }

    fn push(&mut self, name: String, value: Matrix, trainable: bool) -> ParamId {
        self.grads.0.push(Array2::zeros(value.dim()));
        self.names.push(name);
        self.trainable.push(trainable);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.trainable[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn grads(&self) -> &Grads {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut Grads {
        &mut self.grads
    }

    /// Fresh zeroed buffers with this store's shapes.
    pub fn zero_grads_like(&self) -> Grads {
        Grads(self.values.iter().map(|v| Array2::zeros(v.dim())).collect())
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads.0 {
            g.fill(0.0);
        }
    }

    /// Install `grads` as the store's gradient buffers.
    pub fn set_grads(&mut self, grads: Grads) -> Result<(), DiffError> {
        if grads.0.len() != self.values.len() {
            return Err(DiffError::Checkpoint(format!(
                "gradient set has {} tensors, store has {}",
                grads.0.len(),
                self.values.len()
            )));
        }
        for (g, v) in grads.0.iter().zip(&self.values) {
            super::check_shape("set_grads", g, v.dim())?;
        }
        self.grads = grads;
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// Total number of scalar entries.
    pub fn n_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }
}

impl Serialize for ModelParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let tensors: Vec<Tensor> = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| Tensor {
                name: self.names[i].clone(),
                shape: [v.nrows(), v.ncols()],
                trainable: self.trainable[i],
                data: v.iter().copied().collect(),
            })
            .collect();
        tensors.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ModelParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let tensors = Vec::<Tensor>::deserialize(d)?;
        let mut p = ModelParams::new();
        for t in tensors {
            let m = Array2::from_shape_vec((t.shape[0], t.shape[1]), t.data).map_err(serde::de::Error::custom)?;
            p.push(t.name, m, t.trainable);
        }
        Ok(p)
    }
}
