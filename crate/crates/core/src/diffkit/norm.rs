use ndarray::{Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_cols, col_sums, DiffError, Grads, Matrix, ModelParams, ParamId};

/// Batch normalization over rows with learned scale/shift and running
/// statistics for inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub features: usize,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    x_hat: Matrix,
    inv_std: Matrix,
    batch_mean: Matrix,
    batch_var: Matrix,
}

impl BatchNorm {
    pub fn new(params: &mut ModelParams, name: &str, features: usize) -> BatchNorm {
        BatchNorm {
            gamma: params.add(format!("{name}.gamma"), Array2::ones((1, features))),
            beta: params.add(format!("{name}.beta"), Array2::zeros((1, features))),
            running_mean: params.add_state(format!("{name}.running_mean"), Array2::zeros((1, features))),
            running_var: params.add_state(format!("{name}.running_var"), Array2::ones((1, features))),
            features,
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    /// Normalize with the batch's own statistics (biased variance).
    pub fn forward_train(&self, p: &ModelParams, x: &Matrix) -> Result<(Matrix, BatchNormCache), DiffError> {
        check_cols("batchnorm", x, self.features)?;
        let b = x.nrows() as f64;
        let mean = x.mean_axis(Axis(0)).expect("non-empty batch").insert_axis(Axis(0));
        let centered = x - &mean;
        let var = centered.mapv(|v| v * v).sum_axis(Axis(0)).insert_axis(Axis(0)) / b;
        let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        let x_hat = &centered * &inv_std;
        let y = &x_hat * p.value(self.gamma) + p.value(self.beta);
        Ok((
            y,
            BatchNormCache {
                x_hat,
                inv_std,
                batch_mean: mean,
                batch_var: var,
            },
        ))
    }

    pub fn forward_eval(&self, p: &ModelParams, x: &Matrix) -> Result<Matrix, DiffError> {
        check_cols("batchnorm", x, self.features)?;
        let inv_std = p.value(self.running_var).mapv(|v| 1.0 / (v + self.eps).sqrt());
        Ok((x - p.value(self.running_mean)) * &inv_std * p.value(self.gamma) + p.value(self.beta))
    }

    /// Fold a training batch's statistics into the running estimates
    /// (unbiased variance, exponential moving average).
    pub fn update_running(&self, p: &mut ModelParams, cache: &BatchNormCache, batch: usize) {
        let m = self.momentum;
        let unbias = if batch > 1 { batch as f64 / (batch - 1) as f64 } else { 1.0 };
        let rm = p.value(self.running_mean) * (1.0 - m) + &cache.batch_mean * m;
        let rv = p.value(self.running_var) * (1.0 - m) + &cache.batch_var * (m * unbias);
        *p.value_mut(self.running_mean) = rm;
        *p.value_mut(self.running_var) = rv;
    }

    pub fn backward(&self, p: &ModelParams, cache: &BatchNormCache, dy: &Matrix, grads: &mut Grads) -> Result<Matrix, DiffError> {
        check_cols("batchnorm.backward", dy, self.features)?;
        let b = dy.nrows() as f64;
        *grads.get_mut(self.gamma) += &col_sums(&(dy * &cache.x_hat));
        *grads.get_mut(self.beta) += &col_sums(dy);
        let dx_hat = dy * p.value(self.gamma);
        let sum_dxh = col_sums(&dx_hat);
        let sum_dxh_xh = col_sums(&(&dx_hat * &cache.x_hat));
        let dx = (&dx_hat * b - &sum_dxh - &cache.x_hat * &sum_dxh_xh) * &cache.inv_std / b;
        Ok(dx)
    }
}

/// Inverted-dropout mask: entries are 0 with probability `p`, else `1/(1-p)`.
pub fn dropout_mask(rng: &mut impl Rng, shape: (usize, usize), p: f64) -> Matrix {
    if p <= 0.0 {
        return Array2::ones(shape);
    }
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_fn(shape, |_| if rng.random::<f64>() < p { 0.0 } else { keep })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn train_mode_standardizes_columns() {
        let mut p = ModelParams::new();
        let bn = BatchNorm::new(&mut p, "bn", 2);
        let x = array![[1.0, 10.0], [3.0, 30.0], [5.0, 20.0]];
        let (y, cache) = bn.forward_train(&p, &x).unwrap();
        for c in 0..2 {
            let col = y.column(c);
            assert!(col.sum().abs() < 1e-12);
            assert!((col.mapv(|v| v * v).sum() / 3.0 - 1.0).abs() < 1e-4);
        }
        bn.update_running(&mut p, &cache, 3);
        assert!((p.value(bn.running_mean)[[0, 0]] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn dropout_mask_statistics() {
        let mut rng = crate::seed::rng(2);
        let m = dropout_mask(&mut rng, (100, 100), 0.2);
        let zeros = m.iter().filter(|&&v| v == 0.0).count();
        assert!((1700..2300).contains(&zeros));
        assert!(m.iter().all(|&v| v == 0.0 || v == 1.25));
        assert!(dropout_mask(&mut rng, (3, 3), 0.0).iter().all(|&v| v == 1.0));
    }
}

#[cfg(test)]
mod gradient_tests {
    use super::*;
    use crate::diffkit::{max_matrix_error, max_param_error, numeric_gradient, FD_STEP};
    use crate::seed;

    #[test]
    fn batchnorm_matches_finite_differences() {
        let mut rng = seed::rng(4);
        let mut p = ModelParams::new();
        let bn = BatchNorm::new(&mut p, "bn", 3);
        *p.value_mut(bn.gamma) = Array2::from_shape_fn((1, 3), |_| rng.random_range(0.5..1.5));
        *p.value_mut(bn.beta) = Array2::from_shape_fn((1, 3), |_| rng.random_range(-0.5..0.5));
        let x = Array2::from_shape_fn((6, 3), |_| rng.random_range(-2.0..2.0));
        let w = Array2::from_shape_fn((6, 3), |_| rng.random_range(-1.0..1.0));
        let loss = |p: &ModelParams, x: &Matrix| (bn.forward_train(p, x).unwrap().0 * &w).sum();
        let (_, cache) = bn.forward_train(&p, &x).unwrap();
        let mut g = p.zero_grads_like();
        let dx = bn.backward(&p, &cache, &w, &mut g).unwrap();
        assert!(max_param_error(&p, &g, FD_STEP, |p| loss(p, &x)) < 1e-4);
        let nx = numeric_gradient(&mut x.clone(), FD_STEP, |x| loss(&p, x));
        assert!(max_matrix_error(&dx, &nx) < 1e-4);
    }
}
