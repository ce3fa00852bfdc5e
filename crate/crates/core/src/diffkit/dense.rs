use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_cols, check_shape, col_sums, sigmoid, DiffError, Grads, Matrix, ModelParams, ParamId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Sigmoid,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Sigmoid => sigmoid(x),
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// `y = act(x·W + b)` with `W: in × out`, `b: 1 × out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub activation: Activation,
    pub input: usize,
    pub output: usize,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    x: Matrix,
    y: Matrix,
}

impl DenseCache {
    pub fn output(&self) -> &Matrix {
        &self.y
    }
}

impl Dense {
    /// Glorot-uniform weights, zero bias.
    pub fn new(
        params: &mut ModelParams,
        name: &str,
        input: usize,
        output: usize,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Dense {
        let a = (6.0 / (input + output) as f64).sqrt();
        let w = Array2::from_shape_fn((input, output), |_| rng.random_range(-a..a));
        Dense {
            w: params.add(format!("{name}.weight"), w),
            b: params.add(format!("{name}.bias"), Array2::zeros((1, output))),
            activation,
            input,
            output,
        }
    }

    pub fn forward(&self, p: &ModelParams, x: &Matrix) -> Result<(Matrix, DenseCache), DiffError> {
        check_cols("dense.forward", x, self.input)?;
        let mut y = x.dot(p.value(self.w));
        y += p.value(self.b);
        let act = self.activation;
        if act != Activation::Identity {
            y.mapv_inplace(|v| act.apply(v));
        }
        let cache = DenseCache { x: x.clone(), y: y.clone() };
        Ok((y, cache))
    }

    /// Forward without keeping a cache.
    pub fn infer(&self, p: &ModelParams, x: &Matrix) -> Result<Matrix, DiffError> {
        check_cols("dense.infer", x, self.input)?;
        let mut y = x.dot(p.value(self.w));
        y += p.value(self.b);
        let act = self.activation;
        if act != Activation::Identity {
            y.mapv_inplace(|v| act.apply(v));
        }
        Ok(y)
    }

    /// Accumulate parameter gradients into `grads`; return `dL/dx`.
    pub fn backward(&self, p: &ModelParams, cache: &DenseCache, dy: &Matrix, grads: &mut Grads) -> Result<Matrix, DiffError> {
        check_shape("dense.backward", dy, cache.y.dim())?;
        let act = self.activation;
        let mut da = dy.clone();
        if act != Activation::Identity {
            ndarray::Zip::from(&mut da).and(&cache.y).for_each(|d, &y| *d *= act.derivative_from_output(y));
        }
        *grads.get_mut(self.w) += &cache.x.t().dot(&da);
        *grads.get_mut(self.b) += &col_sums(&da);
        Ok(da.dot(&p.value(self.w).t()))
    }
}


#[cfg(test)]
mod gradient_tests {
    use super::*;
    use crate::diffkit::{max_matrix_error, max_param_error, numeric_gradient, FD_STEP};
    use crate::seed;

    #[test]
    fn matches_finite_differences() {
        for (i, act) in [Activation::Identity, Activation::Sigmoid, Activation::Relu, Activation::Tanh].into_iter().enumerate() {
            let mut rng = seed::rng(i as u64);
            let mut p = ModelParams::new();
            let d = Dense::new(&mut p, "d", 4, 3, act, &mut rng);
            let x = Array2::from_shape_fn((5, 4), |_| rng.random_range(-1.0..1.0));
            let w = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0..1.0));
            let loss = |p: &ModelParams, x: &Matrix| (d.infer(p, x).unwrap() * &w).sum();
            let (_, cache) = d.forward(&p, &x).unwrap();
            let mut g = p.zero_grads_like();
            let dx = d.backward(&p, &cache, &w, &mut g).unwrap();
            assert!(max_param_error(&p, &g, FD_STEP, |p| loss(p, &x)) < 1e-4);
            let nx = numeric_gradient(&mut x.clone(), FD_STEP, |x| loss(&p, x));
            assert!(max_matrix_error(&dx, &nx) < 1e-4);
        }
    }
}
