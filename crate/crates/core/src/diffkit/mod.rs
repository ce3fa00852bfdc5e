//! Small differentiable-computation kit with explicit backward passes.
//!
//! Everything is `f64` and batched along rows: a `B × F` matrix holds one
//! sample per row. Layers read parameters from a [`ModelParams`] store and
//! write gradients into a separate [`Grads`] buffer, so several batch chunks
//! can be differentiated independently and summed in a fixed order.

mod checkpoint;
mod dense;
mod gradcheck;
mod gru;
mod loss;
mod norm;
mod optim;
mod params;
mod vae;

pub use checkpoint::{config_hash, load_checkpoint, save_checkpoint, Checkpoint};
pub use dense::{Activation, Dense, DenseCache};
pub use gradcheck::{max_matrix_error, max_param_error, numeric_gradient, relative_error, FD_STEP, REL_FLOOR};
pub use gru::{last_step, Gru, GruCache};
pub use loss::mse;
pub use norm::{dropout_mask, BatchNorm, BatchNormCache};
pub use optim::{adam_step, AdamConfig, CosineSchedule, OptimizerState};
pub use params::{Grads, ModelParams, ParamId};
pub use vae::{gaussian_kl, gaussian_kl_batch, reparameterize, reparameterize_backward};

use ndarray::Array2;
use thiserror::Error;

pub type Matrix = Array2<f64>;

#[derive(Debug, Error)]
pub enum DiffError {
    #[error("shape mismatch in {op}: expected {expected:?}, got {got:?}")]
    Shape {
        op: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_shape(op: &'static str, m: &Matrix, expected: (usize, usize)) -> Result<(), DiffError> {
    if m.dim() != expected {
        return Err(DiffError::Shape {
            op,
            expected,
            got: m.dim(),
        });
    }
    Ok(())
}

pub(crate) fn check_cols(op: &'static str, m: &Matrix, cols: usize) -> Result<(), DiffError> {
    check_shape(op, m, (m.nrows(), cols))
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    // Branch-free: exp overflows to inf for very negative x, giving 0.
    1.0 / (1.0 + (-x).exp())
}

/// `exp` written without branches or libm calls so loops over slices
/// vectorize. Within a couple of ulps of `f64::exp` over `[-708, 709]`;
/// arguments outside are clamped and NaN propagates.
#[inline(always)]
pub(crate) fn exp_poly(x: f64) -> f64 {
    const MAGIC: f64 = 6_755_399_441_055_744.0; // 1.5 · 2^52
    const LN2_HI: f64 = 6.931_471_803_691_238e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    let x = if x < -708.0 { -708.0 } else { x };
    let x = if x > 709.0 { 709.0 } else { x };
    let y = x * std::f64::consts::LOG2_E + MAGIC;
    let k = y - MAGIC;
    let r = x - k * LN2_HI - k * LN2_LO;
    // Taylor series to degree 13 on |r| <= ln2/2.
    let mut p = 1.0 / 6_227_020_800.0;
    for c in [
        1.0 / 479_001_600.0,
        1.0 / 39_916_800.0,
        1.0 / 3_628_800.0,
        1.0 / 362_880.0,
        1.0 / 40_320.0,
        1.0 / 5_040.0,
        1.0 / 720.0,
        1.0 / 120.0,
        1.0 / 24.0,
        1.0 / 6.0,
        0.5,
        1.0,
        1.0,
    ] {
        p = p * r + c;
    }
    let ki = (y.to_bits() as i64).wrapping_sub(MAGIC.to_bits() as i64);
    p * f64::from_bits(((ki + 1023) << 52) as u64)
}

/// Column sums as a `1 × F` row.
pub(crate) fn col_sums(m: &Matrix) -> Matrix {
    m.sum_axis(ndarray::Axis(0)).insert_axis(ndarray::Axis(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exp_poly_edges() {
        assert_eq!(exp_poly(0.0), 1.0);
        assert!(exp_poly(f64::NAN).is_nan());
        assert!(exp_poly(-1e4) > 0.0 && exp_poly(-1e4) < 1e-300);
        assert!(exp_poly(1e4).is_finite());
    }

    proptest! {
        #[test]
        fn exp_poly_matches_libm(x in -708.0f64..709.0) {
            let (a, b) = (exp_poly(x), x.exp());
            prop_assert!(((a - b) / b).abs() <= 1e-15, "{x}: {a} vs {b}");
        }
    }
}
