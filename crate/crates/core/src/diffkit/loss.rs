use super::{check_shape, DiffError, Matrix};

/// Mean squared error over every entry, with its gradient w.r.t. `pred`.
pub fn mse(pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix), DiffError> {
    check_shape("mse", target, pred.dim())?;
    let n = pred.len().max(1) as f64;
    let diff = pred - target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    Ok((loss, diff.mapv(|d| 2.0 * d / n)))
}
