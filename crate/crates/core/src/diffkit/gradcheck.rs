use super::{Grads, Matrix, ModelParams};

/// Central-difference step used by the gradient checks.
pub const FD_STEP: f64 = 1e-5;

/// Denominator floor for the relative error. Central differences on an
/// O(1) loss carry round-off near 1e-11, so entries below this magnitude are
/// judged on absolute error instead.
pub const REL_FLOOR: f64 = 1e-6;

/// `|a − n| / max(|a|, |n|, REL_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Central finite differences of `loss` with respect to every entry of `x`.
pub fn numeric_gradient(x: &mut Matrix, step: f64, mut loss: impl FnMut(&Matrix) -> f64) -> Matrix {
    let mut g = Matrix::zeros(x.dim());
    for idx in 0..x.len() {
        let (r, c) = (idx / x.ncols(), idx % x.ncols());
        let orig = x[[r, c]];
        x[[r, c]] = orig + step;
        let up = loss(x);
        x[[r, c]] = orig - step;
        let down = loss(x);
        x[[r, c]] = orig;
        g[[r, c]] = (up - down) / (2.0 * step);
    }
    g
}

/// Largest relative error between `analytic` and central differences of
/// `loss` over every trainable parameter entry.
pub fn max_param_error(params: &ModelParams, analytic: &Grads, step: f64, loss: impl Fn(&ModelParams) -> f64) -> f64 {
    let mut p = params.clone();
    let mut worst = 0.0f64;
    for id in params.ids().filter(|&id| params.is_trainable(id)) {
        let (rows, cols) = params.value(id).dim();
        for r in 0..rows {
            for c in 0..cols {
                let orig = p.value(id)[[r, c]];
                p.value_mut(id)[[r, c]] = orig + step;
                let up = loss(&p);
                p.value_mut(id)[[r, c]] = orig - step;
                let down = loss(&p);
                p.value_mut(id)[[r, c]] = orig;
                let numeric = (up - down) / (2.0 * step);
                worst = worst.max(relative_error(analytic.get(id)[[r, c]], numeric));
            }
        }
    }
    worst
}

/// Largest relative error between two equally shaped matrices.
pub fn max_matrix_error(analytic: &Matrix, numeric: &Matrix) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}
