use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Row, MODELED_CHANNELS};

/// Mean, std, min, max and last value of each modeled channel.
pub const N_SUMMARY_FEATURES: usize = 5 * MODELED_CHANNELS.len();

/// Summary features of one (normalized) series, channel-major.
pub fn summary_features(series: &[Row]) -> Vec<f64> {
    let n = series.len() as f64;
    let mut out = Vec::with_capacity(N_SUMMARY_FEATURES);
    for c in MODELED_CHANNELS {
        let vals = series.iter().map(|r| r[c.index()]);
        let mean = vals.clone().sum::<f64>() / n;
        let var = vals.clone().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let min = vals.clone().fold(f64::INFINITY, f64::min);
        let max = vals.fold(f64::NEG_INFINITY, f64::max);
        let last = series.last().map_or(0.0, |r| r[c.index()]);
        out.extend([mean, var.sqrt(), min, max, last]);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeFit {
    pub coef: Vec<f64>,
    /// Not penalized.
    pub intercept: f64,
}

impl RidgeFit {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }
}

/// Centered design matrix, centered targets and the column means.
fn centered(x: &[Vec<f64>], y: &[f64]) -> (DMatrix<f64>, DVector<f64>, DVector<f64>, f64) {
    let (n, d) = (x.len(), x[0].len());
    let xm = DMatrix::from_fn(n, d, |i, j| x[i][j]);
    let means = DVector::from_fn(d, |j, _| xm.column(j).mean());
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let xc = DMatrix::from_fn(n, d, |i, j| xm[(i, j)] - means[j]);
    let yc = DVector::from_fn(n, |i, _| y[i] - y_mean);
    (xc, yc, means, y_mean)
}

/// System matrix `XcᵀXc/n + λI` and right-hand side `Xcᵀyc/n`.
fn normal_system(xc: &DMatrix<f64>, yc: &DVector<f64>, lambda: f64) -> (DMatrix<f64>, DVector<f64>) {
    let n = xc.nrows() as f64;
    let mut a = xc.transpose() * xc / n;
    for j in 0..a.nrows() {
        a[(j, j)] += lambda;
    }
    (a, xc.transpose() * yc / n)
}

/// Minimize `mean((y − b − Xβ)²) + λ‖β‖²`. The intercept is absorbed by
/// centering. Cholesky when the system is positive definite, otherwise the
/// minimum-norm SVD solution.
pub fn ridge_fit(x: &[Vec<f64>], y: &[f64], lambda: f64) -> RidgeFit {
    assert!(!x.is_empty() && x.len() == y.len(), "ridge_fit needs matching non-empty inputs");
    let (xc, yc, means, y_mean) = centered(x, y);
    let (a, b) = normal_system(&xc, &yc, lambda);
    let beta = match a.clone().cholesky() {
        Some(ch) => ch.solve(&b),
        None => a
            .svd(true, true)
            .solve(&b, 1e-12)
            .expect("both SVD factors were requested"),
    };
    RidgeFit {
        intercept: y_mean - means.dot(&beta),
        coef: beta.iter().copied().collect(),
    }
}

/// Euclidean norm of the normal-equation residual of a fit.
pub fn ridge_residual(x: &[Vec<f64>], y: &[f64], lambda: f64, fit: &RidgeFit) -> f64 {
    let (xc, yc, _, _) = centered(x, y);
    let (a, b) = normal_system(&xc, &yc, lambda);
    (a * DVector::from_column_slice(&fit.coef) - b).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_solved_three_samples() {
        // x = [0, 1, 2], y = [1, 3, 4], λ = 0.5.
        // Centered: xc = [-1, 0, 1], yc = [-4/3, 2/3, 5/3].
        // (Σxc²/3 + λ)β = Σxc·yc/3  →  (2/3 + 1/2)β = 1  →  β = 6/7.
        // b = 8/3 − β·1 = 38/21.
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        let y = [1.0, 3.0, 4.0];
        let fit = ridge_fit(&x, &y, 0.5);
        assert!((fit.coef[0] - 6.0 / 7.0).abs() < 1e-14);
        assert!((fit.intercept - 38.0 / 21.0).abs() < 1e-14);
        assert!((fit.predict(&[3.0]) - (38.0 / 21.0 + 18.0 / 7.0)).abs() < 1e-13);
    }

    #[test]
    fn zero_penalty_recovers_exact_line() {
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| 2.0 - 0.5 * r[0] + 0.25 * r[1]).collect();
        let fit = ridge_fit(&x, &y, 0.0);
        assert!((fit.coef[0] + 0.5).abs() < 1e-10 && (fit.coef[1] - 0.25).abs() < 1e-10);
        assert!((fit.intercept - 2.0).abs() < 1e-10);
    }

    #[test]
    fn constant_targets_give_constant_predictions() {
        // Duplicate columns make the unpenalized system singular.
        let x: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, i as f64, 1.0]).collect();
        let y = [36.5; 5];
        let fit = ridge_fit(&x, &y, 0.0);
        for r in &x {
            assert!((fit.predict(r) - 36.5).abs() < 1e-12);
        }
    }

    #[test]
    fn huge_penalty_predicts_the_mean() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, (i as f64).sin()]).collect();
        let y: Vec<f64> = (0..8).map(|i| 30.0 + i as f64).collect();
        let fit = ridge_fit(&x, &y, 1e12);
        assert!(fit.coef.iter().all(|b| b.abs() < 1e-9));
        assert!((fit.predict(&x[0]) - 33.5).abs() < 1e-8);
    }

    #[test]
    fn summary_features_of_a_ramp() {
        let series: Vec<Row> = (0..4).map(|t| [t as f64; crate::data::N_CHANNELS]).collect();
        let f = summary_features(&series);
        assert_eq!(f.len(), N_SUMMARY_FEATURES);
        assert_eq!(&f[..5], &[1.5, 1.25f64.sqrt(), 0.0, 3.0, 3.0]);
    }

    proptest! {
        #[test]
        fn solution_satisfies_normal_equations(
            rows in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 4), 3..40),
            lambda in 0.0f64..1.0,
        ) {
            let y: Vec<f64> = rows.iter().enumerate().map(|(i, r)| r[0] - 2.0 * r[3] + (i as f64).cos()).collect();
            let fit = ridge_fit(&rows, &y, lambda);
            prop_assert!(ridge_residual(&rows, &y, lambda, &fit) <= 1e-8);
        }

        #[test]
        fn larger_penalty_never_grows_coefficients(
            rows in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 3), 5..30),
            l1 in 1e-3f64..1.0,
            factor in 1.5f64..100.0,
        ) {
            let y: Vec<f64> = rows.iter().map(|r| r[0] + r[1] * r[2]).collect();
            let norm = |f: &RidgeFit| f.coef.iter().map(|b| b * b).sum::<f64>();
            let small = ridge_fit(&rows, &y, l1);
            let big = ridge_fit(&rows, &y, l1 * factor);
            prop_assert!(norm(&big) <= norm(&small) * (1.0 + 1e-9) + 1e-15);
        }
    }
}
