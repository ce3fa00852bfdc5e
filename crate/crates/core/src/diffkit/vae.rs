use ndarray::Zip;

use super::{check_shape, DiffError, Matrix};

/// KL divergence of N(mu, exp(logvar)) from N(0, I), summed over dimensions.
pub fn gaussian_kl(mu: &[f64], logvar: &[f64]) -> f64 {
    -0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(&m, &lv)| 1.0 + lv - m * m - lv.exp())
        .sum::<f64>()
}

/// Batch mean of the per-row KL, with its gradients w.r.t. `mu` and `logvar`.
pub fn gaussian_kl_batch(mu: &Matrix, logvar: &Matrix) -> Result<(f64, Matrix, Matrix), DiffError> {
    check_shape("gaussian_kl", logvar, mu.dim())?;
    let b = mu.nrows().max(1) as f64;
    let mut total = 0.0;
    Zip::from(mu).and(logvar).for_each(|&m, &lv| total += 1.0 + lv - m * m - lv.exp());
    let dmu = mu.mapv(|m| m / b);
    let dlv = logvar.mapv(|lv| 0.5 * (lv.exp() - 1.0) / b);
    Ok((-0.5 * total / b, dmu, dlv))
}

/// `z = mu + exp(logvar / 2) ⊙ noise`, with the noise supplied by the caller.
pub fn reparameterize(mu: &Matrix, logvar: &Matrix, noise: &Matrix) -> Result<Matrix, DiffError> {
    check_shape("reparameterize logvar", logvar, mu.dim())?;
    check_shape("reparameterize noise", noise, mu.dim())?;
    let mut z = mu.clone();
    Zip::from(&mut z).and(logvar).and(noise).for_each(|z, &lv, &e| *z += (0.5 * lv).exp() * e);
    Ok(z)
}

/// Gradients of the reparameterization w.r.t. `mu` and `logvar`; the noise
/// receives none.
pub fn reparameterize_backward(logvar: &Matrix, noise: &Matrix, dz: &Matrix) -> Result<(Matrix, Matrix), DiffError> {
    check_shape("reparameterize_backward", dz, logvar.dim())?;
    let mut dlv = dz.clone();
    Zip::from(&mut dlv).and(logvar).and(noise).for_each(|d, &lv, &e| *d *= 0.5 * (0.5 * lv).exp() * e);
    Ok((dz.clone(), dlv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn prior_matches_posterior() {
        assert_eq!(gaussian_kl(&[0.0; 4], &[0.0; 4]), 0.0);
    }

    #[test]
    fn unit_mean_shift_costs_half_per_dimension() {
        assert!((gaussian_kl(&[1.0; 3], &[0.0; 3]) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn kl_is_non_negative() {
        let mut rng = crate::seed::rng(4);
        for _ in 0..1000 {
            let mu: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let lv: Vec<f64> = (0..5).map(|_| rng.random_range(-4.0..4.0)).collect();
            assert!(gaussian_kl(&mu, &lv) >= 0.0);
        }
    }

    #[test]
    fn batch_kl_averages_rows() {
        let mu = array![[1.0, 0.0], [0.0, 0.0]];
        let lv = array![[0.0, 0.0], [0.0, 0.0]];
        let (kl, dmu, dlv) = gaussian_kl_batch(&mu, &lv).unwrap();
        assert!((kl - 0.25).abs() < 1e-15);
        assert_eq!(dmu, array![[0.5, 0.0], [0.0, 0.0]]);
        assert!(dlv.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reparameterize_cases() {
        let mu = array![[0.3, -1.2]];
        let z = reparameterize(&mu, &array![[0.7, -0.4]], &array![[0.0, 0.0]]).unwrap();
        assert_eq!(z, mu);
        let z = reparameterize(&mu, &array![[0.0, 0.0]], &array![[1.0, 1.0]]).unwrap();
        assert_eq!(z, array![[1.3, -0.19999999999999996]]);
    }
}

#[cfg(test)]
mod gradient_tests {
    use super::*;
    use crate::diffkit::{max_matrix_error, numeric_gradient, FD_STEP};
    use crate::seed;
    use ndarray::Array2;
    use rand::Rng;

    #[test]
    fn kl_and_reparameterization_match_finite_differences() {
        let mut rng = seed::rng(2);
        let mu = Array2::from_shape_fn((3, 4), |_| rng.random_range(-1.0..1.0));
        let lv = Array2::from_shape_fn((3, 4), |_| rng.random_range(-1.0..1.0));
        let noise = Array2::from_shape_fn((3, 4), |_| rng.random_range(-1.0..1.0));
        let w = Array2::from_shape_fn((3, 4), |_| rng.random_range(-1.0..1.0));

        let (_, dmu, dlv) = gaussian_kl_batch(&mu, &lv).unwrap();
        let nmu = numeric_gradient(&mut mu.clone(), FD_STEP, |m| gaussian_kl_batch(m, &lv).unwrap().0);
        let nlv = numeric_gradient(&mut lv.clone(), FD_STEP, |l| gaussian_kl_batch(&mu, l).unwrap().0);
        assert!(max_matrix_error(&dmu, &nmu) < 1e-4);
        assert!(max_matrix_error(&dlv, &nlv) < 1e-4);

        let (rmu, rlv) = reparameterize_backward(&lv, &noise, &w).unwrap();
        let nmu = numeric_gradient(&mut mu.clone(), FD_STEP, |m| (reparameterize(m, &lv, &noise).unwrap() * &w).sum());
        let nlv = numeric_gradient(&mut lv.clone(), FD_STEP, |l| (reparameterize(&mu, l, &noise).unwrap() * &w).sum());
        assert!(max_matrix_error(&rmu, &nmu) < 1e-4);
        assert!(max_matrix_error(&rlv, &nlv) < 1e-4);
    }
}
