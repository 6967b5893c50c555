//! Small statistics helpers for Monte Carlo test assertions.

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty());
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    assert!(n >= 2);
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n as f64 - 1.0)
}

/// Standard error of the mean for independent draws.
pub fn se_mean_iid(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Standard error of the mean of a correlated chain, by batch means.
///
/// The chain is cut into `n_batches` equal batches (a trailing remainder is
/// dropped) and the spread of batch means estimates the Monte Carlo error.
pub fn se_mean_batch(xs: &[f64], n_batches: usize) -> f64 {
    assert!(n_batches >= 2);
    let batch_len = xs.len() / n_batches;
    assert!(batch_len >= 1, "chain too short for requested batches");
    let batch_means: Vec<f64> = (0..n_batches)
        .map(|b| mean(&xs[b * batch_len..(b + 1) * batch_len]))
        .collect();
    (variance(&batch_means) / n_batches as f64).sqrt()
}

/// z-score of the difference of two estimates with independent errors.
pub fn z_diff(m1: f64, se1: f64, m2: f64, se2: f64) -> f64 {
    (m1 - m2).abs() / (se1 * se1 + se2 * se2).sqrt()
}

/// Standard error of an empirical covariance entry between jointly Gaussian
/// coordinates, given estimated covariances.
pub fn se_cov_gaussian(c_ii: f64, c_jj: f64, c_ij: f64, n: usize) -> f64 {
    (((c_ii * c_jj) + c_ij * c_ij) / n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_means_on_iid_matches_iid_se() {
        // Deterministic pseudo-data; batch-means se should be in the same
        // ballpark as the iid formula.
        let xs: Vec<f64> = (0..10_000)
            .map(|i| ((i as f64 * 0.7341).sin() * 1000.0).fract())
            .collect();
        let a = se_mean_iid(&xs);
        let b = se_mean_batch(&xs, 100);
        assert!(b < 3.0 * a && a < 3.0 * b, "a={a} b={b}");
    }

    #[test]
    fn z_diff_zero_for_equal_means() {
        assert_eq!(z_diff(1.0, 0.1, 1.0, 0.2), 0.0);
    }
}
