//! Independent numerical oracles used by the corsa test suites.
//!
//! Everything here is deliberately brute force: joint Gaussian densities are
//! assembled as full `(T*M) x (T*M)` covariance matrices and factored
//! directly, scores are computed by their defining double sums, and chain
//! standard errors come from batch means. None of it shares code with the
//! recursions it is used to check.

use nalgebra::{DMatrix, DVector};

pub mod stats;

pub use stats::*;

/// A local-level Gaussian model with observation map `y_t = H a_t + e_t`.
///
/// The latent path follows `a_1 ~ N(m0, p0)`, `a_{t+1} = a_t + xi_t` with
/// `xi_t ~ N(0, psi)`, and the measurement noise is `e_t ~ N(0, r)`,
/// independent across `t`.
#[derive(Debug, Clone)]
pub struct LocalLevelSpec {
    pub m0: DVector<f64>,
    pub p0: DMatrix<f64>,
    pub psi: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

/// Joint posterior over the stacked state path, plus the marginal
/// log-likelihood of the stacked observations.
#[derive(Debug, Clone)]
pub struct JointPosterior {
    /// Dimension of one state vector.
    pub dim: usize,
    /// Number of time steps.
    pub steps: usize,
    /// Posterior mean of the stacked path `(a_1, ..., a_T)`.
    pub mean: DVector<f64>,
    /// Posterior covariance of the stacked path.
    pub cov: DMatrix<f64>,
    /// `log p(y_1, ..., y_T)`.
    pub log_likelihood: f64,
}

impl JointPosterior {
    pub fn state_mean(&self, t: usize) -> DVector<f64> {
        self.mean.rows(t * self.dim, self.dim).into_owned()
    }

    pub fn state_cov(&self, t: usize) -> DMatrix<f64> {
        self.cov
            .view((t * self.dim, t * self.dim), (self.dim, self.dim))
            .into_owned()
    }

    /// Cross covariance between the states at steps `t` and `s`.
    pub fn state_cross_cov(&self, t: usize, s: usize) -> DMatrix<f64> {
        self.cov
            .view((t * self.dim, s * self.dim), (self.dim, self.dim))
            .into_owned()
    }
}

/// Prior covariance block `Cov(a_t, a_s) = p0 + (min(t,s) - 1) psi` with
/// one-based `t`, `s`.
fn prior_block(spec: &LocalLevelSpec, t: usize, s: usize) -> DMatrix<f64> {
    &spec.p0 + (t.min(s) as f64 - 1.0) * &spec.psi
}

/// Condition the stacked state path on the full observation sequence by
/// assembling the joint Gaussian of `(a_{1:T}, y_{1:T})` explicitly.
///
/// `ys` must hold one observation vector per step, each of length
/// `spec.h.nrows()`. Intended for small instances only (the covariance is
/// dense in `T * dim`).
pub fn joint_posterior(spec: &LocalLevelSpec, ys: &[DVector<f64>]) -> JointPosterior {
    let steps = ys.len();
    assert!(steps > 0, "need at least one observation");
    let dim = spec.m0.len();
    let m = spec.h.nrows();
    for y in ys {
        assert_eq!(y.len(), m, "observation dimension mismatch");
    }

    // Prior over the stacked states.
    let mut k_aa = DMatrix::<f64>::zeros(steps * dim, steps * dim);
    for t in 0..steps {
        for s in 0..steps {
            k_aa
                .view_mut((t * dim, s * dim), (dim, dim))
                .copy_from(&prior_block(spec, t + 1, s + 1));
        }
    }
    let mut mu_a = DVector::<f64>::zeros(steps * dim);
    for t in 0..steps {
        mu_a.rows_mut(t * dim, dim).copy_from(&spec.m0);
    }

    // Cross and observation blocks.
    let mut k_ay = DMatrix::<f64>::zeros(steps * dim, steps * m);
    let mut k_yy = DMatrix::<f64>::zeros(steps * m, steps * m);
    for t in 0..steps {
        for s in 0..steps {
            let block = prior_block(spec, t + 1, s + 1);
            k_ay
                .view_mut((t * dim, s * m), (dim, m))
                .copy_from(&(&block * spec.h.transpose()));
            let mut yy = &spec.h * &block * spec.h.transpose();
            if t == s {
                yy += &spec.r;
            }
            k_yy.view_mut((t * m, s * m), (m, m)).copy_from(&yy);
        }
    }

    let mut mu_y = DVector::<f64>::zeros(steps * m);
    let mut y_stack = DVector::<f64>::zeros(steps * m);
    for t in 0..steps {
        mu_y.rows_mut(t * m, m).copy_from(&(&spec.h * &spec.m0));
        y_stack.rows_mut(t * m, m).copy_from(&ys[t]);
    }

    let chol = k_yy
        .clone()
        .cholesky()
        .expect("oracle observation covariance must be positive definite");
    let resid = &y_stack - &mu_y;
    let alpha = chol.solve(&resid);
    let quad = resid.dot(&alpha);
    let mut logdet = 0.0;
    let l = chol.l();
    for i in 0..steps * m {
        logdet += 2.0 * l[(i, i)].ln();
    }
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let log_likelihood = -0.5 * ((steps * m) as f64 * ln_2pi + logdet + quad);

    // Posterior moments by direct conditioning.
    let gain = chol.solve(&k_ay.transpose()).transpose();
    let mean = &mu_a + &gain * &resid;
    let cov = &k_aa - &gain * &k_ay.transpose();
    let cov = 0.5 * (&cov + &cov.transpose());

    JointPosterior {
        dim,
        steps,
        mean,
        cov,
        log_likelihood,
    }
}

/// Empirical CRPS by the defining double sum,
/// `(1/B) sum |x_b - y| - (1/(2 B^2)) sum_b sum_b' |x_b - x_b'|`.
pub fn crps_double_sum(draws: &[f64], y: f64) -> f64 {
    let b = draws.len() as f64;
    assert!(b >= 1.0, "need at least one draw");
    let term1: f64 = draws.iter().map(|x| (x - y).abs()).sum::<f64>() / b;
    let mut term2 = 0.0;
    for xi in draws {
        for xj in draws {
            term2 += (xi - xj).abs();
        }
    }
    term1 - term2 / (2.0 * b * b)
}

/// Closed-form CRPS of a `N(mu, sigma^2)` forecast against outcome `y`.
pub fn crps_gaussian(mu: f64, sigma: f64, y: f64) -> f64 {
    assert!(sigma > 0.0);
    let z = (y - mu) / sigma;
    let cdf = normal_cdf(z);
    let pdf = normal_pdf(z);
    sigma * (z * (2.0 * cdf - 1.0) + 2.0 * pdf - 1.0 / std::f64::consts::PI.sqrt())
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + statrs::function::erf::erf(z / std::f64::consts::SQRT_2))
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must cover the same items");
    let n = a.len();
    assert!(n >= 2);
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b.iter()) {
        table[x][y] += 1;
    }
    let choose2 = |v: u64| -> f64 { (v as f64) * (v as f64 - 1.0) / 2.0 };
    let mut sum_ij = 0.0;
    let mut row_sums = vec![0u64; ka];
    let mut col_sums = vec![0u64; kb];
    for i in 0..ka {
        for j in 0..kb {
            sum_ij += choose2(table[i][j]);
            row_sums[i] += table[i][j];
            col_sums[j] += table[i][j];
        }
    }
    let sum_a: f64 = row_sums.iter().map(|&v| choose2(v)).sum();
    let sum_b: f64 = col_sums.iter().map(|&v| choose2(v)).sum();
    let total = choose2(n as u64);
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    if (max_index - expected).abs() < 1e-12 {
        // Degenerate case: both labelings put everything in one block.
        return 1.0;
    }
    (sum_ij - expected) / (max_index - expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_joint_posterior_matches_hand_conditioning() {
        // One step: prior N(100, 4), observation noise 1, y = 102.
        let spec = LocalLevelSpec {
            m0: DVector::from_element(1, 100.0),
            p0: DMatrix::from_element(1, 1, 4.0),
            psi: DMatrix::from_element(1, 1, 0.5),
            h: DMatrix::identity(1, 1),
            r: DMatrix::from_element(1, 1, 1.0),
        };
        let post = joint_posterior(&spec, &[DVector::from_element(1, 102.0)]);
        // m + v/(v+r) (y - m) = 100 + 0.8 * 2 = 101.6, var = v r/(v+r) = 0.8.
        assert!((post.state_mean(0)[0] - 101.6).abs() < 1e-12);
        assert!((post.state_cov(0)[(0, 0)] - 0.8).abs() < 1e-12);
        // Log-likelihood of y ~ N(100, 5).
        let want = -0.5 * ((2.0 * std::f64::consts::PI * 5.0).ln() + 4.0 / 5.0);
        assert!((post.log_likelihood - want).abs() < 1e-12);
    }

    #[test]
    fn crps_double_sum_hand_example() {
        // {1,2,3} vs y=2: 2/3 - 8/18 = 2/9.
        let got = crps_double_sum(&[1.0, 2.0, 3.0], 2.0);
        assert!((got - 2.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn gaussian_crps_at_center() {
        // y = mu: CRPS = sigma (2 phi(0) - 1/sqrt(pi)).
        let want = 2.0 * normal_pdf(0.0) - 1.0 / std::f64::consts::PI.sqrt();
        assert!((crps_gaussian(0.0, 1.0, 0.0) - want).abs() < 1e-14);
    }

    #[test]
    fn ari_perfect_and_independent() {
        let a = [0, 0, 1, 1, 2, 2];
        assert!((adjusted_rand_index(&a, &a) - 1.0).abs() < 1e-12);
        let b = [0, 1, 0, 1, 0, 1];
        assert!(adjusted_rand_index(&a, &b) < 0.5);
    }
}
