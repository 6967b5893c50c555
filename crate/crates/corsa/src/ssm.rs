//! Gaussian state space machinery for the identity-specialized local-level
//! model.
//!
//! Group trends evolve as `a_{t+1} = a_t + xi_t`, `xi_t ~ N(0, psi_r)`, with
//! `a_1 ~ N(m0, P0)`. Because runners are conditionally iid within a group
//! (`Sigma^C = I`), the group mean of completed observations is a sufficient
//! statistic with measurement noise `sigma_r / n_g`, so each group reduces
//! to one P-dimensional local-level series. Covariance propagation uses the
//! Joseph-form update and every covariance is re-symmetrized after each
//! step.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::stats::{cholesky_log_det, robust_cholesky, sample_mvn_chol, symmetrize};

/// Mean and covariance of a Gaussian state summary.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMoments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianMoments {
    /// Construct, forcing exact symmetry of the covariance.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        debug_assert_eq!(mean.len(), cov.nrows());
        debug_assert_eq!(cov.nrows(), cov.ncols());
        let cov = symmetrize(&cov);
        GaussianMoments { mean, cov }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Completed (fully imputed) observation values in panel cell layout
/// `p + P * (q + Q * t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletedValues {
    values: Vec<f64>,
    n_disciplines: usize,
    n_runners: usize,
    n_years: usize,
}

impl CompletedValues {
    pub fn new(
        values: Vec<f64>,
        n_disciplines: usize,
        n_runners: usize,
        n_years: usize,
    ) -> Result<Self> {
        if values.len() != n_disciplines * n_runners * n_years {
            return Err(Error::validation("completed value buffer has wrong length"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("completed values must be finite"));
        }
        Ok(CompletedValues {
            values,
            n_disciplines,
            n_runners,
            n_years,
        })
    }

    #[inline]
    pub fn get(&self, p: usize, q: usize, t: usize) -> f64 {
        self.values[p + self.n_disciplines * (q + self.n_runners * t)]
    }

    #[inline]
    pub fn set(&mut self, p: usize, q: usize, t: usize, v: f64) {
        self.values[p + self.n_disciplines * (q + self.n_runners * t)] = v;
    }

    /// The P-vector of one (runner, year) cell column.
    pub fn cell_column(&self, q: usize, t: usize) -> DVector<f64> {
        DVector::from_fn(self.n_disciplines, |p, _| self.get(p, q, t))
    }

    pub fn n_disciplines(&self) -> usize {
        self.n_disciplines
    }

    pub fn n_runners(&self) -> usize {
        self.n_runners
    }

    pub fn n_years(&self) -> usize {
        self.n_years
    }

    pub fn raw(&self) -> &[f64] {
        &self.values
    }
}

/// Collapsed per-group series: mean of completed observations per year and
/// the member count.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSeries {
    /// Group mean per year; empty when `count == 0`.
    pub means: Vec<DVector<f64>>,
    /// Number of runners allocated to the group.
    pub count: usize,
}

/// Latent group trends: one `P x G` matrix per year, column `g` holding the
/// group-`g` trend across disciplines.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentStates {
    pub a: Vec<DMatrix<f64>>,
}

impl LatentStates {
    pub fn n_years(&self) -> usize {
        self.a.len()
    }

    pub fn n_groups(&self) -> usize {
        self.a[0].ncols()
    }

    pub fn n_disciplines(&self) -> usize {
        self.a[0].nrows()
    }

    /// Trend of group `g` at year `t`.
    pub fn group_state(&self, g: usize, t: usize) -> DVector<f64> {
        self.a[t].column(g).into_owned()
    }
}

/// Average completed observations per group. Groups with no members get
/// `count == 0` and no means.
pub fn collapse_groups(
    values: &CompletedValues,
    allocation: &[usize],
    n_groups: usize,
) -> Vec<GroupSeries> {
    let p_n = values.n_disciplines();
    let t_n = values.n_years();
    let mut counts = vec![0usize; n_groups];
    let mut sums: Vec<Vec<DVector<f64>>> =
        vec![vec![DVector::zeros(p_n); t_n]; n_groups];
    for (q, &g) in allocation.iter().enumerate() {
        counts[g] += 1;
        for t in 0..t_n {
            for p in 0..p_n {
                sums[g][t][p] += values.get(p, q, t);
            }
        }
    }
    counts
        .into_iter()
        .zip(sums)
        .map(|(count, sum)| {
            if count == 0 {
                GroupSeries {
                    means: Vec::new(),
                    count: 0,
                }
            } else {
                GroupSeries {
                    means: sum.into_iter().map(|s| s / count as f64).collect(),
                    count,
                }
            }
        })
        .collect()
}

/// Kalman filter output for one group series.
#[derive(Debug, Clone)]
pub struct FilterOutput {
    /// One-step-ahead moments `a_{t|t-1}`.
    pub predicted: Vec<GaussianMoments>,
    /// Posterior moments `a_{t|t}`.
    pub filtered: Vec<GaussianMoments>,
    /// Prediction-error decomposition of `log p(ybar_1, ..., ybar_T)`.
    pub log_likelihood: f64,
}

fn check_noise_inputs(
    series: &GroupSeries,
    sigma_r: &DMatrix<f64>,
    psi_r: &DMatrix<f64>,
    init: &GaussianMoments,
) -> Result<usize> {
    if series.count == 0 {
        return Err(Error::validation(
            "kalman filter requires a non-empty group (count >= 1)",
        ));
    }
    let p_n = init.dim();
    if sigma_r.nrows() != p_n || psi_r.nrows() != p_n {
        return Err(Error::validation(
            "covariance dimensions do not match the state dimension",
        ));
    }
    for m in &series.means {
        if m.len() != p_n {
            return Err(Error::validation("series dimension mismatch"));
        }
    }
    Ok(p_n)
}

/// Local-level Kalman filter over a collapsed group series, with
/// observation noise `sigma_r / count` and state noise `psi_r`.
pub fn kalman_filter(
    series: &GroupSeries,
    sigma_r: &DMatrix<f64>,
    psi_r: &DMatrix<f64>,
    init: &GaussianMoments,
) -> Result<FilterOutput> {
    let p_n = check_noise_inputs(series, sigma_r, psi_r, init)?;
    let t_n = series.means.len();
    if t_n == 0 {
        return Err(Error::validation("series must span at least one year"));
    }
    let r = sigma_r / series.count as f64;
    let eye = DMatrix::<f64>::identity(p_n, p_n);
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();

    let mut predicted = Vec::with_capacity(t_n);
    let mut filtered = Vec::with_capacity(t_n);
    let mut log_likelihood = 0.0;

    let mut a_pred = init.mean.clone();
    let mut p_pred = symmetrize(&init.cov);

    for (t, y) in series.means.iter().enumerate() {
        predicted.push(GaussianMoments::new(a_pred.clone(), p_pred.clone()));

        // Innovation and its covariance (Z = I).
        let v = y - &a_pred;
        let s = symmetrize(&(&p_pred + &r));
        let chol = robust_cholesky(&s, &format!("innovation covariance at year {}", t + 1))?;
        let s_inv_v = chol.solve(&v);
        log_likelihood += -0.5 * (p_n as f64 * ln_2pi + cholesky_log_det(&chol) + v.dot(&s_inv_v));

        // Gain K = P S^{-1}; Joseph-form covariance update.
        let k = chol.solve(&p_pred.transpose()).transpose();
        let m_filt = &a_pred + &k * &v;
        let i_minus_k = &eye - &k;
        let c_filt = &i_minus_k * &p_pred * i_minus_k.transpose() + &k * &r * k.transpose();
        let c_filt = symmetrize(&c_filt);
        filtered.push(GaussianMoments::new(m_filt.clone(), c_filt.clone()));

        // Random-walk prediction.
        a_pred = m_filt;
        p_pred = symmetrize(&(&c_filt + psi_r));
    }

    Ok(FilterOutput {
        predicted,
        filtered,
        log_likelihood,
    })
}

/// Backward (RTS) smoothing pass over a filter output. The transition is
/// the identity, so the smoothing gain is `J_t = C_t P_{t+1|t}^{-1}`.
pub fn kalman_smoother(filter: &FilterOutput) -> Result<Vec<GaussianMoments>> {
    let t_n = filter.filtered.len();
    if t_n == 0 {
        return Err(Error::validation("empty filter output"));
    }
    let mut smoothed = filter.filtered.clone();
    for t in (0..t_n - 1).rev() {
        let c_filt = &filter.filtered[t].cov;
        let p_pred_next = &filter.predicted[t + 1].cov;
        let chol = robust_cholesky(
            p_pred_next,
            &format!("predicted covariance at year {}", t + 2),
        )?;
        let j = chol.solve(&c_filt.transpose()).transpose();
        let dm = &smoothed[t + 1].mean - &filter.predicted[t + 1].mean;
        let dp = &smoothed[t + 1].cov - p_pred_next;
        let mean = &filter.filtered[t].mean + &j * dm;
        let cov = symmetrize(&(c_filt + &j * dp * j.transpose()));
        smoothed[t] = GaussianMoments::new(mean, cov);
    }
    Ok(smoothed)
}

/// Draw one state path from the joint smoothing distribution by forward
/// filtering and backward sampling.
pub fn simulation_smoother<R: Rng>(
    series: &GroupSeries,
    sigma_r: &DMatrix<f64>,
    psi_r: &DMatrix<f64>,
    init: &GaussianMoments,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    let filter = kalman_filter(series, sigma_r, psi_r, init)?;
    let t_n = filter.filtered.len();
    let mut path = vec![DVector::zeros(init.dim()); t_n];

    let last = &filter.filtered[t_n - 1];
    let chol = robust_cholesky(&last.cov, "filtered covariance at final year")?;
    path[t_n - 1] = sample_mvn_chol(&last.mean, &chol.l(), rng);

    for t in (0..t_n.saturating_sub(1)).rev() {
        let c_filt = &filter.filtered[t].cov;
        let p_pred_next = &filter.predicted[t + 1].cov;
        let chol_pred = robust_cholesky(
            p_pred_next,
            &format!("predicted covariance at year {}", t + 2),
        )?;
        let j = chol_pred.solve(&c_filt.transpose()).transpose();
        let mean = &filter.filtered[t].mean + &j * (&path[t + 1] - &filter.predicted[t + 1].mean);
        let cov = symmetrize(&(c_filt - &j * p_pred_next * j.transpose()));
        let chol_cond = robust_cholesky(&cov, &format!("sampling covariance at year {}", t + 1))?;
        path[t] = sample_mvn_chol(&mean, &chol_cond.l(), rng);
    }
    Ok(path)
}

/// Draw a state path from the prior: `a_1 ~ N(init)` followed by the random
/// walk. Used for groups with no members.
pub fn sample_prior_trajectory<R: Rng>(
    init: &GaussianMoments,
    psi_r: &DMatrix<f64>,
    n_years: usize,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    if n_years == 0 {
        return Err(Error::validation("trajectory needs at least one year"));
    }
    let chol0 = robust_cholesky(&init.cov, "initial state covariance")?;
    let l0 = chol0.l();
    // A zero disturbance covariance is allowed: the walk degenerates to a
    // constant path.
    let l_psi = if psi_r.amax() == 0.0 {
        DMatrix::zeros(psi_r.nrows(), psi_r.ncols())
    } else {
        robust_cholesky(psi_r, "state disturbance covariance")?.l()
    };
    let mut path = Vec::with_capacity(n_years);
    path.push(sample_mvn_chol(&init.mean, &l0, rng));
    for t in 1..n_years {
        let prev = path[t - 1].clone();
        path.push(sample_mvn_chol(&prev, &l_psi, rng));
    }
    Ok(path)
}
