//! Shared numerical primitives: Cholesky with jitter escalation, quantiles,
//! log-sum-exp, and samplers for the conjugate families used by the Gibbs
//! steps (multivariate normal, Dirichlet, inverse Wishart).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};

/// Force exact symmetry, `(m + m^T) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (m + m.transpose())
}

/// Cholesky factorization with escalating diagonal jitter.
///
/// Covariances that are PSD up to roundoff (degenerate conditionals, near
/// zero noise) get a relative jitter of up to `1e-10 * max(diag)` before we
/// give up. `what` names the matrix in the error message.
pub fn robust_cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    let sym = symmetrize(m);
    if let Some(c) = sym.clone().cholesky() {
        return Ok(c);
    }
    let scale = sym.diagonal().amax().max(1e-300);
    for mag in [1e-14, 1e-12, 1e-10] {
        let jittered = &sym + DMatrix::<f64>::identity(m.nrows(), m.nrows()) * (mag * scale);
        if let Some(c) = jittered.cholesky() {
            return Ok(c);
        }
    }
    Err(Error::numerical(format!(
        "{what} is not positive definite (dim {})",
        m.nrows()
    )))
}

/// Log-determinant from a Cholesky factor.
pub fn cholesky_log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    let mut logdet = 0.0;
    for i in 0..l.nrows() {
        logdet += 2.0 * l[(i, i)].ln();
    }
    logdet
}

/// Log-density of `N(mean, cov)` at `x`, with `cov` given by its Cholesky.
pub fn mvn_log_density(x: &DVector<f64>, mean: &DVector<f64>, chol: &Cholesky<f64, Dyn>) -> f64 {
    let dim = x.len() as f64;
    let resid = x - mean;
    let alpha = chol.solve(&resid);
    let quad = resid.dot(&alpha);
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    -0.5 * (dim * ln_2pi + cholesky_log_det(chol) + quad)
}

/// Draw from `N(mean, L L^T)` given the lower factor `L`.
pub fn sample_mvn_chol<R: Rng>(mean: &DVector<f64>, l: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    mean + l * z
}

/// `log(sum(exp(xs)))` with the usual max shift. Returns `-inf` when every
/// entry is `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Draw an index from unnormalized log weights.
pub fn sample_categorical_log<R: Rng>(log_w: &[f64], rng: &mut R) -> Result<usize> {
    let total = log_sum_exp(log_w);
    if !total.is_finite() {
        return Err(Error::numerical(
            "categorical draw: all log weights are -inf".to_string(),
        ));
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, lw) in log_w.iter().enumerate() {
        acc += (lw - total).exp();
        last = i;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(last)
}

/// Draw an index from normalized probabilities.
pub fn sample_categorical<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Dirichlet draw by normalized Gamma variates.
pub fn sample_dirichlet<R: Rng>(alphas: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let mut draws = Vec::with_capacity(alphas.len());
    for &a in alphas {
        if a <= 0.0 {
            return Err(Error::numerical(format!(
                "Dirichlet concentration must be positive, got {a}"
            )));
        }
        let g = Gamma::new(a, 1.0)
            .map_err(|e| Error::numerical(format!("Gamma({a}, 1) setup failed: {e}")))?;
        draws.push(g.sample(rng));
    }
    let total: f64 = draws.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::numerical(
            "Dirichlet draw degenerated to zero mass".to_string(),
        ));
    }
    Ok(draws.into_iter().map(|d| d / total).collect())
}

/// Beta draw via two Gammas (stable for small shapes).
pub fn sample_beta<R: Rng>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    let ga = Gamma::new(a, 1.0)
        .map_err(|e| Error::numerical(format!("Gamma({a}, 1) setup failed: {e}")))?;
    let gb = Gamma::new(b, 1.0)
        .map_err(|e| Error::numerical(format!("Gamma({b}, 1) setup failed: {e}")))?;
    let x: f64 = ga.sample(rng);
    let y: f64 = gb.sample(rng);
    if x + y <= 0.0 {
        return Err(Error::numerical("Beta draw degenerated".to_string()));
    }
    Ok(x / (x + y))
}

/// Draw from the inverse Wishart `IW_P(df, scale)` with density proportional
/// to `|X|^{-(df + P + 1)/2} exp(-tr(scale X^{-1}) / 2)`.
///
/// Uses the Bartlett decomposition: with `L = chol(scale)` and `A` the
/// Bartlett factor of a `Wishart(df, I)`, the draw is `C C^T` where
/// `C = L A^{-T}`.
pub fn sample_inverse_wishart<R: Rng>(
    df: f64,
    scale: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let p = scale.nrows();
    if df <= (p as f64) - 1.0 {
        return Err(Error::numerical(format!(
            "inverse Wishart df {df} too small for dimension {p}"
        )));
    }
    let chol = robust_cholesky(scale, "inverse Wishart scale matrix")?;
    let l = chol.l();

    // Bartlett factor: lower triangular, chi on the diagonal, N(0,1) below.
    let mut a = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        let chi = ChiSquared::new(df - i as f64)
            .map_err(|e| Error::numerical(format!("chi-squared setup failed: {e}")))?;
        let d: f64 = chi.sample(rng);
        a[(i, i)] = d.sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }

    // The draw is C C^T with C = L A^{-T}: solve A X = L^T for X = A^{-1} L^T,
    // then C = X^T.
    let x = a
        .solve_lower_triangular(&l.transpose())
        .ok_or_else(|| Error::numerical("Bartlett factor is singular".to_string()))?;
    let c = x.transpose();
    Ok(symmetrize(&(&c * c.transpose())))
}

/// Conditional of a zero-mean Gaussian with covariance `sigma` given the
/// coordinates `obs_idx`, returned as the gain `W = S_mo S_oo^{-1}` and the
/// conditional covariance `S_mm - W S_om` for the `miss_idx` coordinates.
///
/// The conditional mean for centered data is `W (y_o - mu_o)` plus `mu_m`.
pub fn schur_conditional(
    sigma: &DMatrix<f64>,
    obs_idx: &[usize],
    miss_idx: &[usize],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let s_oo = sigma.select_rows(obs_idx).select_columns(obs_idx);
    let s_mo = sigma.select_rows(miss_idx).select_columns(obs_idx);
    let s_mm = sigma.select_rows(miss_idx).select_columns(miss_idx);
    let chol = robust_cholesky(&s_oo, "observed-coordinate covariance block")?;
    // W^T = S_oo^{-1} S_om.
    let w_t = chol.solve(&s_mo.transpose());
    let w = w_t.transpose();
    let cond = symmetrize(&(&s_mm - &w * s_mo.transpose()));
    Ok((w, cond))
}

/// Empirical quantile with linear interpolation between order statistics
/// (the `h = (n-1) q + 1` convention). `q` must lie in `[0, 1]`.
pub fn quantile_type7(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    assert!((0.0..=1.0).contains(&q), "quantile level out of range");
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n as f64 - 1.0) * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Sort a sample and return it (convenience for quantile computations).
pub fn sorted_copy(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("NaN in sample"));
    v
}
