//! Gibbs sampler over allocations, missing-value completions, latent
//! trends, and model parameters, for the four model variants.
//!
//! One sweep runs, in order:
//!
//! 1. allocations `S` (missing observation coordinates marginalized),
//! 2. completion of the missing cells given the new allocations,
//! 3. latent trends `A` by per-group simulation smoothing on the collapsed
//!    series (prior trajectories for empty groups),
//! 4. mixture weights `pi ~ Dir(e + n)` with `e = 1/G`,
//! 5. chain and participation probabilities from their Beta conjugates
//!    (skipped per variant; dormant groups refresh from the prior),
//! 6. `Sigma^R` from its inverse-Wishart conjugate over completed residuals,
//! 7. `Psi^R` from the state increments of all `G` components,
//! 8. the initial-state mean columns by a symmetric normal-normal update.
//!
//! Steps 1 and 2 together form an exact joint draw of `(S, E~)` given the
//! trends and parameters: the allocation weights use only observed
//! coordinates, never stale imputations. Everything is deterministic given
//! the seed; per-runner and per-group work uses independent RNG substreams
//! keyed by (seed, iteration, step, unit).

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::missingness::{
    count_sufficient_stats, pattern_loglik, update_beta_params, ChainProbabilities,
    ParticipationProbabilities,
};
pub use crate::missingness::ModelVariant;
use crate::panel::{CareerSequence, PerformancePanel};
use crate::rng::{substream, StreamTag};
use crate::ssm::{
    collapse_groups, sample_prior_trajectory, simulation_smoother, CompletedValues,
    GaussianMoments, LatentStates,
};
use crate::stats::{
    mvn_log_density, robust_cholesky, sample_beta, sample_categorical_log, sample_dirichlet,
    sample_inverse_wishart, schur_conditional,
};

/// Hyperparameters of the initial-state prior: per-discipline first-year
/// mean and the fixed diagonal spread.
#[derive(Debug, Clone, PartialEq)]
pub struct InitHyper {
    pub ybar1: DVector<f64>,
    pub p0: DVector<f64>,
}

/// First-year sample mean and twice the first-year sample variance per
/// discipline. Disciplines with fewer than two first-year observations fall
/// back to all-years statistics (logged).
pub fn compute_init_hyper(panel: &PerformancePanel) -> Result<InitHyper> {
    let p_n = panel.n_disciplines();
    let mut ybar1 = DVector::zeros(p_n);
    let mut p0 = DVector::zeros(p_n);
    for p in 0..p_n {
        let first_year: Vec<f64> = (0..panel.n_runners())
            .filter_map(|q| panel.value(p, q, 0))
            .collect();
        let all_years: Vec<f64> = (0..panel.n_runners())
            .flat_map(|q| (0..panel.n_years()).filter_map(move |t| panel.value(p, q, t)))
            .collect();
        let mean_of = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        let var_of = |xs: &[f64]| {
            let m = mean_of(xs);
            xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
        };
        let disc = &panel.disciplines()[p];
        if first_year.is_empty() {
            if all_years.is_empty() {
                return Err(Error::validation(format!(
                    "discipline {disc} has no observations; cannot form the initial-state prior"
                )));
            }
            log::warn!(
                "discipline {disc}: no first-year observations, using the all-years mean for ybar1"
            );
            ybar1[p] = mean_of(&all_years);
        } else {
            ybar1[p] = mean_of(&first_year);
        }
        if first_year.len() >= 2 {
            p0[p] = 2.0 * var_of(&first_year);
        } else if all_years.len() >= 2 {
            log::warn!(
                "discipline {disc}: fewer than two first-year observations, using the all-years variance for p0"
            );
            p0[p] = 2.0 * var_of(&all_years);
        } else {
            return Err(Error::validation(format!(
                "discipline {disc} has fewer than two observations; cannot form the initial-state prior"
            )));
        }
        // Guard against degenerate (constant) samples.
        if p0[p] <= 1e-6 {
            p0[p] = 1e-6;
        }
    }
    Ok(InitHyper { ybar1, p0 })
}

/// Full parameter block of one chain state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    /// Measurement row covariance (P x P).
    pub sigma_r: DMatrix<f64>,
    /// Disturbance row covariance (P x P).
    pub psi_r: DMatrix<f64>,
    /// Mixture weights on the G-simplex.
    pub pi: Vec<f64>,
    /// Career-chain probabilities; `None` when the variant drops them.
    pub chain: Option<ChainProbabilities>,
    /// Participation probabilities; `None` when the variant drops them.
    pub part: Option<ParticipationProbabilities>,
    /// Initial-state mean columns (P x G).
    pub a_hat: DMatrix<f64>,
    /// Fixed diagonal of the initial-state spread (never updated).
    pub p0: DVector<f64>,
}

impl ModelParameters {
    fn validate(&self, p_n: usize, g_n: usize, variant: ModelVariant) -> Result<()> {
        if self.sigma_r.nrows() != p_n || self.psi_r.nrows() != p_n {
            return Err(Error::validation("row covariance dimension mismatch"));
        }
        if self.pi.len() != g_n {
            return Err(Error::validation("pi length mismatch"));
        }
        let total: f64 = self.pi.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::validation(format!(
                "pi must sum to 1 within 1e-12, got {total}"
            )));
        }
        if self.a_hat.nrows() != p_n || self.a_hat.ncols() != g_n {
            return Err(Error::validation("a_hat dimension mismatch"));
        }
        if self.p0.len() != p_n || self.p0.iter().any(|&v| v <= 0.0) {
            return Err(Error::validation("p0 must be strictly positive"));
        }
        if variant.uses_chain() != self.chain.is_some() {
            return Err(Error::validation(
                "chain probabilities must be present exactly when the variant uses them",
            ));
        }
        if variant.uses_participation() != self.part.is_some() {
            return Err(Error::validation(
                "participation probabilities must be present exactly when the variant uses them",
            ));
        }
        if let Some(c) = &self.chain {
            if c.n_groups() != g_n {
                return Err(Error::validation("chain probability group count mismatch"));
            }
        }
        if let Some(d) = &self.part {
            if d.n_groups() != g_n || d.n_disciplines() != p_n {
                return Err(Error::validation("participation dimension mismatch"));
            }
        }
        Ok(())
    }
}

/// Sampler configuration.
#[derive(Debug, Clone)]
pub struct GibbsConfig {
    /// Number of mixture components (overfitted: larger than the expected
    /// number of clusters).
    pub n_groups: usize,
    /// Total sweeps.
    pub iterations: usize,
    /// Number of final sweeps to retain.
    pub keep: usize,
    /// Base seed for all substreams.
    pub seed: u64,
    /// Override for the initial-state hyperparameters (otherwise computed
    /// from the panel).
    pub init_hyper: Option<InitHyper>,
}

/// One retained draw.
#[derive(Debug, Clone)]
pub struct RetainedDraw {
    pub params: ModelParameters,
    pub states: LatentStates,
    pub allocation: Vec<usize>,
}

impl RetainedDraw {
    /// Number of filled components.
    pub fn g_plus(&self) -> usize {
        self.occupancy().iter().filter(|&&n| n > 0).count()
    }

    /// Member count per component.
    pub fn occupancy(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.params.pi.len()];
        for &g in &self.allocation {
            counts[g] += 1;
        }
        counts
    }
}

/// Per-iteration diagnostics recorded for the whole run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub g_plus: usize,
    pub sigma_trace: f64,
    pub psi_trace: f64,
}

/// Retained draws plus run metadata.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub variant: ModelVariant,
    pub n_groups: usize,
    pub seed: u64,
    pub n_disciplines: usize,
    pub n_runners: usize,
    pub n_years: usize,
    pub disciplines: Vec<String>,
    pub base_year: i32,
    pub draws: Vec<RetainedDraw>,
    pub trace: Vec<TraceRow>,
}

impl PosteriorDraws {
    pub fn g_plus(&self) -> Vec<usize> {
        self.draws.iter().map(|d| d.g_plus()).collect()
    }

    pub fn occupancies(&self) -> Vec<Vec<usize>> {
        self.draws.iter().map(|d| d.occupancy()).collect()
    }
}

/// Cached per-observation-pattern quantities for the current `Sigma^R`:
/// Cholesky of the observed block for likelihoods, and the Schur gain and
/// conditional factor for imputations.
pub struct ObsCache {
    entries: BTreeMap<u32, ObsEntry>,
    full_chol_l: DMatrix<f64>,
}

struct ObsEntry {
    obs: Vec<usize>,
    miss: Vec<usize>,
    chol_oo: Cholesky<f64, Dyn>,
    /// Gain `Sigma_mo Sigma_oo^{-1}` (miss x obs); empty when nothing is
    /// missing.
    w: DMatrix<f64>,
    /// Lower Cholesky factor of the conditional covariance of the missing
    /// block; empty when nothing is missing.
    chol_cond_l: DMatrix<f64>,
}

impl ObsCache {
    /// Build entries for every pattern in `patterns` (bitmask over
    /// disciplines, bit `p` set when observed). Pattern 0 is handled by the
    /// full-covariance factor.
    pub fn new(sigma_r: &DMatrix<f64>, patterns: &[u32]) -> Result<ObsCache> {
        let p_n = sigma_r.nrows();
        let full_chol_l = robust_cholesky(sigma_r, "measurement covariance")?.l();
        let mut entries = BTreeMap::new();
        for &pat in patterns {
            if pat == 0 || entries.contains_key(&pat) {
                continue;
            }
            let obs: Vec<usize> = (0..p_n).filter(|p| pat >> p & 1 == 1).collect();
            let miss: Vec<usize> = (0..p_n).filter(|p| pat >> p & 1 == 0).collect();
            let s_oo = sigma_r.select_rows(&obs).select_columns(&obs);
            let chol_oo = robust_cholesky(&s_oo, "observed-coordinate covariance block")?;
            let (w, chol_cond_l) = if miss.is_empty() {
                (DMatrix::zeros(0, 0), DMatrix::zeros(0, 0))
            } else {
                let (w, cond) = schur_conditional(sigma_r, &obs, &miss)?;
                let l = robust_cholesky(&cond, "conditional imputation covariance")?.l();
                (w, l)
            };
            entries.insert(
                pat,
                ObsEntry {
                    obs,
                    miss,
                    chol_oo,
                    w,
                    chol_cond_l,
                },
            );
        }
        Ok(ObsCache {
            entries,
            full_chol_l,
        })
    }
}

/// Observed-data log-likelihood of runner `q` against one group path, using
/// the pattern cache. Must agree with [`runner_obs_loglik`] exactly.
fn cached_obs_loglik(
    cache: &ObsCache,
    completed: &CompletedValues,
    cell_patterns: &[u32],
    q: usize,
    group_path: &[DVector<f64>],
) -> f64 {
    let q_n = completed.n_runners();
    let mut ll = 0.0;
    for (t, alpha) in group_path.iter().enumerate() {
        let pat = cell_patterns[q + q_n * t];
        if pat == 0 {
            continue;
        }
        let entry = &cache.entries[&pat];
        let y = DVector::from_iterator(
            entry.obs.len(),
            entry.obs.iter().map(|&p| completed.get(p, q, t)),
        );
        let mu = DVector::from_iterator(entry.obs.len(), entry.obs.iter().map(|&p| alpha[p]));
        ll += mvn_log_density(&y, &mu, &entry.chol_oo);
    }
    ll
}

/// Log-likelihood of one runner's observed cells given a group state path,
/// marginalizing missing coordinates through the principal submatrix of
/// `sigma_r`.
///
/// `cells` holds `(p, t, value)` triples; `group_states` one P-vector per
/// year. Years without observations contribute zero.
pub fn runner_obs_loglik(
    cells: &[(usize, usize, f64)],
    group_states: &[DVector<f64>],
    sigma_r: &DMatrix<f64>,
) -> Result<f64> {
    let mut by_year: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for &(p, t, v) in cells {
        by_year.entry(t).or_default().push((p, v));
    }
    let mut ll = 0.0;
    for (t, obs) in by_year {
        let idx: Vec<usize> = obs.iter().map(|&(p, _)| p).collect();
        let y = DVector::from_iterator(obs.len(), obs.iter().map(|&(_, v)| v));
        let alpha = group_states
            .get(t)
            .ok_or_else(|| Error::validation(format!("cell year {t} outside the state path")))?;
        let mu = DVector::from_iterator(idx.len(), idx.iter().map(|&p| alpha[p]));
        let s_oo = sigma_r.select_rows(&idx).select_columns(&idx);
        let chol = robust_cholesky(&s_oo, "observed-coordinate covariance block")?;
        ll += mvn_log_density(&y, &mu, &chol);
    }
    Ok(ll)
}

/// Unnormalized allocation log-weights of runner `q` over all groups:
/// `log pi_g + log p(y_obs | A, g) + log p(D, d* | g)` (variant-gated).
pub fn allocation_log_weights(
    panel: &PerformancePanel,
    careers: &[CareerSequence],
    q: usize,
    states: &LatentStates,
    params: &ModelParameters,
    variant: ModelVariant,
) -> Result<Vec<f64>> {
    let g_n = params.pi.len();
    let cells = panel.observed_cells_of(q);
    let mask = panel.runner_mask(q);
    let p_n = panel.n_disciplines();
    let mut out = Vec::with_capacity(g_n);
    for g in 0..g_n {
        let path: Vec<DVector<f64>> = (0..panel.n_years())
            .map(|t| states.group_state(g, t))
            .collect();
        let obs_ll = runner_obs_loglik(&cells, &path, &params.sigma_r)?;
        let chain = params
            .chain
            .as_ref()
            .map(|c| (c.lambda1[g], c.lambda2[g]));
        let delta = params.part.as_ref().map(|d| d.group_column(g));
        let pat_ll = pattern_loglik(
            &careers[q],
            &mask,
            p_n,
            chain,
            delta.as_deref(),
            variant,
        );
        out.push(params.pi[g].ln() + obs_ll + pat_ll);
    }
    Ok(out)
}

/// Dirichlet posterior concentrations `e_g + n_g` with `e_g = 1/G`.
pub fn pi_posterior(allocation: &[usize], n_groups: usize) -> Vec<f64> {
    let e = 1.0 / n_groups as f64;
    let mut alphas = vec![e; n_groups];
    for &g in allocation {
        alphas[g] += 1.0;
    }
    alphas
}

/// Inverse-Wishart posterior for `Sigma^R`: degrees of freedom
/// `P + 1 + Q T` and scale `I + sum of completed residual outer products`.
pub fn sigma_r_posterior(
    completed: &CompletedValues,
    allocation: &[usize],
    states: &LatentStates,
) -> (f64, DMatrix<f64>) {
    let p_n = completed.n_disciplines();
    let q_n = completed.n_runners();
    let t_n = completed.n_years();
    let mut scale = DMatrix::<f64>::identity(p_n, p_n);
    for t in 0..t_n {
        for q in 0..q_n {
            let e = completed.cell_column(q, t) - states.a[t].column(allocation[q]).into_owned();
            scale.ger(1.0, &e, &e, 1.0);
        }
    }
    let df = (p_n + 1 + q_n * t_n) as f64;
    (df, scale)
}

/// Inverse-Wishart posterior for `Psi^R`: degrees of freedom
/// `P + 1 + G (T - 1)` and scale `I + sum of state increment outer
/// products` across all `G` components.
pub fn psi_r_posterior(states: &LatentStates) -> (f64, DMatrix<f64>) {
    let p_n = states.n_disciplines();
    let g_n = states.n_groups();
    let t_n = states.n_years();
    let mut scale = DMatrix::<f64>::identity(p_n, p_n);
    for t in 0..t_n.saturating_sub(1) {
        for g in 0..g_n {
            let xi = states.a[t + 1].column(g).into_owned() - states.a[t].column(g).into_owned();
            scale.ger(1.0, &xi, &xi, 1.0);
        }
    }
    let df = (p_n + 1 + g_n * (t_n - 1)) as f64;
    (df, scale)
}

/// Normal-normal update for the initial-state mean: per discipline and
/// group, prior `N(ybar1_p, p0_p)` against one pseudo-observation
/// `A_1[p, g]` with the same variance, giving
/// `N((ybar1_p + A_1[p, g]) / 2, p0_p / 2)`.
pub fn initial_mean_posterior(
    states_at_1: &DMatrix<f64>,
    p0: &DVector<f64>,
    ybar1: &DVector<f64>,
) -> (DMatrix<f64>, DVector<f64>) {
    let means = DMatrix::from_fn(states_at_1.nrows(), states_at_1.ncols(), |p, g| {
        0.5 * (ybar1[p] + states_at_1[(p, g)])
    });
    let vars = p0.map(|v| 0.5 * v);
    (means, vars)
}

fn clamp_open_unit(v: f64) -> f64 {
    v.clamp(1e-300, 1.0 - 1e-16)
}

/// The Gibbs sampler. Holds the data, the current chain state, and the
/// sweep counter; `run` drives it to completion and retains the final
/// `keep` draws.
pub struct GibbsSampler {
    panel: PerformancePanel,
    careers: Vec<CareerSequence>,
    variant: ModelVariant,
    cfg: GibbsConfig,
    hyper: InitHyper,
    // Current chain state.
    params: ModelParameters,
    states: LatentStates,
    allocation: Vec<usize>,
    completed: CompletedValues,
    iteration: usize,
    // Immutable per-run caches.
    cell_patterns: Vec<u32>,
    distinct_patterns: Vec<u32>,
    runner_masks: Vec<Vec<bool>>,
    runner_cells: Vec<Vec<(usize, usize, f64)>>,
}

impl GibbsSampler {
    pub fn new(
        panel: PerformancePanel,
        careers: Vec<CareerSequence>,
        variant: ModelVariant,
        cfg: GibbsConfig,
    ) -> Result<GibbsSampler> {
        let p_n = panel.n_disciplines();
        let q_n = panel.n_runners();
        let t_n = panel.n_years();
        if p_n > 31 {
            return Err(Error::validation(
                "more than 31 disciplines are not supported",
            ));
        }
        if careers.len() != q_n {
            return Err(Error::validation(
                "careers length does not match the panel",
            ));
        }
        for c in &careers {
            if c.len() != t_n {
                return Err(Error::validation(
                    "career length does not match the panel years",
                ));
            }
        }
        if cfg.n_groups == 0 {
            return Err(Error::validation("need at least one mixture component"));
        }
        if cfg.keep == 0 || cfg.keep > cfg.iterations {
            return Err(Error::validation(format!(
                "keep must lie in 1..=iterations, got keep={} iterations={}",
                cfg.keep, cfg.iterations
            )));
        }
        let hyper = match &cfg.init_hyper {
            Some(h) => {
                if h.ybar1.len() != p_n || h.p0.len() != p_n {
                    return Err(Error::validation("init hyper dimension mismatch"));
                }
                if h.p0.iter().any(|&v| v <= 0.0) {
                    return Err(Error::validation("p0 must be strictly positive"));
                }
                h.clone()
            }
            None => compute_init_hyper(&panel)?,
        };

        let g_n = cfg.n_groups;
        let mut rng = substream(cfg.seed, &[StreamTag::Init.tag()]);
        let allocation: Vec<usize> = (0..q_n).map(|_| rng.random_range(0..g_n)).collect();

        let a_hat = DMatrix::from_fn(p_n, g_n, |p, _| hyper.ybar1[p]);
        let states = LatentStates {
            a: vec![a_hat.clone(); t_n],
        };
        let chain = variant.uses_chain().then(|| {
            ChainProbabilities::new(vec![0.5; g_n], vec![0.5; g_n]).expect("valid init")
        });
        let part = variant.uses_participation().then(|| {
            ParticipationProbabilities::new(vec![0.5; p_n * g_n], p_n, g_n).expect("valid init")
        });
        let params = ModelParameters {
            sigma_r: DMatrix::identity(p_n, p_n),
            psi_r: DMatrix::identity(p_n, p_n),
            pi: vec![1.0 / g_n as f64; g_n],
            chain,
            part,
            a_hat,
            p0: hyper.p0.clone(),
        };

        let mut sampler = GibbsSampler {
            completed: Self::build_completed(&panel, &hyper)?,
            cell_patterns: Vec::new(),
            distinct_patterns: Vec::new(),
            runner_masks: Vec::new(),
            runner_cells: Vec::new(),
            panel,
            careers,
            variant,
            cfg,
            hyper,
            params,
            states,
            allocation,
            iteration: 0,
        };
        sampler.rebuild_data_caches();
        sampler.params.validate(p_n, g_n, variant)?;
        Ok(sampler)
    }

    /// Completed buffer seeded with observed values; missing cells start at
    /// the first-year mean and are overwritten by the first sweep before
    /// any step reads them.
    fn build_completed(panel: &PerformancePanel, hyper: &InitHyper) -> Result<CompletedValues> {
        let p_n = panel.n_disciplines();
        let q_n = panel.n_runners();
        let t_n = panel.n_years();
        let mut values = vec![0.0; p_n * q_n * t_n];
        for t in 0..t_n {
            for q in 0..q_n {
                for p in 0..p_n {
                    let i = p + p_n * (q + q_n * t);
                    values[i] = panel.value(p, q, t).unwrap_or(hyper.ybar1[p]);
                }
            }
        }
        CompletedValues::new(values, p_n, q_n, t_n)
    }

    fn rebuild_data_caches(&mut self) {
        let p_n = self.panel.n_disciplines();
        let q_n = self.panel.n_runners();
        let t_n = self.panel.n_years();
        let mut patterns = vec![0u32; q_n * t_n];
        for t in 0..t_n {
            for q in 0..q_n {
                let mut pat = 0u32;
                for p in 0..p_n {
                    if self.panel.observed(p, q, t) {
                        pat |= 1 << p;
                    }
                }
                patterns[q + q_n * t] = pat;
            }
        }
        let mut distinct = patterns.clone();
        distinct.sort_unstable();
        distinct.dedup();
        self.cell_patterns = patterns;
        self.distinct_patterns = distinct;
        self.runner_masks = (0..q_n).map(|q| self.panel.runner_mask(q)).collect();
        self.runner_cells = (0..q_n).map(|q| self.panel.observed_cells_of(q)).collect();
    }

    pub fn variant(&self) -> ModelVariant {
        self.variant
    }

    pub fn params(&self) -> &ModelParameters {
        &self.params
    }

    pub fn states(&self) -> &LatentStates {
        &self.states
    }

    pub fn allocation(&self) -> &[usize] {
        &self.allocation
    }

    pub fn completed(&self) -> &CompletedValues {
        &self.completed
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn hyper(&self) -> &InitHyper {
        &self.hyper
    }

    /// Replace the chain state (used by calibration harnesses). The
    /// completed buffer is reseeded from the panel; missing cells are
    /// rewritten by the next sweep before use.
    pub fn set_state(
        &mut self,
        params: ModelParameters,
        states: LatentStates,
        allocation: Vec<usize>,
    ) -> Result<()> {
        let p_n = self.panel.n_disciplines();
        let g_n = self.cfg.n_groups;
        params.validate(p_n, g_n, self.variant)?;
        if states.n_years() != self.panel.n_years()
            || states.n_groups() != g_n
            || states.n_disciplines() != p_n
        {
            return Err(Error::validation("state dimensions mismatch"));
        }
        if allocation.len() != self.panel.n_runners()
            || allocation.iter().any(|&g| g >= g_n)
        {
            return Err(Error::validation("allocation labels out of range"));
        }
        self.params = params;
        self.states = states;
        self.allocation = allocation;
        self.completed = Self::build_completed(&self.panel, &self.hyper)?;
        Ok(())
    }

    /// Swap in new observations with identical dimensions (used by the
    /// successive-conditional calibration harness).
    pub fn replace_data(
        &mut self,
        panel: PerformancePanel,
        careers: Vec<CareerSequence>,
    ) -> Result<()> {
        if panel.n_disciplines() != self.panel.n_disciplines()
            || panel.n_runners() != self.panel.n_runners()
            || panel.n_years() != self.panel.n_years()
        {
            return Err(Error::validation("replacement data dimensions mismatch"));
        }
        if careers.len() != panel.n_runners()
            || careers.iter().any(|c| c.len() != panel.n_years())
        {
            return Err(Error::validation("replacement careers mismatch"));
        }
        self.completed = Self::build_completed(&panel, &self.hyper)?;
        self.panel = panel;
        self.careers = careers;
        self.rebuild_data_caches();
        Ok(())
    }

    /// One full sweep over all blocks.
    pub fn sweep(&mut self) -> Result<()> {
        self.iteration += 1;
        let iter = self.iteration as u64;
        let it = self.iteration;
        let ctx =
            |e: Error, step: &str| e.context(&format!("iteration {it}, step {step}"));

        self.step_allocations(iter)
            .map_err(|e| ctx(e, "sample_allocations"))?;
        self.step_impute(iter).map_err(|e| ctx(e, "impute_missing"))?;
        self.step_states(iter).map_err(|e| ctx(e, "sample_states"))?;
        self.step_pi(iter).map_err(|e| ctx(e, "update_pi"))?;
        self.step_missingness(iter)
            .map_err(|e| ctx(e, "update_missingness"))?;
        self.step_sigma_r(iter).map_err(|e| ctx(e, "update_sigma_r"))?;
        self.step_psi_r(iter).map_err(|e| ctx(e, "update_psi_r"))?;
        self.step_initial_mean(iter)
            .map_err(|e| ctx(e, "update_initial_mean"))?;
        Ok(())
    }

    /// Run the configured number of sweeps and retain the final window.
    pub fn run(mut self) -> Result<PosteriorDraws> {
        let mut draws = Vec::with_capacity(self.cfg.keep);
        let mut trace = Vec::with_capacity(self.cfg.iterations);
        let first_kept = self.cfg.iterations - self.cfg.keep;
        for i in 0..self.cfg.iterations {
            self.sweep()?;
            trace.push(TraceRow {
                iteration: self.iteration,
                g_plus: count_filled(&self.allocation, self.cfg.n_groups),
                sigma_trace: self.params.sigma_r.trace(),
                psi_trace: self.params.psi_r.trace(),
            });
            if i >= first_kept {
                draws.push(RetainedDraw {
                    params: self.params.clone(),
                    states: self.states.clone(),
                    allocation: self.allocation.clone(),
                });
            }
        }
        Ok(PosteriorDraws {
            variant: self.variant,
            n_groups: self.cfg.n_groups,
            seed: self.cfg.seed,
            n_disciplines: self.panel.n_disciplines(),
            n_runners: self.panel.n_runners(),
            n_years: self.panel.n_years(),
            disciplines: self.panel.disciplines().to_vec(),
            base_year: self.panel.base_year(),
            draws,
            trace,
        })
    }

    fn step_allocations(&mut self, iter: u64) -> Result<()> {
        let g_n = self.cfg.n_groups;
        let q_n = self.panel.n_runners();
        let t_n = self.panel.n_years();
        let p_n = self.panel.n_disciplines();
        let cache = ObsCache::new(&self.params.sigma_r, &self.distinct_patterns)?;
        let ln_pi: Vec<f64> = self.params.pi.iter().map(|w| w.ln()).collect();

        // Group state columns, extracted once.
        let group_paths: Vec<Vec<DVector<f64>>> = (0..g_n)
            .map(|g| (0..t_n).map(|t| self.states.group_state(g, t)).collect())
            .collect();

        let seed = self.cfg.seed;
        let variant = self.variant;
        let params = &self.params;
        let careers = &self.careers;
        let runner_masks = &self.runner_masks;
        let cell_patterns = &self.cell_patterns;
        let completed = &self.completed;
        let panel = &self.panel;

        let new_alloc: Result<Vec<usize>> = (0..q_n)
            .into_par_iter()
            .map(|q| {
                let mut log_w = vec![0.0; g_n];
                for (g, lw) in log_w.iter_mut().enumerate() {
                    // Observed-data likelihood, missing coordinates
                    // marginalized through the cached pattern blocks.
                    let mut ll = ln_pi[g]
                        + cached_obs_loglik(&cache, completed, cell_patterns, q, &group_paths[g]);
                    let chain = params.chain.as_ref().map(|c| (c.lambda1[g], c.lambda2[g]));
                    let delta = params.part.as_ref().map(|d| d.group_column(g));
                    ll += pattern_loglik(
                        &careers[q],
                        &runner_masks[q],
                        p_n,
                        chain,
                        delta.as_deref(),
                        variant,
                    );
                    *lw = ll;
                }
                let mut rng = substream(seed, &[iter, StreamTag::Allocation.tag(), q as u64]);
                sample_categorical_log(&log_w, &mut rng).map_err(|e| {
                    e.context(&format!("runner {}", panel.runner_ids()[q]))
                })
            })
            .collect();
        self.allocation = new_alloc?;
        Ok(())
    }

    fn step_impute(&mut self, iter: u64) -> Result<()> {
        let q_n = self.panel.n_runners();
        let t_n = self.panel.n_years();
        let cache = ObsCache::new(&self.params.sigma_r, &self.distinct_patterns)?;
        let seed = self.cfg.seed;
        let states = &self.states;
        let allocation = &self.allocation;
        let completed = &self.completed;
        let cell_patterns = &self.cell_patterns;
        let p_n = self.panel.n_disciplines();

        let updates: Result<Vec<Vec<(usize, usize, f64)>>> = (0..q_n)
            .into_par_iter()
            .map(|q| {
                let mut rng = substream(seed, &[iter, StreamTag::Imputation.tag(), q as u64]);
                let g = allocation[q];
                let mut cells = Vec::new();
                for t in 0..t_n {
                    let pat = cell_patterns[q + q_n * t];
                    if pat == (1u32 << p_n) - 1 {
                        continue; // fully observed year
                    }
                    let alpha = states.a[t].column(g);
                    if pat == 0 {
                        // Nothing observed: draw the whole column from
                        // N(alpha, Sigma^R).
                        let draw = crate::stats::sample_mvn_chol(
                            &alpha.into_owned(),
                            &cache.full_chol_l,
                            &mut rng,
                        );
                        for p in 0..p_n {
                            cells.push((p, t, draw[p]));
                        }
                    } else {
                        let entry = &cache.entries[&pat];
                        let resid = DVector::from_iterator(
                            entry.obs.len(),
                            entry.obs.iter().map(|&p| completed.get(p, q, t) - alpha[p]),
                        );
                        let mean_m = DVector::from_iterator(
                            entry.miss.len(),
                            entry.miss.iter().map(|&p| alpha[p]),
                        ) + &entry.w * resid;
                        let draw =
                            crate::stats::sample_mvn_chol(&mean_m, &entry.chol_cond_l, &mut rng);
                        for (k, &p) in entry.miss.iter().enumerate() {
                            cells.push((p, t, draw[k]));
                        }
                    }
                }
                Ok(cells)
            })
            .collect();
        let updates = updates?;
        for (q, cells) in updates.into_iter().enumerate() {
            for (p, t, v) in cells {
                self.completed.set(p, q, t, v);
            }
        }
        Ok(())
    }

    fn step_states(&mut self, iter: u64) -> Result<()> {
        let g_n = self.cfg.n_groups;
        let t_n = self.panel.n_years();
        let p_n = self.panel.n_disciplines();
        let groups = collapse_groups(&self.completed, &self.allocation, g_n);
        let seed = self.cfg.seed;
        let sigma = &self.params.sigma_r;
        let psi = &self.params.psi_r;
        let a_hat = &self.params.a_hat;
        let p0 = &self.params.p0;

        let paths: Result<Vec<Vec<DVector<f64>>>> = (0..g_n)
            .into_par_iter()
            .map(|g| {
                let mut rng = substream(seed, &[iter, StreamTag::States.tag(), g as u64]);
                let init = GaussianMoments::new(
                    a_hat.column(g).into_owned(),
                    DMatrix::from_diagonal(p0),
                );
                if groups[g].count == 0 {
                    sample_prior_trajectory(&init, psi, t_n, &mut rng)
                } else {
                    simulation_smoother(&groups[g], sigma, psi, &init, &mut rng)
                }
                .map_err(|e| e.context(&format!("group {g}")))
            })
            .collect();
        let paths = paths?;
        let mut a = Vec::with_capacity(t_n);
        for t in 0..t_n {
            a.push(DMatrix::from_fn(p_n, g_n, |p, g| paths[g][t][p]));
        }
        self.states = LatentStates { a };
        Ok(())
    }

    fn step_pi(&mut self, iter: u64) -> Result<()> {
        let alphas = pi_posterior(&self.allocation, self.cfg.n_groups);
        let mut rng = substream(self.cfg.seed, &[iter, StreamTag::Weights.tag()]);
        self.params.pi = sample_dirichlet(&alphas, &mut rng)?;
        Ok(())
    }

    fn step_missingness(&mut self, iter: u64) -> Result<()> {
        let uses_chain = self.variant.uses_chain();
        let uses_part = self.variant.uses_participation();
        if !uses_chain && !uses_part {
            return Ok(());
        }
        let g_n = self.cfg.n_groups;
        let counts =
            count_sufficient_stats(&self.careers, &self.panel, &self.allocation, g_n)?;
        let seed = self.cfg.seed;
        let p_n = self.panel.n_disciplines();

        let mut lambda1 = Vec::with_capacity(g_n);
        let mut lambda2 = Vec::with_capacity(g_n);
        let mut delta = vec![0.0; p_n * g_n];
        for g in 0..g_n {
            let mut rng = substream(seed, &[iter, StreamTag::Missingness.tag(), g as u64]);
            let post = update_beta_params(&counts[g]);
            if uses_chain {
                lambda1.push(clamp_open_unit(sample_beta(
                    post.lambda1.0,
                    post.lambda1.1,
                    &mut rng,
                )?));
                lambda2.push(clamp_open_unit(sample_beta(
                    post.lambda2.0,
                    post.lambda2.1,
                    &mut rng,
                )?));
            }
            if uses_part {
                for (p, &(a, b)) in post.delta.iter().enumerate() {
                    delta[p * g_n + g] = clamp_open_unit(sample_beta(a, b, &mut rng)?);
                }
            }
        }
        if uses_chain {
            self.params.chain = Some(ChainProbabilities::new(lambda1, lambda2)?);
        }
        if uses_part {
            self.params.part = Some(ParticipationProbabilities::new(delta, p_n, g_n)?);
        }
        Ok(())
    }

    fn step_sigma_r(&mut self, iter: u64) -> Result<()> {
        let (df, scale) = sigma_r_posterior(&self.completed, &self.allocation, &self.states);
        let mut rng = substream(self.cfg.seed, &[iter, StreamTag::SigmaR.tag()]);
        self.params.sigma_r = sample_inverse_wishart(df, &scale, &mut rng)?;
        Ok(())
    }

    fn step_psi_r(&mut self, iter: u64) -> Result<()> {
        let (df, scale) = psi_r_posterior(&self.states);
        let mut rng = substream(self.cfg.seed, &[iter, StreamTag::PsiR.tag()]);
        self.params.psi_r = sample_inverse_wishart(df, &scale, &mut rng)?;
        Ok(())
    }

    fn step_initial_mean(&mut self, iter: u64) -> Result<()> {
        let (means, vars) =
            initial_mean_posterior(&self.states.a[0], &self.params.p0, &self.hyper.ybar1);
        let mut rng = substream(self.cfg.seed, &[iter, StreamTag::InitialMean.tag()]);
        let sds = vars.map(|v| v.sqrt());
        let mut a_hat = DMatrix::zeros(means.nrows(), means.ncols());
        for g in 0..means.ncols() {
            for p in 0..means.nrows() {
                let z: f64 = rng.sample(StandardNormal);
                a_hat[(p, g)] = means[(p, g)] + sds[p] * z;
            }
        }
        self.params.a_hat = a_hat;
        Ok(())
    }
}

fn count_filled(allocation: &[usize], n_groups: usize) -> usize {
    let mut seen = vec![false; n_groups];
    for &g in allocation {
        seen[g] = true;
    }
    seen.iter().filter(|&&b| b).count()
}

/// Fit one chain: validate, run all sweeps, retain the final window.
pub fn run_chain(
    panel: PerformancePanel,
    careers: Vec<CareerSequence>,
    variant: ModelVariant,
    cfg: GibbsConfig,
) -> Result<PosteriorDraws> {
    GibbsSampler::new(panel, careers, variant, cfg)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::CareerState;

    #[test]
    fn pi_posterior_adds_counts_to_uniform_concentration() {
        let alphas = pi_posterior(&[0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 2, 2, 2, 2, 2], 3);
        // Counts (10, 0, 5) with e = 1/3.
        assert!((alphas[0] - (10.0 + 1.0 / 3.0)).abs() < 1e-12);
        assert!((alphas[1] - 1.0 / 3.0).abs() < 1e-12);
        assert!((alphas[2] - (5.0 + 1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn initial_mean_posterior_examples() {
        // Symmetric case: state equals the prior mean.
        let states = DMatrix::from_row_slice(1, 2, &[100.0, 104.0]);
        let p0 = DVector::from_element(1, 8.0);
        let ybar = DVector::from_element(1, 100.0);
        let (means, vars) = initial_mean_posterior(&states, &p0, &ybar);
        assert_eq!(means[(0, 0)], 100.0);
        assert_eq!(vars[0], 4.0);
        // ybar = 100, alpha_1 = 104, p0 = 8 -> N(102, 4); the formula is the
        // same for a dormant group whose state came from the prior.
        assert_eq!(means[(0, 1)], 102.0);
    }

    #[test]
    fn covariance_posteriors_count_degrees_of_freedom() {
        // Zero residuals: scale stays at the identity prior.
        let p_n = 2;
        let q_n = 3;
        let t_n = 4;
        let g_n = 5;
        let states = LatentStates {
            a: (0..t_n)
                .map(|t| DMatrix::from_fn(p_n, g_n, |p, g| (t + p + g) as f64))
                .collect(),
        };
        let allocation = vec![1, 3, 1];
        let mut values = vec![0.0; p_n * q_n * t_n];
        for t in 0..t_n {
            for q in 0..q_n {
                for p in 0..p_n {
                    values[p + p_n * (q + q_n * t)] = states.a[t][(p, allocation[q])];
                }
            }
        }
        let completed = CompletedValues::new(values, p_n, q_n, t_n).unwrap();
        let (df, scale) = sigma_r_posterior(&completed, &allocation, &states);
        assert_eq!(df, (p_n + 1 + q_n * t_n) as f64);
        assert!((scale - DMatrix::<f64>::identity(p_n, p_n)).amax() < 1e-12);

        // Constant states: Psi scale stays at the prior.
        let const_states = LatentStates {
            a: vec![DMatrix::from_element(p_n, g_n, 7.0); t_n],
        };
        let (df_psi, scale_psi) = psi_r_posterior(&const_states);
        assert_eq!(df_psi, (p_n + 1 + g_n * (t_n - 1)) as f64);
        assert!((scale_psi - DMatrix::<f64>::identity(p_n, p_n)).amax() < 1e-12);
    }

    #[test]
    fn scalar_updates_match_inverse_gamma_conjugacy() {
        // P = 1: IW(df, s) is InvGamma(df/2, s/2); the conjugate update for
        // n known-mean Gaussian residuals is a -> a + n/2, b -> b + sse/2.
        let q_n = 4;
        let t_n = 3;
        let g_n = 2;
        let states = LatentStates {
            a: (0..t_n)
                .map(|t| DMatrix::from_fn(1, g_n, |_, g| 100.0 + (t * (g + 1)) as f64))
                .collect(),
        };
        let allocation = vec![0, 1, 1, 0];
        let mut values = vec![0.0; q_n * t_n];
        let mut sse = 0.0;
        for t in 0..t_n {
            for q in 0..q_n {
                let resid = 0.3 * (q as f64 + 1.0) - 0.1 * t as f64;
                values[q + q_n * t] = states.a[t][(0, allocation[q])] + resid;
                sse += resid * resid;
            }
        }
        let completed = CompletedValues::new(values, 1, q_n, t_n).unwrap();
        let (df, scale) = sigma_r_posterior(&completed, &allocation, &states);
        let prior_shape = 1.0; // (P + 1) / 2
        let prior_rate = 0.5; // identity scale / 2
        let n = (q_n * t_n) as f64;
        assert!((df / 2.0 - (prior_shape + n / 2.0)).abs() < 1e-10);
        assert!((scale[(0, 0)] / 2.0 - (prior_rate + sse / 2.0)).abs() < 1e-10);

        let mut sse_psi = 0.0;
        for t in 0..t_n - 1 {
            for g in 0..g_n {
                let d = states.a[t + 1][(0, g)] - states.a[t][(0, g)];
                sse_psi += d * d;
            }
        }
        let (df_psi, scale_psi) = psi_r_posterior(&states);
        let n_psi = (g_n * (t_n - 1)) as f64;
        assert!((df_psi / 2.0 - (prior_shape + n_psi / 2.0)).abs() < 1e-10);
        assert!((scale_psi[(0, 0)] / 2.0 - (prior_rate + sse_psi / 2.0)).abs() < 1e-10);
    }

    #[test]
    fn obs_loglik_examples() {
        let sigma1 = DMatrix::from_element(1, 1, 2.0);
        let states: Vec<DVector<f64>> = vec![DVector::from_element(1, 100.0); 3];
        // Fully observed scalar year: standard normal log-density.
        let ll = runner_obs_loglik(&[(0, 1, 103.0)], &states, &sigma1).unwrap();
        let want = -0.5 * ((2.0 * std::f64::consts::PI * 2.0).ln() + 9.0 / 2.0);
        assert!((ll - want).abs() < 1e-12);
        // No observations contribute zero.
        let ll = runner_obs_loglik(&[], &states, &sigma1).unwrap();
        assert_eq!(ll, 0.0);
        // P = 2 with one observed coordinate: the 1x1 marginal variance.
        let sigma2 = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let states2: Vec<DVector<f64>> = vec![DVector::from_row_slice(&[10.0, 20.0]); 2];
        let ll = runner_obs_loglik(&[(1, 0, 22.0)], &states2, &sigma2).unwrap();
        let want = -0.5 * ((2.0 * std::f64::consts::PI * 3.0).ln() + 4.0 / 3.0);
        assert!((ll - want).abs() < 1e-12);
    }

    #[test]
    fn allocation_weights_special_cases() {
        use crate::panel::panel_from_parts;
        // One runner, T = 2, P = 1, observed both years.
        let panel = panel_from_parts(
            vec![101.0, 103.0],
            vec![true, true],
            vec!["800".into()],
            vec!["a".into()],
            2006,
            2,
        )
        .unwrap();
        let careers = vec![CareerSequence::new(vec![
            CareerState::InCareer,
            CareerState::InCareer,
        ])
        .unwrap()];

        // G = 1: the single weight is certain.
        let params1 = ModelParameters {
            sigma_r: DMatrix::identity(1, 1),
            psi_r: DMatrix::identity(1, 1),
            pi: vec![1.0],
            chain: None,
            part: None,
            a_hat: DMatrix::from_element(1, 1, 100.0),
            p0: DVector::from_element(1, 1.0),
        };
        let states1 = LatentStates {
            a: vec![DMatrix::from_element(1, 1, 100.0); 2],
        };
        let w =
            allocation_log_weights(&panel, &careers, 0, &states1, &params1, ModelVariant::NoMissing)
                .unwrap();
        assert_eq!(w.len(), 1);

        // Two identical groups with uniform weights: exact symmetry.
        let params2 = ModelParameters {
            pi: vec![0.5, 0.5],
            a_hat: DMatrix::from_element(1, 2, 100.0),
            ..params1.clone()
        };
        let states2 = LatentStates {
            a: vec![DMatrix::from_element(1, 2, 100.0); 2],
        };
        let w =
            allocation_log_weights(&panel, &careers, 0, &states2, &params2, ModelVariant::NoMissing)
                .unwrap();
        assert!((w[0] - w[1]).abs() < 1e-14);
    }

    #[test]
    fn cached_loglik_agrees_with_direct_computation() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5150);
        let p_n = 3;
        let q_n = 6;
        let t_n = 4;
        let sigma = {
            let m = DMatrix::from_fn(p_n, p_n, |_, _| rng.sample::<f64, _>(StandardNormal));
            &m * m.transpose() + DMatrix::identity(p_n, p_n)
        };
        let mut values = vec![0.0; p_n * q_n * t_n];
        let mut patterns = vec![0u32; q_n * t_n];
        let mut cells: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); q_n];
        for t in 0..t_n {
            for q in 0..q_n {
                for p in 0..p_n {
                    let v = 100.0 + rng.sample::<f64, _>(StandardNormal);
                    values[p + p_n * (q + q_n * t)] = v;
                    if rng.random::<f64>() < 0.6 {
                        patterns[q + q_n * t] |= 1 << p;
                        cells[q].push((p, t, v));
                    }
                }
            }
        }
        let completed = CompletedValues::new(values, p_n, q_n, t_n).unwrap();
        let mut distinct = patterns.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let cache = ObsCache::new(&sigma, &distinct).unwrap();
        let path: Vec<DVector<f64>> = (0..t_n)
            .map(|_| {
                DVector::from_fn(p_n, |_, _| 100.0 + rng.sample::<f64, _>(StandardNormal))
            })
            .collect();
        for q in 0..q_n {
            // Sort cells into the (t, p) order the public function expects.
            let mut qcells = cells[q].clone();
            qcells.sort_by_key(|&(p, t, _)| (t, p));
            let direct = runner_obs_loglik(&qcells, &path, &sigma).unwrap();
            let cached = cached_obs_loglik(&cache, &completed, &patterns, q, &path);
            assert!(
                (direct - cached).abs() < 1e-10,
                "runner {q}: {direct} vs {cached}"
            );
        }
    }

    #[test]
    fn allocation_weights_match_brute_force_products() {
        use crate::missingness::{ChainProbabilities, ParticipationProbabilities};
        use crate::panel::panel_from_parts;
        // T = 2, P = 1, G = 2; year 1 observed, year 2 missing.
        let y1 = 102.0;
        let panel = panel_from_parts(
            vec![y1, f64::NAN],
            vec![true, false],
            vec!["800".into()],
            vec!["a".into()],
            2006,
            2,
        )
        .unwrap();
        let careers = vec![CareerSequence::new(vec![
            CareerState::InCareer,
            CareerState::InCareer,
        ])
        .unwrap()];
        let pi = [0.4, 0.6];
        let alphas = [[101.0, 99.0], [104.0, 103.0]]; // [t][g]
        let sigma = 2.0;
        let l1 = [0.7, 0.3];
        let l2 = [0.2, 0.5];
        let d = [0.9, 0.4];
        let params = ModelParameters {
            sigma_r: DMatrix::from_element(1, 1, sigma),
            psi_r: DMatrix::identity(1, 1),
            pi: pi.to_vec(),
            chain: Some(ChainProbabilities::new(l1.to_vec(), l2.to_vec()).unwrap()),
            part: Some(ParticipationProbabilities::new(d.to_vec(), 1, 2).unwrap()),
            a_hat: DMatrix::from_element(1, 2, 100.0),
            p0: DVector::from_element(1, 1.0),
        };
        let states = LatentStates {
            a: (0..2)
                .map(|t| DMatrix::from_fn(1, 2, |_, g| alphas[t][g]))
                .collect(),
        };
        let got = allocation_log_weights(
            &panel,
            &careers,
            0,
            &states,
            &params,
            ModelVariant::Complete,
        )
        .unwrap();
        // Direct product: pi * N(y1; alpha_1g, sigma) * chain * attitude.
        let dens = |y: f64, m: f64| {
            (-0.5 * ((y - m) * (y - m) / sigma))
                .exp()
                / (2.0 * std::f64::consts::PI * sigma).sqrt()
        };
        let raw: Vec<f64> = (0..2)
            .map(|g| {
                pi[g]
                    * dens(y1, alphas[0][g])
                    * l1[g]              // implicit 0 -> 1 entry
                    * (1.0 - l2[g])      // stay in career
                    * d[g]               // year 1 observed
                    * (1.0 - d[g]) // year 2 missing while in career
            })
            .collect();
        let total: f64 = raw.iter().sum();
        let norm = crate::stats::log_sum_exp(&got);
        for g in 0..2 {
            let w = (got[g] - norm).exp();
            assert!(
                (w - raw[g] / total).abs() < 1e-12,
                "g={g}: {w} vs {}",
                raw[g] / total
            );
        }
    }
}
