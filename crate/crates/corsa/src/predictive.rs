//! Predictive ensembles for new runners conditional on their missingness
//! pattern.
//!
//! A new runner contributes only their participation mask and career
//! sequence; performance values never enter. Per posterior draw the group
//! membership follows a multinomial with weights `pi_g * p(D, d* | g)`
//! (variant-gated), and predicted cells are drawn jointly within a year
//! from the group trend and the observed-coordinate block of `Sigma^R`.
//! Posterior draws are cycled deterministically (draw index = sample index
//! mod retained), so ensembles are reproducible and cover the chain evenly.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::gibbs::{ModelVariant, PosteriorDraws, RetainedDraw};
use crate::missingness::pattern_loglik;
use crate::panel::{CareerSequence, CareerState};
use crate::rng::{substream, StreamTag};
use crate::stats::{
    log_sum_exp, quantile_type7, robust_cholesky, sample_categorical, sample_mvn_chol,
    sorted_copy,
};

/// Missingness pattern of a runner to predict: participation mask and
/// career states, mutually consistent.
#[derive(Debug, Clone, PartialEq)]
pub struct NewRunnerPattern {
    mask: Vec<bool>,
    career: CareerSequence,
    n_disciplines: usize,
}

impl NewRunnerPattern {
    /// `mask` is `P x T` row-major (`p * T + t`). Every masked cell must
    /// fall in an in-career year, and the career may not jump straight from
    /// not-started to finished.
    pub fn new(mask: Vec<bool>, career: CareerSequence, n_disciplines: usize) -> Result<Self> {
        let t_n = career.len();
        if mask.len() != n_disciplines * t_n {
            return Err(Error::validation("pattern mask has wrong length"));
        }
        let mut prev = CareerState::NotStarted;
        for t in 0..t_n {
            let cur = career.state(t);
            if prev == CareerState::NotStarted && cur == CareerState::Finished {
                return Err(Error::validation(
                    "career jumps from not-started to finished",
                ));
            }
            prev = cur;
            for p in 0..n_disciplines {
                if mask[p * t_n + t] && cur != CareerState::InCareer {
                    return Err(Error::validation(format!(
                        "pattern has an observation at (discipline {p}, year {t}) outside the career"
                    )));
                }
            }
        }
        Ok(NewRunnerPattern {
            mask,
            career,
            n_disciplines,
        })
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn career(&self) -> &CareerSequence {
        &self.career
    }

    pub fn n_disciplines(&self) -> usize {
        self.n_disciplines
    }

    pub fn n_years(&self) -> usize {
        self.career.len()
    }

    /// Predicted cells in (year, discipline) order.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        let t_n = self.n_years();
        let mut out = Vec::new();
        for t in 0..t_n {
            for p in 0..self.n_disciplines {
                if self.mask[p * t_n + t] {
                    out.push((p, t));
                }
            }
        }
        out
    }
}

/// Group-membership weights for a new runner under one posterior draw:
/// `w_g ∝ pi_g exp(log p(D, d* | g))`. For the no-missing variant the
/// pattern factors drop and the weights are exactly `pi`.
pub fn allocation_weights(
    pattern: &NewRunnerPattern,
    draw: &RetainedDraw,
    variant: ModelVariant,
) -> Result<Vec<f64>> {
    let pi = &draw.params.pi;
    if variant == ModelVariant::NoMissing {
        return Ok(pi.clone());
    }
    let g_n = pi.len();
    let mut log_w = Vec::with_capacity(g_n);
    for g in 0..g_n {
        let chain = draw
            .params
            .chain
            .as_ref()
            .map(|c| (c.lambda1[g], c.lambda2[g]));
        let delta = draw.params.part.as_ref().map(|d| d.group_column(g));
        let ll = pattern_loglik(
            pattern.career(),
            pattern.mask(),
            pattern.n_disciplines(),
            chain,
            delta.as_deref(),
            variant,
        );
        log_w.push(pi[g].ln() + ll);
    }
    let total = log_sum_exp(&log_w);
    if !total.is_finite() {
        return Err(Error::numerical(
            "allocation weights degenerate: pattern impossible under every group",
        ));
    }
    Ok(log_w.iter().map(|lw| (lw - total).exp()).collect())
}

/// Ensemble of predictive draws, one vector of `B` values per predicted
/// cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveEnsemble {
    /// Predicted cells in (year, discipline) order, as (discipline, year).
    pub cells: Vec<(usize, usize)>,
    /// Per-cell draws, aligned with `cells`, each of length `b`.
    pub draws: Vec<Vec<f64>>,
    pub b: usize,
}

/// Draw a size-`B` predictive ensemble for one pattern. Posterior draws are
/// cycled (`draw index = sample index mod retained`); each sample uses an
/// independent RNG substream, so the result is deterministic given `seed`.
pub fn sample_predictive(
    pattern: &NewRunnerPattern,
    draws: &PosteriorDraws,
    b: usize,
    seed: u64,
) -> Result<PredictiveEnsemble> {
    if b < 2 {
        return Err(Error::validation("ensemble size must be at least 2"));
    }
    if draws.draws.is_empty() {
        return Err(Error::validation("no retained posterior draws"));
    }
    if pattern.n_years() != draws.n_years || pattern.n_disciplines() != draws.n_disciplines {
        return Err(Error::validation(
            "pattern dimensions do not match the fitted model",
        ));
    }
    let cells = pattern.cells();
    if cells.is_empty() {
        return Err(Error::validation("pattern predicts no cells"));
    }
    // Group predicted coordinates by year.
    let t_n = pattern.n_years();
    let mut by_year: Vec<Vec<usize>> = vec![Vec::new(); t_n];
    for &(p, t) in &cells {
        by_year[t].push(p);
    }
    let cell_slot: std::collections::BTreeMap<(usize, usize), usize> = cells
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, i))
        .collect();

    let kept = draws.draws.len();
    let mut out = vec![vec![0.0; b]; cells.len()];
    for sample in 0..b {
        let draw = &draws.draws[sample % kept];
        let mut rng = substream(seed, &[StreamTag::Predictive.tag(), sample as u64]);
        let weights = allocation_weights(pattern, draw, draws.variant)?;
        let g = sample_categorical(&weights, &mut rng);
        for (t, ps) in by_year.iter().enumerate() {
            if ps.is_empty() {
                continue;
            }
            let alpha = DVector::from_iterator(
                ps.len(),
                ps.iter().map(|&p| draw.states.a[t][(p, g)]),
            );
            let s_oo = draw.params.sigma_r.select_rows(ps).select_columns(ps);
            let chol = robust_cholesky(&s_oo, "predictive covariance block")?;
            let y = sample_mvn_chol(&alpha, &chol.l(), &mut rng);
            for (k, &p) in ps.iter().enumerate() {
                out[cell_slot[&(p, t)]][sample] = y[k];
            }
        }
    }
    Ok(PredictiveEnsemble {
        cells,
        draws: out,
        b,
    })
}

/// Quantile bands per predicted cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionBand {
    pub alpha: f64,
    pub cells: Vec<(usize, usize)>,
    pub lower: Vec<f64>,
    pub median: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Empirical quantile bands at levels `alpha/2`, `0.5`, `1 - alpha/2`
/// (linear interpolation between order statistics).
pub fn prediction_bands(ensemble: &PredictiveEnsemble, alpha: f64) -> Result<PredictionBand> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::validation(format!(
            "alpha must lie in (0, 0.5), got {alpha}"
        )));
    }
    let mut lower = Vec::with_capacity(ensemble.cells.len());
    let mut median = Vec::with_capacity(ensemble.cells.len());
    let mut upper = Vec::with_capacity(ensemble.cells.len());
    for cell_draws in &ensemble.draws {
        let sorted = sorted_copy(cell_draws);
        lower.push(quantile_type7(&sorted, alpha / 2.0));
        median.push(quantile_type7(&sorted, 0.5));
        upper.push(quantile_type7(&sorted, 1.0 - alpha / 2.0));
    }
    Ok(PredictionBand {
        alpha,
        cells: ensemble.cells.clone(),
        lower,
        median,
        upper,
    })
}

/// Specification of an idealized what-if runner: enters at `drop_in_age`,
/// leaves at `drop_out_age` (meaning the first age with no more
/// observations; `None` = still active at the end of the panel), and
/// competes every in-career year in the listed discipline indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub drop_in_age: i32,
    pub drop_out_age: Option<i32>,
    pub disciplines: Vec<usize>,
}

/// Build the pattern for an idealized runner on a panel of `n_years` years
/// whose first year corresponds to `base_age`.
pub fn ideal_pattern(
    spec: &ScenarioSpec,
    n_disciplines: usize,
    n_years: usize,
    base_age: i32,
) -> Result<NewRunnerPattern> {
    if spec.disciplines.is_empty() {
        return Err(Error::validation("scenario needs at least one discipline"));
    }
    for &p in &spec.disciplines {
        if p >= n_disciplines {
            return Err(Error::validation(format!(
                "scenario discipline index {p} out of range"
            )));
        }
    }
    let mut states = Vec::with_capacity(n_years);
    let mut mask = vec![false; n_disciplines * n_years];
    for t in 0..n_years {
        let age = base_age + t as i32;
        let in_career =
            age >= spec.drop_in_age && spec.drop_out_age.map_or(true, |out| age < out);
        let state = if age < spec.drop_in_age {
            CareerState::NotStarted
        } else if in_career {
            CareerState::InCareer
        } else {
            CareerState::Finished
        };
        states.push(state);
        if in_career {
            for &p in &spec.disciplines {
                mask[p * n_years + t] = true;
            }
        }
    }
    if !states.contains(&CareerState::InCareer) {
        return Err(Error::validation(
            "scenario has no in-career years inside the panel window",
        ));
    }
    NewRunnerPattern::new(mask, CareerSequence::new(states)?, n_disciplines)
}

/// Named what-if presets: drop-in ages 18/22/26/30 and drop-out ages
/// 20/24/28/never for a runner competing in the two shorter distances, plus
/// four discipline-mix scenarios over a complete career. Discipline indices
/// assume the default (800, 1500, 5000) ordering.
pub fn ideal_runner_scenarios(
    n_disciplines: usize,
    n_years: usize,
    base_age: i32,
) -> Result<Vec<(String, NewRunnerPattern)>> {
    let mut out = Vec::new();
    for age in [18, 22, 26, 30] {
        let spec = ScenarioSpec {
            drop_in_age: age,
            drop_out_age: None,
            disciplines: vec![0, 1],
        };
        out.push((
            format!("drop_in_{age}"),
            ideal_pattern(&spec, n_disciplines, n_years, base_age)?,
        ));
    }
    for out_age in [20, 24, 28] {
        let spec = ScenarioSpec {
            drop_in_age: base_age,
            drop_out_age: Some(out_age),
            disciplines: vec![0, 1],
        };
        out.push((
            format!("drop_out_{out_age}"),
            ideal_pattern(&spec, n_disciplines, n_years, base_age)?,
        ));
    }
    out.push((
        "drop_out_never".to_string(),
        ideal_pattern(
            &ScenarioSpec {
                drop_in_age: base_age,
                drop_out_age: None,
                disciplines: vec![0, 1],
            },
            n_disciplines,
            n_years,
            base_age,
        )?,
    ));
    let mixes: [(&str, Vec<usize>); 4] = [
        ("only_1500", vec![1]),
        ("1500_5000", vec![1, 2]),
        ("800_1500", vec![0, 1]),
        ("all_distances", vec![0, 1, 2]),
    ];
    for (name, disciplines) in mixes {
        let spec = ScenarioSpec {
            drop_in_age: base_age,
            drop_out_age: None,
            disciplines,
        };
        out.push((
            name.to_string(),
            ideal_pattern(&spec, n_disciplines, n_years, base_age)?,
        ));
    }
    Ok(out)
}
