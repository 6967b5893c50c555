//! Forward simulator of the full generative process: group memberships,
//! random-walk trends, three-state careers, discipline participation, and
//! Gaussian observations on participating cells.
//!
//! Runners that end up with fewer than `min_obs` observed cells (or with a
//! non-positive generated time, which the panel contract forbids) are
//! regenerated from a fresh substream, up to a bounded retry count; the
//! retry totals are logged. The returned careers are the true chain
//! trajectories, which may start earlier or end later than the span of
//! observed years; deriving careers from the emitted observations instead
//! reproduces the analyst's view.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{panel_from_parts, CareerSequence, CareerState, PerformancePanel};
use crate::rng::{substream, StreamTag};
use crate::ssm::LatentStates;
use crate::stats::{robust_cholesky, sample_categorical, sample_mvn_chol};

const MAX_RETRIES: u64 = 1000;

/// Ground-truth generator configuration. Probabilities here may sit on the
/// closed interval boundaries (a discipline always run, a career that never
/// ends); only the fitted model requires open intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_disciplines: usize,
    pub n_runners: usize,
    pub n_years: usize,
    pub n_groups_true: usize,
    /// Discipline labels for the emitted panel; `None` gives `d0, d1, ...`.
    pub discipline_names: Option<Vec<String>>,
    /// True mixture weights, length `n_groups_true`, summing to 1.
    pub pi: Vec<f64>,
    /// Entry probability per group.
    pub lambda1: Vec<f64>,
    /// Exit probability per group.
    pub lambda2: Vec<f64>,
    /// Participation probabilities, `p`-major (`p * G + g`).
    pub delta: Vec<f64>,
    /// Initial trend per (discipline, group), `p`-major.
    pub a_hat: Vec<f64>,
    /// Measurement covariance, row-major `P x P`.
    pub sigma_r: Vec<f64>,
    /// Disturbance covariance, row-major `P x P`.
    pub psi_r: Vec<f64>,
    pub min_obs: usize,
    pub base_year: i32,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let p = self.n_disciplines;
        let g = self.n_groups_true;
        if p == 0 || self.n_runners == 0 || self.n_years < 2 || g == 0 {
            return Err(Error::validation(
                "generator dimensions must satisfy P >= 1, Q >= 1, T >= 2, G >= 1",
            ));
        }
        if self.min_obs == 0 {
            return Err(Error::validation("min_obs must be at least 1"));
        }
        if self.pi.len() != g || self.lambda1.len() != g || self.lambda2.len() != g {
            return Err(Error::validation("per-group parameter length mismatch"));
        }
        if (self.pi.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::validation("true mixture weights must sum to 1"));
        }
        for &v in self.pi.iter() {
            if !(v >= 0.0 && v <= 1.0) {
                return Err(Error::validation("mixture weights must lie in [0, 1]"));
            }
        }
        for &v in self.lambda1.iter().chain(&self.lambda2).chain(&self.delta) {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::validation(
                    "generator probabilities must lie in [0, 1]",
                ));
            }
        }
        if self.delta.len() != p * g || self.a_hat.len() != p * g {
            return Err(Error::validation("delta/a_hat length mismatch"));
        }
        if self.sigma_r.len() != p * p || self.psi_r.len() != p * p {
            return Err(Error::validation("covariance buffer length mismatch"));
        }
        if let Some(names) = &self.discipline_names {
            if names.len() != p {
                return Err(Error::validation(
                    "discipline_names length does not match n_disciplines",
                ));
            }
        }
        Ok(())
    }

    pub fn sigma_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_disciplines, self.n_disciplines, &self.sigma_r)
    }

    pub fn psi_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_disciplines, self.n_disciplines, &self.psi_r)
    }
}

/// Everything the generator knows, kept alongside the emitted data for
/// recovery checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub format: String,
    pub version: u32,
    pub config: GeneratorConfig,
    pub runner_ids: Vec<String>,
    pub allocation: Vec<usize>,
    /// True careers as state codes, runner-major (`q * T + t`).
    pub careers: Vec<u8>,
    /// True trends, year-major then `p`-major (`t * P * G + p * G + g`).
    pub states: Vec<f64>,
    /// Total regeneration retries across runners.
    pub retries: u64,
}

/// Sample a career trajectory from the three-state chain (implicit start
/// in `NotStarted`).
pub fn sample_career<R: Rng>(
    lambda1: f64,
    lambda2: f64,
    n_years: usize,
    rng: &mut R,
) -> CareerSequence {
    let mut states = Vec::with_capacity(n_years);
    let mut cur = CareerState::NotStarted;
    for _ in 0..n_years {
        cur = match cur {
            CareerState::NotStarted => {
                if rng.random::<f64>() < lambda1 {
                    CareerState::InCareer
                } else {
                    CareerState::NotStarted
                }
            }
            CareerState::InCareer => {
                if rng.random::<f64>() < lambda2 {
                    CareerState::Finished
                } else {
                    CareerState::InCareer
                }
            }
            CareerState::Finished => CareerState::Finished,
        };
        states.push(cur);
    }
    CareerSequence::new(states).expect("chain trajectories are monotone")
}

/// Sample the participation mask (`p * T + t` layout) given a career:
/// Bernoulli(delta_p) on in-career years, zero elsewhere.
pub fn sample_participation<R: Rng>(
    career: &CareerSequence,
    delta_col: &[f64],
    rng: &mut R,
) -> Vec<bool> {
    let t_n = career.len();
    let p_n = delta_col.len();
    let mut mask = vec![false; p_n * t_n];
    for t in 0..t_n {
        if career.state(t) == CareerState::InCareer {
            for p in 0..p_n {
                if rng.random::<f64>() < delta_col[p] {
                    mask[p * t_n + t] = true;
                }
            }
        }
    }
    mask
}

/// Sample observed values for the masked cells of one runner: per year with
/// any participation the full column is drawn from `N(alpha_t, Sigma^R)`
/// and the observed coordinates are kept (the joint restricted to a subset
/// of coordinates is exactly the marginal).
pub fn sample_observed_values<R: Rng>(
    group_path: &[DVector<f64>],
    mask: &[bool],
    sigma_chol_l: &DMatrix<f64>,
    rng: &mut R,
) -> Vec<(usize, usize, f64)> {
    let t_n = group_path.len();
    let p_n = sigma_chol_l.nrows();
    let mut out = Vec::new();
    for t in 0..t_n {
        if (0..p_n).any(|p| mask[p * t_n + t]) {
            let y = sample_mvn_chol(&group_path[t], sigma_chol_l, rng);
            for p in 0..p_n {
                if mask[p * t_n + t] {
                    out.push((p, t, y[p]));
                }
            }
        }
    }
    out
}

/// Run the forward model. Returns the validated panel, the true careers,
/// and the ground-truth sidecar.
pub fn generate(
    cfg: &GeneratorConfig,
) -> Result<(PerformancePanel, Vec<CareerSequence>, GroundTruth)> {
    cfg.validate()?;
    let p_n = cfg.n_disciplines;
    let q_n = cfg.n_runners;
    let t_n = cfg.n_years;
    let g_n = cfg.n_groups_true;
    let sigma = cfg.sigma_matrix();
    let psi = cfg.psi_matrix();
    let sigma_l = robust_cholesky(&sigma, "generator measurement covariance")?.l();
    let psi_l = if psi.amax() == 0.0 {
        DMatrix::zeros(p_n, p_n)
    } else {
        robust_cholesky(&psi, "generator disturbance covariance")?.l()
    };

    // Shared group trends: random walks started at the configured levels.
    let mut state_rng = substream(cfg.seed, &[StreamTag::Generator.tag(), 0]);
    let mut states = Vec::with_capacity(t_n);
    let mut current = DMatrix::from_fn(p_n, g_n, |p, g| cfg.a_hat[p * g_n + g]);
    states.push(current.clone());
    for _ in 1..t_n {
        for g in 0..g_n {
            let step = sample_mvn_chol(&DVector::zeros(p_n), &psi_l, &mut state_rng);
            for p in 0..p_n {
                current[(p, g)] += step[p];
            }
        }
        states.push(current.clone());
    }
    let latent = LatentStates { a: states };

    let id_width = (q_n as f64).log10().floor() as usize + 1;
    let mut runner_ids = Vec::with_capacity(q_n);
    let mut allocation = Vec::with_capacity(q_n);
    let mut careers = Vec::with_capacity(q_n);
    let mut values = vec![f64::NAN; p_n * q_n * t_n];
    let mut mask = vec![false; p_n * q_n * t_n];
    let mut total_retries = 0u64;

    for q in 0..q_n {
        let mut accepted = None;
        for retry in 0..MAX_RETRIES {
            let mut rng = substream(
                cfg.seed,
                &[StreamTag::Generator.tag(), 1 + q as u64, retry],
            );
            let g = sample_categorical(&cfg.pi, &mut rng);
            let career = sample_career(cfg.lambda1[g], cfg.lambda2[g], t_n, &mut rng);
            let delta_col: Vec<f64> = (0..p_n).map(|p| cfg.delta[p * g_n + g]).collect();
            let runner_mask = sample_participation(&career, &delta_col, &mut rng);
            let n_obs = runner_mask.iter().filter(|&&b| b).count();
            if n_obs < cfg.min_obs {
                total_retries += 1;
                continue;
            }
            let path: Vec<DVector<f64>> = (0..t_n)
                .map(|t| latent.a[t].column(g).into_owned())
                .collect();
            let cells = sample_observed_values(&path, &runner_mask, &sigma_l, &mut rng);
            if cells.iter().any(|&(_, _, v)| v <= 0.0) {
                total_retries += 1;
                continue;
            }
            accepted = Some((g, career, cells));
            break;
        }
        let (g, career, cells) = accepted.ok_or_else(|| {
            Error::validation(format!(
                "runner {q}: exceeded {MAX_RETRIES} regeneration attempts; the generator \
                 config cannot satisfy min_obs = {} with positive times",
                cfg.min_obs
            ))
        })?;
        for &(p, t, v) in &cells {
            let i = p + p_n * (q + q_n * t);
            values[i] = v;
            mask[i] = true;
        }
        runner_ids.push(format!("r{q:0id_width$}"));
        allocation.push(g);
        careers.push(career);
    }

    if total_retries > 0 {
        log::info!("generator regenerated runners {total_retries} times (min_obs / positivity)");
    }

    let discipline_names = cfg
        .discipline_names
        .clone()
        .unwrap_or_else(|| (0..p_n).map(|p| format!("d{p}")).collect());
    let panel = panel_from_parts(
        values,
        mask,
        discipline_names,
        runner_ids.clone(),
        cfg.base_year,
        t_n,
    )?;

    let mut career_codes = Vec::with_capacity(q_n * t_n);
    for c in &careers {
        career_codes.extend(c.states().iter().map(|s| s.code()));
    }
    let mut state_flat = Vec::with_capacity(t_n * p_n * g_n);
    for t in 0..t_n {
        for p in 0..p_n {
            for g in 0..g_n {
                state_flat.push(latent.a[t][(p, g)]);
            }
        }
    }
    let truth = GroundTruth {
        format: "corsa-truth".to_string(),
        version: 1,
        config: cfg.clone(),
        runner_ids,
        allocation,
        careers: career_codes,
        states: state_flat,
        retries: total_retries,
    };
    Ok((panel, careers, truth))
}

/// Exploratory summary of a panel plus its careers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PanelSummary {
    pub n_runners: usize,
    pub n_years: usize,
    pub observed_cells: usize,
    /// Histogram over career lengths 1..=T (index 0 = length 1).
    pub career_length_histogram: Vec<usize>,
    pub mean_career_length: f64,
    /// Fraction of runners in career per year.
    pub in_career_fraction: Vec<f64>,
    /// Observed cell count per discipline.
    pub observations_per_discipline: Vec<usize>,
}

/// Career length is the number of in-career years (last observed year minus
/// first observed year plus one, when careers are derived from the mask).
pub fn summarize(panel: &PerformancePanel, careers: &[CareerSequence]) -> Result<PanelSummary> {
    let q_n = panel.n_runners();
    let t_n = panel.n_years();
    if careers.len() != q_n {
        return Err(Error::validation("careers length does not match the panel"));
    }
    let mut hist = vec![0usize; t_n];
    let mut total_len = 0usize;
    for c in careers {
        let len = c.career_length();
        if len == 0 || len > t_n {
            return Err(Error::validation("career length outside 1..=T"));
        }
        hist[len - 1] += 1;
        total_len += len;
    }
    let in_career_fraction = (0..t_n)
        .map(|t| {
            careers
                .iter()
                .filter(|c| c.state(t) == CareerState::InCareer)
                .count() as f64
                / q_n as f64
        })
        .collect();
    let observations_per_discipline = (0..panel.n_disciplines())
        .map(|p| {
            (0..q_n)
                .map(|q| {
                    (0..t_n)
                        .filter(|&t| panel.observed(p, q, t))
                        .count()
                })
                .sum()
        })
        .collect();
    Ok(PanelSummary {
        n_runners: q_n,
        n_years: t_n,
        observed_cells: panel.observed_cells(),
        career_length_histogram: hist,
        mean_career_length: total_len as f64 / q_n as f64,
        in_career_fraction,
        observations_per_discipline,
    })
}
