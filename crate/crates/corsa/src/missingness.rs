//! Career-chain and discipline-participation processes.
//!
//! A runner's history follows a three-state chain (not started, in career,
//! finished) with group-specific entry probability `lambda1` and exit
//! probability `lambda2`; the implicit state before the panel is
//! "not started", so appearing in year 1 counts as an entry event. While in
//! career, participation in discipline `p` is Bernoulli with group-specific
//! probability `delta_p`. Outside the career all disciplines are missing
//! with probability one.
//!
//! All probabilities have Be(1, 1) priors, so the conjugate updates reduce
//! to transition and participation counting.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::panel::{CareerSequence, CareerState, PerformancePanel};

/// Which missingness processes inform the clustering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelVariant {
    /// History and attitude both matter.
    Complete,
    /// Missingness is ignored for clustering.
    NoMissing,
    /// Only discipline participation matters.
    AttitudeOnly,
    /// Only career start/stop matters.
    HistoryOnly,
}

impl ModelVariant {
    pub fn uses_chain(self) -> bool {
        matches!(self, ModelVariant::Complete | ModelVariant::HistoryOnly)
    }

    pub fn uses_participation(self) -> bool {
        matches!(self, ModelVariant::Complete | ModelVariant::AttitudeOnly)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Complete => "complete",
            ModelVariant::NoMissing => "no-missing",
            ModelVariant::AttitudeOnly => "attitude",
            ModelVariant::HistoryOnly => "history",
        }
    }

    pub const ALL: [ModelVariant; 4] = [
        ModelVariant::Complete,
        ModelVariant::NoMissing,
        ModelVariant::AttitudeOnly,
        ModelVariant::HistoryOnly,
    ];
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "complete" => Ok(ModelVariant::Complete),
            "no-missing" | "nomissing" | "no_missing" => Ok(ModelVariant::NoMissing),
            "attitude" | "attitude-only" => Ok(ModelVariant::AttitudeOnly),
            "history" | "history-only" => Ok(ModelVariant::HistoryOnly),
            other => Err(Error::validation(format!(
                "unknown variant {other:?} (use complete | no-missing | attitude | history)"
            ))),
        }
    }
}

impl std::fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-group career-chain probabilities, entries in (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ChainProbabilities {
    /// Entry probability per group.
    pub lambda1: Vec<f64>,
    /// Exit probability per group.
    pub lambda2: Vec<f64>,
}

impl ChainProbabilities {
    pub fn new(lambda1: Vec<f64>, lambda2: Vec<f64>) -> Result<Self> {
        if lambda1.len() != lambda2.len() {
            return Err(Error::validation("lambda vectors must have equal length"));
        }
        for &v in lambda1.iter().chain(lambda2.iter()) {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::validation(format!(
                    "chain probability {v} outside (0, 1)"
                )));
            }
        }
        Ok(ChainProbabilities { lambda1, lambda2 })
    }

    pub fn n_groups(&self) -> usize {
        self.lambda1.len()
    }
}

/// Participation probabilities `delta[p][g]`, stored row-major `p * G + g`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticipationProbabilities {
    delta: Vec<f64>,
    n_disciplines: usize,
    n_groups: usize,
}

impl ParticipationProbabilities {
    pub fn new(delta: Vec<f64>, n_disciplines: usize, n_groups: usize) -> Result<Self> {
        if delta.len() != n_disciplines * n_groups {
            return Err(Error::validation("delta buffer has wrong length"));
        }
        for &v in &delta {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::validation(format!(
                    "participation probability {v} outside (0, 1)"
                )));
            }
        }
        Ok(ParticipationProbabilities {
            delta,
            n_disciplines,
            n_groups,
        })
    }

    #[inline]
    pub fn get(&self, p: usize, g: usize) -> f64 {
        self.delta[p * self.n_groups + g]
    }

    /// Participation probabilities of group `g` across disciplines.
    pub fn group_column(&self, g: usize) -> Vec<f64> {
        (0..self.n_disciplines).map(|p| self.get(p, g)).collect()
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn n_disciplines(&self) -> usize {
        self.n_disciplines
    }

    pub fn raw(&self) -> &[f64] {
        &self.delta
    }
}

/// Sufficient statistics for the Beta updates of one group.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransitionCounts {
    /// Entry events (0 -> 1), including the implicit start before year 1.
    pub n01: u64,
    /// Stay-out events (0 -> 0).
    pub n00: u64,
    /// Exit events (1 -> 2).
    pub n12: u64,
    /// Stay-in events (1 -> 1).
    pub n11: u64,
    /// Per-discipline observed counts over in-career years.
    pub obs: Vec<u64>,
    /// Per-discipline missing counts over in-career years.
    pub miss: Vec<u64>,
}

impl TransitionCounts {
    fn empty(n_disciplines: usize) -> Self {
        TransitionCounts {
            obs: vec![0; n_disciplines],
            miss: vec![0; n_disciplines],
            ..Default::default()
        }
    }
}

/// Beta posterior parameters for one group's chain and participation
/// probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaPosteriors {
    /// (alpha, beta) for the entry probability.
    pub lambda1: (f64, f64),
    /// (alpha, beta) for the exit probability.
    pub lambda2: (f64, f64),
    /// (alpha, beta) per discipline for the participation probability.
    pub delta: Vec<(f64, f64)>,
}

/// Tally chain transitions and in-career participation per group.
///
/// The implicit pre-panel state is `NotStarted`; absorbing (2 -> 2) steps
/// contribute nothing. Errors if a career is inconsistent with the mask
/// (an observation outside the in-career window).
pub fn count_sufficient_stats(
    careers: &[CareerSequence],
    panel: &PerformancePanel,
    allocation: &[usize],
    n_groups: usize,
) -> Result<Vec<TransitionCounts>> {
    let q_n = panel.n_runners();
    let p_n = panel.n_disciplines();
    let t_n = panel.n_years();
    if careers.len() != q_n || allocation.len() != q_n {
        return Err(Error::validation(
            "careers/allocation length does not match the panel",
        ));
    }
    let mut counts = vec![TransitionCounts::empty(p_n); n_groups];
    for q in 0..q_n {
        let g = allocation[q];
        if g >= n_groups {
            return Err(Error::validation(format!(
                "allocation label {g} out of range for {n_groups} groups"
            )));
        }
        let career = &careers[q];
        if career.len() != t_n {
            return Err(Error::validation(format!(
                "career length {} does not match panel years {t_n}",
                career.len()
            )));
        }
        let c = &mut counts[g];
        let mut prev = CareerState::NotStarted;
        for t in 0..t_n {
            let cur = career.state(t);
            match (prev, cur) {
                (CareerState::NotStarted, CareerState::NotStarted) => c.n00 += 1,
                (CareerState::NotStarted, CareerState::InCareer) => c.n01 += 1,
                (CareerState::InCareer, CareerState::InCareer) => c.n11 += 1,
                (CareerState::InCareer, CareerState::Finished) => c.n12 += 1,
                (CareerState::Finished, CareerState::Finished) => {}
                (from, to) => {
                    return Err(Error::validation(format!(
                        "impossible career transition {from} -> {to} for runner {}",
                        panel.runner_ids()[q]
                    )));
                }
            }
            prev = cur;

            match cur {
                CareerState::InCareer => {
                    for p in 0..p_n {
                        if panel.observed(p, q, t) {
                            c.obs[p] += 1;
                        } else {
                            c.miss[p] += 1;
                        }
                    }
                }
                _ => {
                    for p in 0..p_n {
                        if panel.observed(p, q, t) {
                            return Err(Error::validation(format!(
                                "runner {} has an observation in year {} while {}",
                                panel.runner_ids()[q],
                                panel.base_year() + t as i32,
                                if cur == CareerState::NotStarted {
                                    "not started"
                                } else {
                                    "finished"
                                }
                            )));
                        }
                    }
                }
            }
        }
    }
    Ok(counts)
}

/// Log-likelihood of one runner's missingness pattern under group-specific
/// probabilities, with variant-dependent inclusion of the two factors.
///
/// `runner_mask` is `P x T` row-major (`p * T + t`). `chain` and `delta`
/// must be present whenever the variant uses them. Probability-zero
/// configurations (an observation outside the career, an entry straight to
/// `Finished`) yield `-inf`.
pub fn pattern_loglik(
    career: &CareerSequence,
    runner_mask: &[bool],
    n_disciplines: usize,
    chain: Option<(f64, f64)>,
    delta: Option<&[f64]>,
    variant: ModelVariant,
) -> f64 {
    let t_n = career.len();
    debug_assert_eq!(runner_mask.len(), n_disciplines * t_n);
    if variant == ModelVariant::NoMissing {
        return 0.0;
    }
    let mut ll = 0.0;

    if variant.uses_chain() {
        let (l1, l2) = chain.expect("variant requires chain probabilities");
        let mut prev = CareerState::NotStarted;
        for t in 0..t_n {
            let cur = career.state(t);
            ll += match (prev, cur) {
                (CareerState::NotStarted, CareerState::NotStarted) => (1.0 - l1).ln(),
                (CareerState::NotStarted, CareerState::InCareer) => l1.ln(),
                (CareerState::InCareer, CareerState::InCareer) => (1.0 - l2).ln(),
                (CareerState::InCareer, CareerState::Finished) => l2.ln(),
                (CareerState::Finished, CareerState::Finished) => 0.0,
                _ => return f64::NEG_INFINITY,
            };
            prev = cur;
        }
    }

    if variant.uses_participation() {
        let delta = delta.expect("variant requires participation probabilities");
        debug_assert_eq!(delta.len(), n_disciplines);
        for t in 0..t_n {
            if career.state(t) == CareerState::InCareer {
                for p in 0..n_disciplines {
                    if runner_mask[p * t_n + t] {
                        ll += delta[p].ln();
                    } else {
                        ll += (1.0 - delta[p]).ln();
                    }
                }
            }
        }
    }

    // Observations outside the career have probability zero regardless of
    // which factors the variant keeps.
    for t in 0..t_n {
        if career.state(t) != CareerState::InCareer {
            for p in 0..n_disciplines {
                if runner_mask[p * t_n + t] {
                    return f64::NEG_INFINITY;
                }
            }
        }
    }

    ll
}

/// Conjugate Beta posteriors from the counts; an empty group falls back to
/// the Be(1, 1) prior.
pub fn update_beta_params(counts: &TransitionCounts) -> BetaPosteriors {
    BetaPosteriors {
        lambda1: (1.0 + counts.n01 as f64, 1.0 + counts.n00 as f64),
        lambda2: (1.0 + counts.n12 as f64, 1.0 + counts.n11 as f64),
        delta: counts
            .obs
            .iter()
            .zip(counts.miss.iter())
            .map(|(&o, &m)| (1.0 + o as f64, 1.0 + m as f64))
            .collect(),
    }
}
