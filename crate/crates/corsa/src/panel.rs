//! Performance panels, career state derivation, and train/test splitting.
//!
//! A panel holds seasonal-best times indexed by (discipline `p`, runner `q`,
//! year `t`) together with the observation mask. Career states are derived
//! deterministically from the mask: a runner is in career from their first
//! observed year through their last, not started before, finished after.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{substream, StreamTag};

/// Default discipline set (distances in meters).
pub const DEFAULT_DISCIPLINES: [&str; 3] = ["800", "1500", "5000"];

/// One input observation in long format.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub runner_id: String,
    pub discipline: String,
    pub year: i32,
    pub seconds: f64,
}

/// Career state of a runner in a given year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CareerState {
    NotStarted = 0,
    InCareer = 1,
    Finished = 2,
}

impl CareerState {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(CareerState::NotStarted),
            1 => Ok(CareerState::InCareer),
            2 => Ok(CareerState::Finished),
            other => Err(Error::validation(format!("invalid career state {other}"))),
        }
    }
}

impl fmt::Display for CareerState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

/// Per-runner career trajectory over the panel years; non-decreasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CareerSequence {
    states: Vec<CareerState>,
}

impl CareerSequence {
    /// Validate monotonicity and the no-jump rule (0 never goes straight
    /// to 2 within a year boundary is allowed by monotonicity; only
    /// decreases are rejected).
    pub fn new(states: Vec<CareerState>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::validation("career sequence must be non-empty"));
        }
        for w in states.windows(2) {
            if w[1] < w[0] {
                return Err(Error::validation(format!(
                    "career sequence decreases from {} to {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(CareerSequence { states })
    }

    pub fn states(&self) -> &[CareerState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, t: usize) -> CareerState {
        self.states[t]
    }

    /// Number of in-career years.
    pub fn career_length(&self) -> usize {
        self.states
            .iter()
            .filter(|s| **s == CareerState::InCareer)
            .count()
    }
}

/// Derive the career sequence from per-year observation indicators:
/// `NotStarted` strictly before the first observed year, `InCareer` from the
/// first through the last observed year, `Finished` strictly after.
pub fn derive_career_states(any_obs_per_year: &[bool]) -> Result<CareerSequence> {
    let first = any_obs_per_year.iter().position(|&b| b);
    let last = any_obs_per_year.iter().rposition(|&b| b);
    let (first, last) = match (first, last) {
        (Some(f), Some(l)) => (f, l),
        _ => {
            return Err(Error::validation(
                "cannot derive career states from an all-missing mask",
            ))
        }
    };
    let states = (0..any_obs_per_year.len())
        .map(|t| {
            if t < first {
                CareerState::NotStarted
            } else if t <= last {
                CareerState::InCareer
            } else {
                CareerState::Finished
            }
        })
        .collect();
    CareerSequence::new(states)
}

/// Panel of seasonal-best times with observation mask.
///
/// Values are stored dense with `NaN` in unobserved cells; `observed`
/// carries the mask. Index layout is `p + n_disciplines * (q + n_runners * t)`.
#[derive(Debug, Clone)]
pub struct PerformancePanel {
    values: Vec<f64>,
    mask: Vec<bool>,
    disciplines: Vec<String>,
    runner_ids: Vec<String>,
    base_year: i32,
    n_years: usize,
}

impl PartialEq for PerformancePanel {
    /// Equality over structure, mask, and observed values (the NaN fill of
    /// unobserved cells is ignored).
    fn eq(&self, other: &Self) -> bool {
        self.disciplines == other.disciplines
            && self.runner_ids == other.runner_ids
            && self.base_year == other.base_year
            && self.n_years == other.n_years
            && self.mask == other.mask
            && self
                .values
                .iter()
                .zip(other.values.iter())
                .zip(self.mask.iter())
                .all(|((a, b), &m)| !m || a == b)
    }
}

impl PerformancePanel {
    pub fn n_disciplines(&self) -> usize {
        self.disciplines.len()
    }

    pub fn n_runners(&self) -> usize {
        self.runner_ids.len()
    }

    pub fn n_years(&self) -> usize {
        self.n_years
    }

    pub fn disciplines(&self) -> &[String] {
        &self.disciplines
    }

    pub fn runner_ids(&self) -> &[String] {
        &self.runner_ids
    }

    pub fn base_year(&self) -> i32 {
        self.base_year
    }

    #[inline]
    pub fn cell_index(&self, p: usize, q: usize, t: usize) -> usize {
        debug_assert!(p < self.n_disciplines() && q < self.n_runners() && t < self.n_years);
        p + self.disciplines.len() * (q + self.runner_ids.len() * t)
    }

    /// Observation indicator for a cell.
    #[inline]
    pub fn observed(&self, p: usize, q: usize, t: usize) -> bool {
        self.mask[self.cell_index(p, q, t)]
    }

    /// Value of an observed cell; `None` if missing.
    #[inline]
    pub fn value(&self, p: usize, q: usize, t: usize) -> Option<f64> {
        let i = self.cell_index(p, q, t);
        if self.mask[i] {
            Some(self.values[i])
        } else {
            None
        }
    }

    /// Raw dense values (NaN where missing), in cell-index layout.
    pub fn raw_values(&self) -> &[f64] {
        &self.values
    }

    /// Raw mask, in cell-index layout.
    pub fn raw_mask(&self) -> &[bool] {
        &self.mask
    }

    /// Number of observed cells in the whole panel.
    pub fn observed_cells(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    /// Number of observed cells for one runner.
    pub fn observed_cells_for(&self, q: usize) -> usize {
        let mut n = 0;
        for t in 0..self.n_years {
            for p in 0..self.n_disciplines() {
                if self.observed(p, q, t) {
                    n += 1;
                }
            }
        }
        n
    }

    /// Per-year indicator of whether runner `q` has any observation.
    pub fn any_observation_by_year(&self, q: usize) -> Vec<bool> {
        (0..self.n_years)
            .map(|t| (0..self.n_disciplines()).any(|p| self.observed(p, q, t)))
            .collect()
    }

    /// Observation mask for one runner as a `P x T` row-major vector.
    pub fn runner_mask(&self, q: usize) -> Vec<bool> {
        let p_n = self.n_disciplines();
        let mut out = Vec::with_capacity(p_n * self.n_years);
        for p in 0..p_n {
            for t in 0..self.n_years {
                out.push(self.observed(p, q, t));
            }
        }
        out
    }

    /// Observed cells of one runner as `(p, t, value)` triples in
    /// deterministic (t, p) order.
    pub fn observed_cells_of(&self, q: usize) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for t in 0..self.n_years {
            for p in 0..self.n_disciplines() {
                if let Some(v) = self.value(p, q, t) {
                    out.push((p, t, v));
                }
            }
        }
        out
    }

    /// Derive career sequences for all runners.
    pub fn derive_careers(&self) -> Result<Vec<CareerSequence>> {
        (0..self.n_runners())
            .map(|q| {
                derive_career_states(&self.any_observation_by_year(q)).map_err(|e| {
                    e.context(&format!("runner {}", self.runner_ids[q]))
                })
            })
            .collect()
    }

    /// Emit the panel back to long-format records in canonical order
    /// (runner, then year, then discipline).
    pub fn to_records(&self) -> Vec<RawRecord> {
        let mut out = Vec::with_capacity(self.observed_cells());
        for q in 0..self.n_runners() {
            for t in 0..self.n_years {
                for p in 0..self.n_disciplines() {
                    if let Some(v) = self.value(p, q, t) {
                        out.push(RawRecord {
                            runner_id: self.runner_ids[q].clone(),
                            discipline: self.disciplines[p].clone(),
                            year: self.base_year + t as i32,
                            seconds: v,
                        });
                    }
                }
            }
        }
        out
    }

    /// Restrict the panel to the given runner ids (kept in sorted order).
    /// Years and disciplines are unchanged.
    pub fn subset(&self, ids: &[String]) -> Result<PerformancePanel> {
        let mut wanted: Vec<String> = ids.to_vec();
        wanted.sort();
        wanted.dedup();
        let mut indices = Vec::with_capacity(wanted.len());
        for id in &wanted {
            match self.runner_ids.binary_search(id) {
                Ok(q) => indices.push(q),
                Err(_) => {
                    return Err(Error::validation(format!("unknown runner id {id}")));
                }
            }
        }
        if indices.is_empty() {
            return Err(Error::validation("subset selects no runners"));
        }
        let p_n = self.n_disciplines();
        let q_n = indices.len();
        let t_n = self.n_years;
        let mut values = vec![f64::NAN; p_n * q_n * t_n];
        let mut mask = vec![false; p_n * q_n * t_n];
        for (new_q, &old_q) in indices.iter().enumerate() {
            for t in 0..t_n {
                for p in 0..p_n {
                    let dst = p + p_n * (new_q + q_n * t);
                    let src = self.cell_index(p, old_q, t);
                    values[dst] = self.values[src];
                    mask[dst] = self.mask[src];
                }
            }
        }
        Ok(PerformancePanel {
            values,
            mask,
            disciplines: self.disciplines.clone(),
            runner_ids: wanted,
            base_year: self.base_year,
            n_years: t_n,
        })
    }

    /// Index of a runner id, if present.
    pub fn runner_index(&self, id: &str) -> Option<usize> {
        self.runner_ids.binary_search_by(|x| x.as_str().cmp(id)).ok()
    }
}

/// Build a validated panel from long-format records.
///
/// Disciplines must come from `disciplines` (which also fixes the `p`
/// ordering); duplicate cells and non-positive times are rejected; runners
/// with fewer than `min_obs` observed cells are dropped. Runner ids end up
/// sorted lexicographically, years span the min..max range of the input.
pub fn validate_panel(
    records: &[RawRecord],
    disciplines: &[String],
    min_obs: usize,
) -> Result<PerformancePanel> {
    if records.is_empty() {
        return Err(Error::validation("no records to build a panel from"));
    }
    if disciplines.is_empty() {
        return Err(Error::validation("discipline set must be non-empty"));
    }
    let disc_index: BTreeMap<&str, usize> = disciplines
        .iter()
        .enumerate()
        .map(|(i, d)| (d.as_str(), i))
        .collect();
    if disc_index.len() != disciplines.len() {
        return Err(Error::validation("discipline set contains duplicates"));
    }

    let min_year = records.iter().map(|r| r.year).min().unwrap();
    let max_year = records.iter().map(|r| r.year).max().unwrap();
    let n_years = (max_year - min_year + 1) as usize;
    if n_years < 2 {
        return Err(Error::validation(format!(
            "panel needs at least 2 years, got {n_years}"
        )));
    }

    // Group by runner, with duplicate detection on (runner, discipline, year).
    let mut per_runner: BTreeMap<&str, BTreeMap<(usize, usize), f64>> = BTreeMap::new();
    for r in records {
        let p = *disc_index.get(r.discipline.as_str()).ok_or_else(|| {
            Error::validation(format!(
                "unknown discipline {:?} for runner {} (declared: {})",
                r.discipline,
                r.runner_id,
                disciplines.join(",")
            ))
        })?;
        if !(r.seconds.is_finite() && r.seconds > 0.0) {
            return Err(Error::validation(format!(
                "non-positive time {} for ({}, {}, {})",
                r.seconds, r.runner_id, r.discipline, r.year
            )));
        }
        let t = (r.year - min_year) as usize;
        let cells = per_runner.entry(r.runner_id.as_str()).or_default();
        if cells.insert((p, t), r.seconds).is_some() {
            return Err(Error::validation(format!(
                "duplicate record for ({}, {}, {})",
                r.runner_id, r.discipline, r.year
            )));
        }
    }

    // Drop runners below the observation threshold.
    let kept: Vec<(&str, &BTreeMap<(usize, usize), f64>)> = per_runner
        .iter()
        .filter(|(_, cells)| cells.len() >= min_obs)
        .map(|(id, cells)| (*id, cells))
        .collect();
    if kept.is_empty() {
        return Err(Error::validation(format!(
            "no runners left after requiring at least {min_obs} observations"
        )));
    }

    let runner_ids: Vec<String> = kept.iter().map(|(id, _)| id.to_string()).collect();
    let p_n = disciplines.len();
    let q_n = runner_ids.len();
    let mut values = vec![f64::NAN; p_n * q_n * n_years];
    let mut mask = vec![false; p_n * q_n * n_years];
    for (q, (_, cells)) in kept.iter().enumerate() {
        for (&(p, t), &v) in cells.iter() {
            let i = p + p_n * (q + q_n * t);
            values[i] = v;
            mask[i] = true;
        }
    }

    Ok(PerformancePanel {
        values,
        mask,
        disciplines: disciplines.to_vec(),
        runner_ids,
        base_year: min_year,
        n_years,
    })
}

/// Assemble a panel directly from dense arrays (the trusted programmatic
/// path used by the generator and by tests). Observed values must be
/// finite; the positivity rule for real seconds is enforced at CSV
/// ingestion by [`validate_panel`].
pub fn panel_from_parts(
    values: Vec<f64>,
    mask: Vec<bool>,
    disciplines: Vec<String>,
    runner_ids: Vec<String>,
    base_year: i32,
    n_years: usize,
) -> Result<PerformancePanel> {
    let expect = disciplines.len() * runner_ids.len() * n_years;
    if values.len() != expect || mask.len() != expect {
        return Err(Error::validation(format!(
            "panel buffers have wrong length: expected {expect}, got {} values / {} mask",
            values.len(),
            mask.len()
        )));
    }
    for (i, (&v, &m)) in values.iter().zip(mask.iter()).enumerate() {
        if m && !v.is_finite() {
            return Err(Error::validation(format!(
                "observed cell {i} holds invalid value {v}"
            )));
        }
    }
    Ok(PerformancePanel {
        values,
        mask,
        disciplines,
        runner_ids,
        base_year,
        n_years,
    })
}

/// Runner-level train/test split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub seed: u64,
}

/// Split runners into train/test with `fraction` of runners (rounded) held
/// out for testing. Deterministic given the seed.
pub fn split_train_test(
    panel: &PerformancePanel,
    fraction: f64,
    seed: u64,
) -> Result<SplitPlan> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::validation(format!(
            "test fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let q_n = panel.n_runners();
    if q_n < 2 {
        return Err(Error::validation("need at least 2 runners to split"));
    }
    let n_test = (fraction * q_n as f64).round() as usize;
    if n_test == 0 || n_test == q_n {
        return Err(Error::validation(format!(
            "fraction {fraction} yields an empty train or test set for {q_n} runners"
        )));
    }
    let mut order: Vec<usize> = (0..q_n).collect();
    let mut rng = substream(seed, &[StreamTag::Split.tag()]);
    order.shuffle(&mut rng);
    let mut test_ids: Vec<String> = order[..n_test]
        .iter()
        .map(|&q| panel.runner_ids()[q].clone())
        .collect();
    let mut train_ids: Vec<String> = order[n_test..]
        .iter()
        .map(|&q| panel.runner_ids()[q].clone())
        .collect();
    test_ids.sort();
    train_ids.sort();
    Ok(SplitPlan {
        train_ids,
        test_ids,
        seed,
    })
}

const CSV_HEADER: &str = "runner_id,discipline,year,seconds";

/// Read long-format records from a CSV reader. Lines starting with `#` are
/// treated as comments; the header row must match exactly.
pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<RawRecord>> {
    let mut records = Vec::new();
    let mut saw_header = false;
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(format!("line {lineno}: {e}")))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !saw_header {
            if trimmed != CSV_HEADER {
                return Err(Error::validation(format!(
                    "line {lineno}: expected header {CSV_HEADER:?}, got {trimmed:?}"
                )));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::validation(format!(
                "line {lineno}: expected 4 fields, got {}",
                fields.len()
            )));
        }
        let year: i32 = fields[2]
            .trim()
            .parse()
            .map_err(|_| Error::validation(format!("line {lineno}: bad year {:?}", fields[2])))?;
        let seconds: f64 = fields[3].trim().parse().map_err(|_| {
            Error::validation(format!("line {lineno}: bad seconds {:?}", fields[3]))
        })?;
        records.push(RawRecord {
            runner_id: fields[0].trim().to_string(),
            discipline: fields[1].trim().to_string(),
            year,
            seconds,
        });
    }
    if !saw_header {
        return Err(Error::validation("CSV has no header row"));
    }
    Ok(records)
}

/// Write records in the long CSV format with a format-version header.
pub fn write_records<W: Write>(writer: &mut W, records: &[RawRecord]) -> Result<()> {
    writeln!(writer, "# format: corsa-panel v1")?;
    writeln!(writer, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            writer,
            "{},{},{},{}",
            r.runner_id, r.discipline, r.year, r.seconds
        )?;
    }
    Ok(())
}
