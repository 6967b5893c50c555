//! Probabilistic forecast scores: empirical CRPS, interval score, and the
//! pairwise model-preference fraction.
//!
//! Scores are scale sensitive, so cross-model comparison uses the fraction
//! of test cells on which model `j` strictly beats model `j'`, with exact
//! ties split 0.5/0.5 so that `S(j, j') + S(j', j) = 1` always holds.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats::{quantile_type7, sorted_copy};

/// Empirical CRPS of an ensemble forecast against outcome `y`:
/// `(1/B) sum |x_b - y| - (1/(2 B^2)) sum_{b,b'} |x_b - x_b'|`,
/// computed through the sorted form (identical to the double sum).
pub fn crps_ensemble(draws: &[f64], y: f64) -> f64 {
    crps_impl(draws, y, false)
}

/// Bias-corrected ("fair") variant with spread divisor `2 B (B - 1)`.
pub fn crps_ensemble_fair(draws: &[f64], y: f64) -> f64 {
    crps_impl(draws, y, true)
}

fn crps_impl(draws: &[f64], y: f64, fair: bool) -> f64 {
    let b = draws.len();
    assert!(b >= 1, "CRPS needs at least one draw");
    if fair {
        assert!(b >= 2, "fair CRPS needs at least two draws");
    }
    let sorted = sorted_copy(draws);
    let bf = b as f64;
    let term1: f64 = sorted.iter().map(|x| (x - y).abs()).sum::<f64>() / bf;
    // sum_{i<j} (x_(j) - x_(i)) = sum_k (2k - B + 1) x_(k), zero-indexed.
    let mut spread = 0.0;
    for (k, x) in sorted.iter().enumerate() {
        spread += (2.0 * k as f64 - bf + 1.0) * x;
    }
    let denom = if fair { bf * (bf - 1.0) } else { bf * bf };
    term1 - spread / denom
}

/// Interval score at level `alpha`:
/// `(u - l) + (2/alpha) [ (l - y) 1(y < l) + (y - u) 1(y > u) ]` with `l`,
/// `u` the empirical `alpha/2` and `1 - alpha/2` quantiles of the ensemble
/// (same interpolation convention as the prediction bands).
pub fn interval_score(draws: &[f64], y: f64, alpha: f64) -> f64 {
    assert!(alpha > 0.0 && alpha < 0.5, "alpha must lie in (0, 0.5)");
    assert!(!draws.is_empty(), "interval score needs draws");
    let sorted = sorted_copy(draws);
    let l = quantile_type7(&sorted, alpha / 2.0);
    let u = quantile_type7(&sorted, 1.0 - alpha / 2.0);
    let mut score = u - l;
    if y < l {
        score += 2.0 / alpha * (l - y);
    } else if y > u {
        score += 2.0 / alpha * (y - u);
    }
    score
}

/// Fraction of cells on which `scores_j` beats `scores_jp` (smaller is
/// better), ties counting one half.
pub fn pairwise_compare(scores_j: &[f64], scores_jp: &[f64]) -> Result<f64> {
    if scores_j.len() != scores_jp.len() {
        return Err(Error::validation(format!(
            "score vectors cover different cell sets ({} vs {})",
            scores_j.len(),
            scores_jp.len()
        )));
    }
    if scores_j.is_empty() {
        return Err(Error::validation("no cells to compare"));
    }
    let mut wins = 0.0;
    for (a, b) in scores_j.iter().zip(scores_jp.iter()) {
        if a < b {
            wins += 1.0;
        } else if a == b {
            wins += 0.5;
        }
    }
    Ok(wins / scores_j.len() as f64)
}

/// Cross-variant score report: pairwise preference matrices for CRPS and
/// interval score, plus per-variant mean scores.
#[derive(Debug, Clone, Serialize)]
pub struct ScoreReport {
    pub format: String,
    pub version: u32,
    pub alpha: f64,
    pub n_cells: usize,
    pub variants: Vec<String>,
    /// `crps[j][jp] = S_1^{j jp}`; diagonal entries are 0.5 by convention.
    pub crps: Vec<Vec<f64>>,
    /// `interval[j][jp] = S_2^{j jp}`; diagonal entries are 0.5.
    pub interval: Vec<Vec<f64>>,
    pub mean_crps: Vec<f64>,
    pub mean_interval: Vec<f64>,
}

impl ScoreReport {
    /// Assemble the report from per-variant per-cell scores (cells must be
    /// aligned across variants).
    pub fn build(
        variants: &[String],
        crps_cells: &[Vec<f64>],
        interval_cells: &[Vec<f64>],
        alpha: f64,
    ) -> Result<ScoreReport> {
        let k = variants.len();
        if k < 2 {
            return Err(Error::validation("need at least two variants to compare"));
        }
        if crps_cells.len() != k || interval_cells.len() != k {
            return Err(Error::validation("per-variant score lists mismatch"));
        }
        let n_cells = crps_cells[0].len();
        for cells in crps_cells.iter().chain(interval_cells.iter()) {
            if cells.len() != n_cells {
                return Err(Error::validation(
                    "variants scored on different cell sets",
                ));
            }
        }
        let mut crps = vec![vec![0.5; k]; k];
        let mut interval = vec![vec![0.5; k]; k];
        for j in 0..k {
            for jp in 0..k {
                if j == jp {
                    continue;
                }
                crps[j][jp] = pairwise_compare(&crps_cells[j], &crps_cells[jp])?;
                interval[j][jp] = pairwise_compare(&interval_cells[j], &interval_cells[jp])?;
            }
        }
        let mean = |cells: &Vec<f64>| cells.iter().sum::<f64>() / cells.len() as f64;
        Ok(ScoreReport {
            format: "corsa-scores".to_string(),
            version: 1,
            alpha,
            n_cells,
            variants: variants.to_vec(),
            crps,
            interval,
            mean_crps: crps_cells.iter().map(mean).collect(),
            mean_interval: interval_cells.iter().map(mean).collect(),
        })
    }

    /// Plain-text table: CRPS preferences above the diagonal, interval-score
    /// preferences below it.
    pub fn render_table(&self) -> String {
        let k = self.variants.len();
        let width = self
            .variants
            .iter()
            .map(|v| v.len())
            .max()
            .unwrap_or(8)
            .max(10);
        let mut out = String::new();
        out.push_str(&format!(
            "Pairwise preference fractions over {} test cells (alpha = {}).\n",
            self.n_cells, self.alpha
        ));
        out.push_str("CRPS above the diagonal, interval score below; entries above 0.5 favor the row model.\n\n");
        out.push_str(&format!("{:>width$} ", "", width = width));
        for v in &self.variants {
            out.push_str(&format!("{v:>width$} ", width = width));
        }
        out.push('\n');
        for j in 0..k {
            out.push_str(&format!("{:>width$} ", self.variants[j], width = width));
            for jp in 0..k {
                if j == jp {
                    out.push_str(&format!("{:>width$} ", "--", width = width));
                } else if j < jp {
                    out.push_str(&format!("{:>width$.3} ", self.crps[j][jp], width = width));
                } else {
                    out.push_str(&format!(
                        "{:>width$.3} ",
                        self.interval[j][jp],
                        width = width
                    ));
                }
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crps_hand_example() {
        // {1,2,3} against 2: 2/3 - 8/18 = 2/9.
        let got = crps_ensemble(&[1.0, 2.0, 3.0], 2.0);
        assert!((got - 2.0 / 9.0).abs() < 1e-15, "{got}");
        // Order must not matter.
        let got = crps_ensemble(&[3.0, 1.0, 2.0], 2.0);
        assert!((got - 2.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn crps_degenerate_cases() {
        assert_eq!(crps_ensemble(&[5.0, 5.0, 5.0], 5.0), 0.0);
        // Single draw: |x - y|.
        assert_eq!(crps_ensemble(&[4.0], 7.0), 3.0);
    }

    #[test]
    fn fair_crps_uses_smaller_divisor() {
        let draws = [1.0, 2.0, 4.0];
        let plain = crps_ensemble(&draws, 2.0);
        let fair = crps_ensemble_fair(&draws, 2.0);
        assert!(fair < plain);
        // Spread term ratio is B / (B - 1).
        let spread_plain = {
            let mut s = 0.0;
            for a in draws {
                for b in draws {
                    s += (a - b).abs();
                }
            }
            s / (2.0 * 9.0)
        };
        assert!(((plain - fair) - (spread_plain * 3.0 / 2.0 - spread_plain)).abs() < 1e-12);
    }

    #[test]
    fn interval_score_branches() {
        // Ensemble whose 0.025/0.975 quantiles are exactly 2 and 3: five
        // copies of each endpoint pin the interpolated quantiles there.
        let mut draws = vec![2.0; 5];
        draws.extend((1..=90).map(|k| 2.0 + k as f64 / 91.0));
        draws.extend(vec![3.0; 5]);
        assert_eq!(draws.len(), 100);
        let inside = interval_score(&draws, 2.5, 0.05);
        assert!((inside - 1.0).abs() < 1e-12, "{inside}");
        let above = interval_score(&draws, 3.5, 0.05);
        assert!((above - 21.0).abs() < 1e-12, "{above}");
        let below = interval_score(&draws, 1.5, 0.05);
        assert!((below - 21.0).abs() < 1e-12, "{below}");
    }

    #[test]
    fn pairwise_with_ties() {
        assert_eq!(pairwise_compare(&[1.0, 1.0], &[2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(pairwise_compare(&[2.0, 2.0], &[2.0, 2.0]).unwrap(), 0.5);
        let got = pairwise_compare(&[1.0, 3.0, 2.0], &[2.0, 2.0, 2.0]).unwrap();
        assert!((got - 0.5).abs() < 1e-15);
        assert!(pairwise_compare(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn report_table_shape() {
        let variants = vec!["complete".to_string(), "no-missing".to_string()];
        let crps = vec![vec![0.1, 0.2, 0.3], vec![0.2, 0.2, 0.4]];
        let is = vec![vec![1.0, 2.0, 3.0], vec![2.0, 2.0, 2.0]];
        let report = ScoreReport::build(&variants, &crps, &is, 0.05).unwrap();
        assert!((report.crps[0][1] - (1.0 + 0.5 + 1.0) / 3.0).abs() < 1e-15);
        assert!((report.crps[0][1] + report.crps[1][0] - 1.0).abs() < 1e-15);
        let table = report.render_table();
        assert!(table.contains("complete"));
        assert!(table.contains("--"));
    }
}
