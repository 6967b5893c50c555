//! Flat key-value run configuration.
//!
//! Config files hold `key = value` lines (lists comma-separated, `#`
//! comments). Command-line flags override file values; every run writes a
//! resolved snapshot next to its outputs so results stay attributable.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use corsa::error::{Error, Result};
use corsa::panel::DEFAULT_DISCIPLINES;
use corsa::synthgen::GeneratorConfig;

/// All run parameters with their defaults.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub variant: String,
    pub groups: usize,
    pub iterations: usize,
    pub keep: usize,
    pub seed: u64,
    pub split_fraction: f64,
    pub alpha: f64,
    pub ensemble_size: usize,
    pub min_obs: usize,
    pub base_age: i32,
    pub base_year: i32,
    pub threads: usize,
    pub fair_crps: bool,
    pub disciplines: Vec<String>,
    // Generator block.
    pub gen_runners: usize,
    pub gen_years: usize,
    pub gen_groups: usize,
    pub gen_pi: Vec<f64>,
    pub gen_lambda1: Vec<f64>,
    pub gen_lambda2: Vec<f64>,
    /// Per-group participation rows, each of length P.
    pub gen_delta: Vec<Vec<f64>>,
    /// Per-group initial trend rows, each of length P.
    pub gen_trend: Vec<Vec<f64>>,
    pub gen_sigma_sd: Vec<f64>,
    pub gen_sigma_corr: f64,
    pub gen_psi_sd: Vec<f64>,
    pub gen_psi_corr: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            variant: "complete".to_string(),
            groups: 50,
            iterations: 10_000,
            keep: 2_000,
            seed: 1,
            split_fraction: 0.30,
            alpha: 0.05,
            ensemble_size: 2_000,
            min_obs: 2,
            base_age: 18,
            base_year: 2006,
            threads: 0,
            fair_crps: false,
            disciplines: DEFAULT_DISCIPLINES.iter().map(|s| s.to_string()).collect(),
            gen_runners: 60,
            gen_years: 12,
            gen_groups: 3,
            gen_pi: vec![0.4, 0.35, 0.25],
            gen_lambda1: vec![0.9, 0.5, 0.2],
            gen_lambda2: vec![0.05, 0.2, 0.4],
            gen_delta: vec![
                vec![0.9, 0.9, 0.1],
                vec![0.1, 0.9, 0.9],
                vec![0.6, 0.5, 0.5],
            ],
            gen_trend: vec![
                vec![108.0, 232.0, 900.0],
                vec![118.0, 252.0, 980.0],
                vec![113.0, 242.0, 940.0],
            ],
            gen_sigma_sd: vec![1.5, 3.0, 8.0],
            gen_sigma_corr: 0.3,
            gen_psi_sd: vec![0.8, 1.5, 4.0],
            gen_psi_corr: 0.2,
        }
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|_| Error::validation(format!("config key {key}: bad element {s:?}")))
        })
        .collect()
}

fn parse_scalar<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| Error::validation(format!("config key {key}: bad value {value:?}")))
}

/// Parse a config file body into a key/value map.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::validation(format!(
                "config line {}: expected `key = value`, got {line:?}",
                lineno + 1
            ))
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

impl RunConfig {
    /// Start from defaults and fold in a parsed config file.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut delta_rows: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        let mut trend_rows: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for (key, value) in map {
            match key.as_str() {
                "variant" => cfg.variant = value.clone(),
                "groups" => cfg.groups = parse_scalar(key, value)?,
                "iterations" => cfg.iterations = parse_scalar(key, value)?,
                "keep" => cfg.keep = parse_scalar(key, value)?,
                "seed" => cfg.seed = parse_scalar(key, value)?,
                "split_fraction" => cfg.split_fraction = parse_scalar(key, value)?,
                "alpha" => cfg.alpha = parse_scalar(key, value)?,
                "ensemble_size" => cfg.ensemble_size = parse_scalar(key, value)?,
                "min_obs" => cfg.min_obs = parse_scalar(key, value)?,
                "base_age" => cfg.base_age = parse_scalar(key, value)?,
                "base_year" => cfg.base_year = parse_scalar(key, value)?,
                "threads" => cfg.threads = parse_scalar(key, value)?,
                "fair_crps" => cfg.fair_crps = parse_scalar(key, value)?,
                "disciplines" => cfg.disciplines = parse_list(key, value)?,
                "gen_runners" => cfg.gen_runners = parse_scalar(key, value)?,
                "gen_years" => cfg.gen_years = parse_scalar(key, value)?,
                "gen_groups" => cfg.gen_groups = parse_scalar(key, value)?,
                "gen_pi" => cfg.gen_pi = parse_list(key, value)?,
                "gen_lambda1" => cfg.gen_lambda1 = parse_list(key, value)?,
                "gen_lambda2" => cfg.gen_lambda2 = parse_list(key, value)?,
                "gen_sigma_sd" => cfg.gen_sigma_sd = parse_list(key, value)?,
                "gen_sigma_corr" => cfg.gen_sigma_corr = parse_scalar(key, value)?,
                "gen_psi_sd" => cfg.gen_psi_sd = parse_list(key, value)?,
                "gen_psi_corr" => cfg.gen_psi_corr = parse_scalar(key, value)?,
                other => {
                    if let Some(idx) = other.strip_prefix("gen_delta_g") {
                        let g: usize = parse_scalar(other, idx)?;
                        delta_rows.insert(g, parse_list(other, value)?);
                    } else if let Some(idx) = other.strip_prefix("gen_trend_g") {
                        let g: usize = parse_scalar(other, idx)?;
                        trend_rows.insert(g, parse_list(other, value)?);
                    } else {
                        return Err(Error::validation(format!("unknown config key {other:?}")));
                    }
                }
            }
        }
        if !delta_rows.is_empty() {
            cfg.gen_delta = collect_rows("gen_delta_g", delta_rows)?;
        }
        if !trend_rows.is_empty() {
            cfg.gen_trend = collect_rows("gen_trend_g", trend_rows)?;
        }
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::io(format!("reading {}: {e}", p.display())))?;
                parse_config_text(&text)
                    .and_then(|map| RunConfig::from_map(&map))
                    .map_err(|e| e.context(&format!("config {}", p.display())))
            }
        }
    }

    /// Build the generator configuration from the `gen_*` block.
    pub fn generator_config(&self) -> Result<GeneratorConfig> {
        let p = self.disciplines.len();
        let g = self.gen_groups;
        if self.gen_delta.len() != g || self.gen_trend.len() != g {
            return Err(Error::validation(format!(
                "need one gen_delta_g<k>/gen_trend_g<k> row per group (got {} and {} for {g} groups)",
                self.gen_delta.len(),
                self.gen_trend.len()
            )));
        }
        for row in self.gen_delta.iter().chain(self.gen_trend.iter()) {
            if row.len() != p {
                return Err(Error::validation(
                    "gen_delta/gen_trend rows must have one entry per discipline",
                ));
            }
        }
        if self.gen_sigma_sd.len() != p || self.gen_psi_sd.len() != p {
            return Err(Error::validation(
                "gen_sigma_sd/gen_psi_sd need one entry per discipline",
            ));
        }
        let cov = |sds: &[f64], corr: f64| -> Vec<f64> {
            let mut out = vec![0.0; p * p];
            for i in 0..p {
                for j in 0..p {
                    out[i * p + j] = if i == j {
                        sds[i] * sds[i]
                    } else {
                        corr * sds[i] * sds[j]
                    };
                }
            }
            out
        };
        let mut delta = vec![0.0; p * g];
        let mut trend = vec![0.0; p * g];
        for gi in 0..g {
            for pi in 0..p {
                delta[pi * g + gi] = self.gen_delta[gi][pi];
                trend[pi * g + gi] = self.gen_trend[gi][pi];
            }
        }
        Ok(GeneratorConfig {
            n_disciplines: p,
            n_runners: self.gen_runners,
            n_years: self.gen_years,
            n_groups_true: g,
            discipline_names: Some(self.disciplines.clone()),
            pi: self.gen_pi.clone(),
            lambda1: self.gen_lambda1.clone(),
            lambda2: self.gen_lambda2.clone(),
            delta,
            a_hat: trend,
            sigma_r: cov(&self.gen_sigma_sd, self.gen_sigma_corr),
            psi_r: cov(&self.gen_psi_sd, self.gen_psi_corr),
            min_obs: self.min_obs,
            base_year: self.base_year,
            seed: self.seed,
        })
    }

    /// Render the resolved configuration in a stable key order.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# format: corsa-config v1 (resolved snapshot)");
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let _ = writeln!(out, "variant = {}", self.variant);
        let _ = writeln!(out, "groups = {}", self.groups);
        let _ = writeln!(out, "iterations = {}", self.iterations);
        let _ = writeln!(out, "keep = {}", self.keep);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "split_fraction = {}", self.split_fraction);
        let _ = writeln!(out, "alpha = {}", self.alpha);
        let _ = writeln!(out, "ensemble_size = {}", self.ensemble_size);
        let _ = writeln!(out, "min_obs = {}", self.min_obs);
        let _ = writeln!(out, "base_age = {}", self.base_age);
        let _ = writeln!(out, "base_year = {}", self.base_year);
        let _ = writeln!(out, "threads = {}", self.threads);
        let _ = writeln!(out, "fair_crps = {}", self.fair_crps);
        let _ = writeln!(out, "disciplines = {}", self.disciplines.join(","));
        let _ = writeln!(out, "gen_runners = {}", self.gen_runners);
        let _ = writeln!(out, "gen_years = {}", self.gen_years);
        let _ = writeln!(out, "gen_groups = {}", self.gen_groups);
        let _ = writeln!(out, "gen_pi = {}", join(&self.gen_pi));
        let _ = writeln!(out, "gen_lambda1 = {}", join(&self.gen_lambda1));
        let _ = writeln!(out, "gen_lambda2 = {}", join(&self.gen_lambda2));
        for (i, row) in self.gen_delta.iter().enumerate() {
            let _ = writeln!(out, "gen_delta_g{} = {}", i + 1, join(row));
        }
        for (i, row) in self.gen_trend.iter().enumerate() {
            let _ = writeln!(out, "gen_trend_g{} = {}", i + 1, join(row));
        }
        let _ = writeln!(out, "gen_sigma_sd = {}", join(&self.gen_sigma_sd));
        let _ = writeln!(out, "gen_sigma_corr = {}", self.gen_sigma_corr);
        let _ = writeln!(out, "gen_psi_sd = {}", join(&self.gen_psi_sd));
        let _ = writeln!(out, "gen_psi_corr = {}", self.gen_psi_corr);
        out
    }
}

fn collect_rows(prefix: &str, rows: BTreeMap<usize, Vec<f64>>) -> Result<Vec<Vec<f64>>> {
    let n = rows.len();
    let mut out = Vec::with_capacity(n);
    for g in 1..=n {
        match rows.get(&g) {
            Some(row) => out.push(row.clone()),
            None => {
                return Err(Error::validation(format!(
                    "{prefix}<k> rows must be numbered 1..={n} (missing {prefix}{g})"
                )))
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_override_defaults_and_round_trip() {
        let text = "\n# comment\nvariant = attitude\ngroups = 10\ngen_delta_g1 = 0.9,0.8,0.1\n\
                    gen_delta_g2 = 0.1,0.8,0.9\ngen_delta_g3 = 0.5,0.5,0.5\nseed = 77\n";
        let cfg = RunConfig::from_map(&parse_config_text(text).unwrap()).unwrap();
        assert_eq!(cfg.variant, "attitude");
        assert_eq!(cfg.groups, 10);
        assert_eq!(cfg.seed, 77);
        assert_eq!(cfg.gen_delta[0], vec![0.9, 0.8, 0.1]);
        // The resolved snapshot parses back to the same config.
        let rendered = cfg.render();
        let cfg2 = RunConfig::from_map(&parse_config_text(&rendered).unwrap()).unwrap();
        assert_eq!(cfg2.variant, cfg.variant);
        assert_eq!(cfg2.gen_delta, cfg.gen_delta);
        assert_eq!(cfg2.seed, cfg.seed);
    }

    #[test]
    fn unknown_keys_and_bad_lines_are_rejected() {
        assert!(parse_config_text("no equals sign").is_err());
        let map = parse_config_text("whatever = 3").unwrap();
        assert!(RunConfig::from_map(&map).is_err());
    }

    #[test]
    fn generator_config_assembles_matrices() {
        let cfg = RunConfig::default();
        let gen = cfg.generator_config().unwrap();
        assert_eq!(gen.n_disciplines, 3);
        assert_eq!(gen.n_groups_true, 3);
        // delta is p-major: delta[p * G + g] = gen_delta[g][p].
        assert_eq!(gen.delta[0 * 3 + 1], cfg.gen_delta[1][0]);
        let sigma = gen.sigma_matrix();
        assert_eq!(sigma[(0, 0)], cfg.gen_sigma_sd[0] * cfg.gen_sigma_sd[0]);
        assert!(
            (sigma[(0, 1)] - cfg.gen_sigma_corr * cfg.gen_sigma_sd[0] * cfg.gen_sigma_sd[1])
                .abs()
                < 1e-12
        );
        gen.validate().unwrap();
    }
}
