//! Versioned on-disk formats: fit checkpoints, predictive ensemble
//! archives, and split plans.
//!
//! Everything is JSON with an explicit `format` tag and `version` field.
//! Draw data is laid out columnar (one array per quantity, one row per
//! retained draw) with documented flattening:
//!
//! * `sigma_r`, `psi_r`: row-major `P x P`;
//! * `delta`, `a_hat`: discipline-major (`p * G + g`);
//! * `states`: year-major then discipline (`t * P * G + p * G + g`).
//!
//! Serde's float round-tripping keeps writes byte-stable for identical
//! runs.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{ModelParameters, ModelVariant, PosteriorDraws, RetainedDraw};
use crate::missingness::{ChainProbabilities, ParticipationProbabilities};
use crate::panel::SplitPlan;
use crate::ssm::LatentStates;

pub const CHECKPOINT_FORMAT: &str = "corsa-checkpoint";
pub const ENSEMBLE_FORMAT: &str = "corsa-ensembles";
pub const SPLIT_FORMAT: &str = "corsa-split";

/// Serialized posterior draws.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub variant: String,
    pub seed: u64,
    pub n_disciplines: usize,
    pub n_runners: usize,
    pub n_years: usize,
    pub n_groups: usize,
    pub disciplines: Vec<String>,
    pub base_year: i32,
    pub p0: Vec<f64>,
    pub sigma_r: Vec<Vec<f64>>,
    pub psi_r: Vec<Vec<f64>>,
    pub pi: Vec<Vec<f64>>,
    pub lambda1: Option<Vec<Vec<f64>>>,
    pub lambda2: Option<Vec<Vec<f64>>>,
    pub delta: Option<Vec<Vec<f64>>>,
    pub a_hat: Vec<Vec<f64>>,
    pub states: Vec<Vec<f64>>,
    pub allocation: Vec<Vec<usize>>,
}

impl Checkpoint {
    pub fn from_draws(draws: &PosteriorDraws) -> Checkpoint {
        let p_n = draws.n_disciplines;
        let g_n = draws.n_groups;
        let flatten_mat = |m: &DMatrix<f64>| -> Vec<f64> {
            let mut v = Vec::with_capacity(m.nrows() * m.ncols());
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    v.push(m[(i, j)]);
                }
            }
            v
        };
        let uses_chain = draws.variant.uses_chain();
        let uses_part = draws.variant.uses_participation();
        let p0 = draws
            .draws
            .first()
            .map(|d| d.params.p0.iter().cloned().collect())
            .unwrap_or_default();
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: 1,
            variant: draws.variant.name().to_string(),
            seed: draws.seed,
            n_disciplines: p_n,
            n_runners: draws.n_runners,
            n_years: draws.n_years,
            n_groups: g_n,
            disciplines: draws.disciplines.clone(),
            base_year: draws.base_year,
            p0,
            sigma_r: draws
                .draws
                .iter()
                .map(|d| flatten_mat(&d.params.sigma_r))
                .collect(),
            psi_r: draws
                .draws
                .iter()
                .map(|d| flatten_mat(&d.params.psi_r))
                .collect(),
            pi: draws.draws.iter().map(|d| d.params.pi.clone()).collect(),
            lambda1: uses_chain.then(|| {
                draws
                    .draws
                    .iter()
                    .map(|d| d.params.chain.as_ref().unwrap().lambda1.clone())
                    .collect()
            }),
            lambda2: uses_chain.then(|| {
                draws
                    .draws
                    .iter()
                    .map(|d| d.params.chain.as_ref().unwrap().lambda2.clone())
                    .collect()
            }),
            delta: uses_part.then(|| {
                draws
                    .draws
                    .iter()
                    .map(|d| d.params.part.as_ref().unwrap().raw().to_vec())
                    .collect()
            }),
            a_hat: draws
                .draws
                .iter()
                .map(|d| flatten_mat(&d.params.a_hat))
                .collect(),
            states: draws
                .draws
                .iter()
                .map(|d| {
                    let mut flat = Vec::with_capacity(draws.n_years * p_n * g_n);
                    for t in 0..draws.n_years {
                        for p in 0..p_n {
                            for g in 0..g_n {
                                flat.push(d.states.a[t][(p, g)]);
                            }
                        }
                    }
                    flat
                })
                .collect(),
            allocation: draws
                .draws
                .iter()
                .map(|d| d.allocation.clone())
                .collect(),
        }
    }

    pub fn into_draws(self) -> Result<PosteriorDraws> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::validation(format!(
                "not a checkpoint file (format {:?})",
                self.format
            )));
        }
        if self.version != 1 {
            return Err(Error::validation(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        let variant: ModelVariant = self.variant.parse()?;
        let p_n = self.n_disciplines;
        let g_n = self.n_groups;
        let t_n = self.n_years;
        let keep = self.sigma_r.len();
        let check = |name: &str, ok: bool| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::validation(format!(
                    "checkpoint field {name} has inconsistent length"
                )))
            }
        };
        check("psi_r", self.psi_r.len() == keep)?;
        check("pi", self.pi.len() == keep)?;
        check("a_hat", self.a_hat.len() == keep)?;
        check("states", self.states.len() == keep)?;
        check("allocation", self.allocation.len() == keep)?;
        check(
            "lambda1/lambda2",
            variant.uses_chain() == (self.lambda1.is_some() && self.lambda2.is_some()),
        )?;
        check("delta", variant.uses_participation() == self.delta.is_some())?;

        let unflatten = |flat: &[f64], rows: usize, cols: usize| -> Result<DMatrix<f64>> {
            if flat.len() != rows * cols {
                return Err(Error::validation("checkpoint matrix length mismatch"));
            }
            Ok(DMatrix::from_row_slice(rows, cols, flat))
        };

        let mut draws = Vec::with_capacity(keep);
        for i in 0..keep {
            let chain = match (&self.lambda1, &self.lambda2) {
                (Some(l1), Some(l2)) => Some(ChainProbabilities::new(
                    l1[i].clone(),
                    l2[i].clone(),
                )?),
                _ => None,
            };
            let part = match &self.delta {
                Some(d) => Some(ParticipationProbabilities::new(d[i].clone(), p_n, g_n)?),
                None => None,
            };
            let state_flat = &self.states[i];
            if state_flat.len() != t_n * p_n * g_n {
                return Err(Error::validation("checkpoint state length mismatch"));
            }
            let mut a = Vec::with_capacity(t_n);
            for t in 0..t_n {
                a.push(DMatrix::from_fn(p_n, g_n, |p, g| {
                    state_flat[t * p_n * g_n + p * g_n + g]
                }));
            }
            if self.allocation[i].len() != self.n_runners
                || self.allocation[i].iter().any(|&g| g >= g_n)
            {
                return Err(Error::validation("checkpoint allocation out of range"));
            }
            draws.push(RetainedDraw {
                params: ModelParameters {
                    sigma_r: unflatten(&self.sigma_r[i], p_n, p_n)?,
                    psi_r: unflatten(&self.psi_r[i], p_n, p_n)?,
                    pi: self.pi[i].clone(),
                    chain,
                    part,
                    a_hat: unflatten(&self.a_hat[i], p_n, g_n)?,
                    p0: DVector::from_row_slice(&self.p0),
                },
                states: LatentStates { a },
                allocation: self.allocation[i].clone(),
            });
        }
        Ok(PosteriorDraws {
            variant,
            n_groups: g_n,
            seed: self.seed,
            n_disciplines: p_n,
            n_runners: self.n_runners,
            n_years: t_n,
            disciplines: self.disciplines,
            base_year: self.base_year,
            draws,
            trace: Vec::new(),
        })
    }
}

/// One predicted cell of a held-out runner.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub runner_id: String,
    pub discipline: String,
    pub year: i32,
}

/// Predictive draws for a set of cells under one fitted variant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleArchive {
    pub format: String,
    pub version: u32,
    pub variant: String,
    pub alpha: f64,
    pub b: usize,
    pub cells: Vec<CellKey>,
    pub draws: Vec<Vec<f64>>,
}

impl EnsembleArchive {
    pub fn validate(&self) -> Result<()> {
        if self.format != ENSEMBLE_FORMAT {
            return Err(Error::validation(format!(
                "not an ensemble archive (format {:?})",
                self.format
            )));
        }
        if self.version != 1 {
            return Err(Error::validation(format!(
                "unsupported ensemble archive version {}",
                self.version
            )));
        }
        if self.cells.len() != self.draws.len() {
            return Err(Error::validation("ensemble cells/draws mismatch"));
        }
        if self.draws.iter().any(|d| d.len() != self.b) {
            return Err(Error::validation("ensemble draw length mismatch"));
        }
        Ok(())
    }
}

/// Serialized split plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitFile {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub fraction: f64,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

impl SplitFile {
    pub fn from_plan(plan: &SplitPlan, fraction: f64) -> SplitFile {
        SplitFile {
            format: SPLIT_FORMAT.to_string(),
            version: 1,
            seed: plan.seed,
            fraction,
            train_ids: plan.train_ids.clone(),
            test_ids: plan.test_ids.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != SPLIT_FORMAT {
            return Err(Error::validation(format!(
                "not a split file (format {:?})",
                self.format
            )));
        }
        if self.version != 1 {
            return Err(Error::validation(format!(
                "unsupported split file version {}",
                self.version
            )));
        }
        Ok(())
    }
}

/// Write a value as pretty JSON.
pub fn write_json<W: Write, T: Serialize>(writer: &mut W, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *writer, value)
        .map_err(|e| Error::io(format!("serializing JSON: {e}")))?;
    writer.write_all(b"\n")?;
    Ok(())
}

/// Read a JSON value.
pub fn read_json<R: Read, T: DeserializeOwned>(reader: R) -> Result<T> {
    serde_json::from_reader(reader).map_err(|e| Error::validation(format!("parsing JSON: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::TraceRow;

    fn tiny_draws(variant: ModelVariant) -> PosteriorDraws {
        let p_n = 2;
        let g_n = 3;
        let t_n = 4;
        let chain = variant
            .uses_chain()
            .then(|| ChainProbabilities::new(vec![0.5, 0.4, 0.3], vec![0.2, 0.1, 0.6]).unwrap());
        let part = variant.uses_participation().then(|| {
            ParticipationProbabilities::new(
                vec![0.9, 0.8, 0.7, 0.6, 0.5, 0.4],
                p_n,
                g_n,
            )
            .unwrap()
        });
        let draw = RetainedDraw {
            params: ModelParameters {
                sigma_r: DMatrix::from_row_slice(2, 2, &[2.0, 0.25, 0.25, 1.0]),
                psi_r: DMatrix::identity(2, 2),
                pi: vec![0.2, 0.3, 0.5],
                chain,
                part,
                a_hat: DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
                p0: DVector::from_row_slice(&[1.0, 2.0]),
            },
            states: LatentStates {
                a: (0..t_n)
                    .map(|t| DMatrix::from_fn(p_n, g_n, |p, g| (t * 10 + p * 3 + g) as f64))
                    .collect(),
            },
            allocation: vec![0, 1, 2, 1, 0],
        };
        PosteriorDraws {
            variant,
            n_groups: g_n,
            seed: 7,
            n_disciplines: p_n,
            n_runners: 5,
            n_years: t_n,
            disciplines: vec!["800".into(), "1500".into()],
            base_year: 2006,
            draws: vec![draw.clone(), draw],
            trace: vec![TraceRow {
                iteration: 1,
                g_plus: 3,
                sigma_trace: 3.0,
                psi_trace: 2.0,
            }],
        }
    }

    #[test]
    fn checkpoint_round_trip_all_variants() {
        for variant in ModelVariant::ALL {
            let draws = tiny_draws(variant);
            let ck = Checkpoint::from_draws(&draws);
            let mut buf = Vec::new();
            write_json(&mut buf, &ck).unwrap();
            let parsed: Checkpoint = read_json(buf.as_slice()).unwrap();
            let back = parsed.into_draws().unwrap();
            assert_eq!(back.variant, variant);
            assert_eq!(back.draws.len(), 2);
            assert_eq!(back.draws[0].params.sigma_r, draws.draws[0].params.sigma_r);
            assert_eq!(back.draws[0].params.pi, draws.draws[0].params.pi);
            assert_eq!(back.draws[0].params.chain, draws.draws[0].params.chain);
            assert_eq!(back.draws[0].params.part, draws.draws[0].params.part);
            assert_eq!(back.draws[0].states, draws.draws[0].states);
            assert_eq!(back.draws[0].allocation, draws.draws[0].allocation);
        }
    }

    #[test]
    fn checkpoint_writes_are_byte_stable() {
        let draws = tiny_draws(ModelVariant::Complete);
        let ck = Checkpoint::from_draws(&draws);
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_json(&mut a, &ck).unwrap();
        write_json(&mut b, &ck).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wrong_format_is_rejected() {
        let draws = tiny_draws(ModelVariant::NoMissing);
        let mut ck = Checkpoint::from_draws(&draws);
        ck.format = "something-else".into();
        assert!(ck.into_draws().is_err());
    }
}
