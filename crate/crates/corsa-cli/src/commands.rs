//! The four pipeline commands: simulate, fit, predict, score.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use corsa::checkpoint::{
    read_json, write_json, CellKey, Checkpoint, EnsembleArchive, SplitFile, ENSEMBLE_FORMAT,
};
use corsa::error::{Error, Result};
use corsa::gibbs::{run_chain, GibbsConfig, ModelVariant, PosteriorDraws};
use corsa::panel::{
    read_records, split_train_test, validate_panel, write_records, PerformancePanel,
};
use corsa::predictive::{prediction_bands, sample_predictive, NewRunnerPattern};
use corsa::rng::{derive_seed, StreamTag};
use corsa::scoring::{crps_ensemble, crps_ensemble_fair, interval_score, ScoreReport};
use corsa::synthgen::{generate, summarize};

use crate::config::RunConfig;

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}: {e}", dir.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}: {e}", path.display())))
}

fn write_snapshot(cfg: &RunConfig, dir: &Path, command: &str) -> Result<()> {
    write_file(
        &dir.join(format!("{command}.resolved.conf")),
        cfg.render().as_bytes(),
    )
}

fn load_panel(cfg: &RunConfig, data: &Path) -> Result<PerformancePanel> {
    let file = fs::File::open(data)
        .map_err(|e| Error::io(format!("opening {}: {e}", data.display())))?;
    let records = read_records(std::io::BufReader::new(file))
        .map_err(|e| e.context(&format!("{}", data.display())))?;
    validate_panel(&records, &cfg.disciplines, cfg.min_obs)
}

/// `simulate`: draw a synthetic panel and write the CSV, the ground-truth
/// sidecar, and an exploratory summary.
pub fn cmd_simulate(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    ensure_dir(out_dir)?;
    let gen_cfg = cfg.generator_config()?;
    let (panel, careers, truth) = generate(&gen_cfg)?;
    let summary = summarize(&panel, &careers)?;

    let mut csv = Vec::new();
    write_records(&mut csv, &panel.to_records())?;
    write_file(&out_dir.join("synthetic.csv"), &csv)?;

    let mut truth_buf = Vec::new();
    write_json(&mut truth_buf, &truth)?;
    write_file(&out_dir.join("truth.json"), &truth_buf)?;

    let mut summary_buf = Vec::new();
    write_json(&mut summary_buf, &summary)?;
    write_file(&out_dir.join("summary.json"), &summary_buf)?;

    write_snapshot(cfg, out_dir, "simulate")?;
    log::info!(
        "simulated {} runners x {} years, {} observed cells -> {}",
        panel.n_runners(),
        panel.n_years(),
        panel.observed_cells(),
        out_dir.display()
    );
    Ok(())
}

/// `fit`: split the runners, fit the requested variant on the training set,
/// and write the checkpoint, split plan, and fit log.
pub fn cmd_fit(cfg: &RunConfig, data: &Path, out_dir: &Path) -> Result<()> {
    ensure_dir(out_dir)?;
    let variant: ModelVariant = cfg.variant.parse()?;
    let panel = load_panel(cfg, data)?;
    let plan = split_train_test(&panel, cfg.split_fraction, cfg.seed)?;
    let train = panel.subset(&plan.train_ids)?;
    let careers = train.derive_careers()?;
    log::info!(
        "fitting {} on {} training runners ({} held out), G = {}, {} iterations",
        variant,
        train.n_runners(),
        plan.test_ids.len(),
        cfg.groups,
        cfg.iterations
    );
    let draws = run_chain(
        train,
        careers,
        variant,
        GibbsConfig {
            n_groups: cfg.groups,
            iterations: cfg.iterations,
            keep: cfg.keep,
            seed: cfg.seed,
            init_hyper: None,
        },
    )?;

    let mut split_buf = Vec::new();
    write_json(&mut split_buf, &SplitFile::from_plan(&plan, cfg.split_fraction))?;
    write_file(&out_dir.join("split.json"), &split_buf)?;

    let mut log_buf = Vec::new();
    writeln!(log_buf, "# format: corsa-fitlog v1")?;
    writeln!(log_buf, "iteration,g_plus,sigma_trace,psi_trace")?;
    for row in &draws.trace {
        writeln!(
            log_buf,
            "{},{},{},{}",
            row.iteration, row.g_plus, row.sigma_trace, row.psi_trace
        )?;
    }
    write_file(
        &out_dir.join(format!("fit_log_{}.csv", variant.name())),
        &log_buf,
    )?;

    let gplus = draws.g_plus();
    let (lo, hi) = (
        gplus.iter().min().copied().unwrap_or(0),
        gplus.iter().max().copied().unwrap_or(0),
    );
    log::info!("retained {} draws; filled components range {lo}..={hi}", gplus.len());

    let mut ck_buf = Vec::new();
    write_json(&mut ck_buf, &Checkpoint::from_draws(&draws))?;
    write_file(
        &out_dir.join(format!("checkpoint_{}.json", variant.name())),
        &ck_buf,
    )?;
    write_snapshot(cfg, out_dir, "fit")?;
    Ok(())
}

fn read_checkpoint(path: &Path) -> Result<PosteriorDraws> {
    let file =
        fs::File::open(path).map_err(|e| Error::io(format!("opening {}: {e}", path.display())))?;
    let ck: Checkpoint = read_json(std::io::BufReader::new(file))
        .map_err(|e| e.context(&format!("{}", path.display())))?;
    ck.into_draws()
}

/// `predict`: sample predictive ensembles for every held-out runner's
/// observed cells, conditional on their missingness pattern.
pub fn cmd_predict(
    cfg: &RunConfig,
    data: &Path,
    checkpoint: &Path,
    split: &Path,
    out_dir: &Path,
) -> Result<()> {
    ensure_dir(out_dir)?;
    let draws = read_checkpoint(checkpoint)?;
    let split_file = fs::File::open(split)
        .map_err(|e| Error::io(format!("opening {}: {e}", split.display())))?;
    let split: SplitFile = read_json(std::io::BufReader::new(split_file))?;
    split.validate()?;
    if split.test_ids.is_empty() {
        return Err(Error::validation("split has an empty test set"));
    }
    let panel = load_panel(cfg, data)?;
    if panel.disciplines() != draws.disciplines.as_slice() {
        return Err(Error::validation(
            "data disciplines do not match the checkpoint",
        ));
    }
    if panel.n_years() != draws.n_years || panel.base_year() != draws.base_year {
        return Err(Error::validation(
            "data year range does not match the checkpoint",
        ));
    }
    let test = panel.subset(&split.test_ids)?;
    let t_n = test.n_years();

    let mut bands_buf = Vec::new();
    writeln!(bands_buf, "# format: corsa-bands v1")?;
    writeln!(bands_buf, "# alpha = {}", cfg.alpha)?;
    writeln!(bands_buf, "# variant = {}", draws.variant.name())?;
    writeln!(bands_buf, "runner_id,discipline,year,lower,median,upper")?;

    let mut cells = Vec::new();
    let mut cell_draws = Vec::new();
    for q in 0..test.n_runners() {
        let runner_id = &test.runner_ids()[q];
        let career = corsa::panel::derive_career_states(&test.any_observation_by_year(q))
            .map_err(|e| e.context(&format!("runner {runner_id}")))?;
        let mask = test.runner_mask(q);
        let pattern = NewRunnerPattern::new(mask, career, test.n_disciplines())?;
        let runner_seed = derive_seed(cfg.seed, &[StreamTag::Predictive.tag(), q as u64]);
        let ensemble = sample_predictive(&pattern, &draws, cfg.ensemble_size, runner_seed)
            .map_err(|e| e.context(&format!("runner {runner_id}")))?;
        let bands = prediction_bands(&ensemble, cfg.alpha)?;
        for (i, &(p, t)) in ensemble.cells.iter().enumerate() {
            writeln!(
                bands_buf,
                "{},{},{},{},{},{}",
                runner_id,
                test.disciplines()[p],
                test.base_year() + t as i32,
                bands.lower[i],
                bands.median[i],
                bands.upper[i]
            )?;
            cells.push(CellKey {
                runner_id: runner_id.clone(),
                discipline: test.disciplines()[p].clone(),
                year: test.base_year() + t as i32,
            });
        }
        cell_draws.extend(ensemble.draws);
        let _ = t_n;
    }

    write_file(
        &out_dir.join(format!("bands_{}.csv", draws.variant.name())),
        &bands_buf,
    )?;
    let archive = EnsembleArchive {
        format: ENSEMBLE_FORMAT.to_string(),
        version: 1,
        variant: draws.variant.name().to_string(),
        alpha: cfg.alpha,
        b: cfg.ensemble_size,
        cells,
        draws: cell_draws,
    };
    archive.validate()?;
    let mut buf = Vec::new();
    write_json(&mut buf, &archive)?;
    write_file(
        &out_dir.join(format!("ensembles_{}.json", draws.variant.name())),
        &buf,
    )?;
    write_snapshot(cfg, out_dir, "predict")?;
    log::info!(
        "predicted {} cells for {} held-out runners ({})",
        archive.cells.len(),
        split.test_ids.len(),
        draws.variant
    );
    Ok(())
}

/// `score`: compare two or more ensemble archives on the same test cells.
pub fn cmd_score(
    cfg: &RunConfig,
    data: &Path,
    ensemble_paths: &[PathBuf],
    out_dir: &Path,
) -> Result<()> {
    if ensemble_paths.len() < 2 {
        return Err(Error::validation("need at least two ensemble archives"));
    }
    ensure_dir(out_dir)?;
    let panel = load_panel(cfg, data)?;

    let mut archives = Vec::new();
    for path in ensemble_paths {
        let file = fs::File::open(path)
            .map_err(|e| Error::io(format!("opening {}: {e}", path.display())))?;
        let archive: EnsembleArchive = read_json(std::io::BufReader::new(file))
            .map_err(|e| e.context(&format!("{}", path.display())))?;
        archive.validate()?;
        if (archive.alpha - cfg.alpha).abs() > 1e-12 {
            log::warn!(
                "{}: archive alpha {} differs from scoring alpha {}",
                path.display(),
                archive.alpha,
                cfg.alpha
            );
        }
        archives.push(archive);
    }

    // All archives must cover the same cells.
    let reference: Vec<&CellKey> = archives[0].cells.iter().collect();
    for (archive, path) in archives.iter().zip(ensemble_paths) {
        if archive.cells.len() != reference.len()
            || archive.cells.iter().zip(reference.iter()).any(|(a, &b)| a != b)
        {
            return Err(Error::validation(format!(
                "{}: ensemble cells do not match {}",
                path.display(),
                ensemble_paths[0].display()
            )));
        }
    }

    // Truth lookup from the observed panel.
    let mut truths = Vec::with_capacity(reference.len());
    for cell in &reference {
        let q = panel.runner_index(&cell.runner_id).ok_or_else(|| {
            Error::validation(format!("cell runner {} not in the data", cell.runner_id))
        })?;
        let p = panel
            .disciplines()
            .iter()
            .position(|d| d == &cell.discipline)
            .ok_or_else(|| {
                Error::validation(format!("cell discipline {} not declared", cell.discipline))
            })?;
        let t = cell.year - panel.base_year();
        if t < 0 || t as usize >= panel.n_years() {
            return Err(Error::validation(format!(
                "cell year {} outside the panel range",
                cell.year
            )));
        }
        let y = panel.value(p, q, t as usize).ok_or_else(|| {
            Error::validation(format!(
                "cell ({}, {}, {}) is not observed in the data",
                cell.runner_id, cell.discipline, cell.year
            ))
        })?;
        truths.push(y);
    }

    let crps_fn = if cfg.fair_crps {
        crps_ensemble_fair
    } else {
        crps_ensemble
    };
    let mut names = Vec::new();
    let mut crps_cells = Vec::new();
    let mut interval_cells = Vec::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for archive in &archives {
        let n = seen.entry(archive.variant.clone()).or_insert(0);
        *n += 1;
        let name = if *n == 1 {
            archive.variant.clone()
        } else {
            format!("{}#{}", archive.variant, n)
        };
        names.push(name);
        let crps: Vec<f64> = archive
            .draws
            .iter()
            .zip(truths.iter())
            .map(|(draws, &y)| crps_fn(draws, y))
            .collect();
        let is: Vec<f64> = archive
            .draws
            .iter()
            .zip(truths.iter())
            .map(|(draws, &y)| interval_score(draws, y, cfg.alpha))
            .collect();
        crps_cells.push(crps);
        interval_cells.push(is);
    }

    let report = ScoreReport::build(&names, &crps_cells, &interval_cells, cfg.alpha)?;
    let mut buf = Vec::new();
    write_json(&mut buf, &report)?;
    write_file(&out_dir.join("scores.json"), &buf)?;
    let table = report.render_table();
    write_file(&out_dir.join("scores.txt"), table.as_bytes())?;
    write_snapshot(cfg, out_dir, "score")?;
    println!("{table}");
    Ok(())
}
