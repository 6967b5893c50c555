//! corsa: fit latent-class state space models of runner careers with
//! informative missingness, predict held-out runners, and compare model
//! variants by proper scoring rules.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use corsa::error::Error;
use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "corsa",
    about = "Latent-class state space modelling of runner careers",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct CommonArgs {
    /// Key-value config file; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(short = 'o', long, default_value = "out")]
    out: PathBuf,
    /// Base seed for all random streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Rayon worker threads (0 = library default); results do not depend
    /// on this.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic panel plus ground-truth sidecar.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Split runners, fit one model variant on the training set, and write
    /// a checkpoint.
    Fit {
        #[command(flatten)]
        common: CommonArgs,
        /// Long-format CSV of observations.
        #[arg(long)]
        data: PathBuf,
        /// Model variant: complete | no-missing | attitude | history.
        #[arg(long)]
        variant: Option<String>,
        /// Number of mixture components.
        #[arg(short = 'G', long)]
        groups: Option<usize>,
        /// Gibbs sweeps.
        #[arg(long)]
        iters: Option<usize>,
        /// Retained final sweeps.
        #[arg(long)]
        keep: Option<usize>,
        /// Held-out fraction of runners.
        #[arg(long)]
        split: Option<f64>,
        /// Minimum observed cells per runner.
        #[arg(long)]
        min_obs: Option<usize>,
    },
    /// Sample predictive ensembles for the held-out runners of a fit.
    Predict {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint written by `fit`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Split plan written by `fit`.
        #[arg(long)]
        split: PathBuf,
        /// Ensemble size per cell.
        #[arg(short = 'B', long)]
        ensemble_size: Option<usize>,
        /// Band level (quantiles at alpha/2 and 1 - alpha/2).
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Compare two or more ensemble archives on the same test cells.
    Score {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        data: PathBuf,
        /// Ensemble archives (repeat the flag; at least two).
        #[arg(long = "ensembles", required = true)]
        ensembles: Vec<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Use the bias-corrected CRPS spread divisor 2B(B-1).
        #[arg(long)]
        fair_crps: bool,
    },
}

fn apply_common(cfg: &mut RunConfig, common: &CommonArgs) {
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = common.threads {
        cfg.threads = threads;
    }
}

fn run() -> Result<(), Error> {
    let cli = Cli::try_parse().map_err(|e| {
        // clap already formats usage errors nicely; keep the text.
        Error::Validation(e.to_string())
    })?;
    match cli.command {
        Command::Simulate { common } => {
            let mut cfg = RunConfig::load(common.config.as_deref())?;
            apply_common(&mut cfg, &common);
            init_threads(&cfg)?;
            commands::cmd_simulate(&cfg, &common.out)
        }
        Command::Fit {
            common,
            data,
            variant,
            groups,
            iters,
            keep,
            split,
            min_obs,
        } => {
            let mut cfg = RunConfig::load(common.config.as_deref())?;
            apply_common(&mut cfg, &common);
            if let Some(v) = variant {
                cfg.variant = v;
            }
            if let Some(g) = groups {
                cfg.groups = g;
            }
            if let Some(i) = iters {
                cfg.iterations = i;
            }
            if let Some(k) = keep {
                cfg.keep = k;
            }
            if let Some(s) = split {
                cfg.split_fraction = s;
            }
            if let Some(m) = min_obs {
                cfg.min_obs = m;
            }
            init_threads(&cfg)?;
            commands::cmd_fit(&cfg, &data, &common.out)
        }
        Command::Predict {
            common,
            data,
            checkpoint,
            split,
            ensemble_size,
            alpha,
        } => {
            let mut cfg = RunConfig::load(common.config.as_deref())?;
            apply_common(&mut cfg, &common);
            if let Some(b) = ensemble_size {
                cfg.ensemble_size = b;
            }
            if let Some(a) = alpha {
                cfg.alpha = a;
            }
            init_threads(&cfg)?;
            commands::cmd_predict(&cfg, &data, &checkpoint, &split, &common.out)
        }
        Command::Score {
            common,
            data,
            ensembles,
            alpha,
            fair_crps,
        } => {
            let mut cfg = RunConfig::load(common.config.as_deref())?;
            apply_common(&mut cfg, &common);
            if let Some(a) = alpha {
                cfg.alpha = a;
            }
            if fair_crps {
                cfg.fair_crps = true;
            }
            init_threads(&cfg)?;
            commands::cmd_score(&cfg, &data, &ensembles, &common.out)
        }
    }
}

fn init_threads(cfg: &RunConfig) -> Result<(), Error> {
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| Error::Validation(format!("thread pool setup: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("corsa: {e}");
            match e {
                Error::Validation(_) => ExitCode::from(1),
                Error::Numerical(_) => ExitCode::from(2),
                Error::Io(_) => ExitCode::from(3),
            }
        }
    }
}
