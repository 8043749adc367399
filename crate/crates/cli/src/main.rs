//! Command-line front end: builds spanners and mechanisms, evaluates them
//! and turns raw traces into priors.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::ExperimentConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "optql", version, about = "Location privacy mechanisms with optimal quality loss")]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Privacy parameter; overrides the config.
    #[arg(long, global = true)]
    epsilon: Option<f64>,

    /// Spanner dilation; overrides the config.
    #[arg(long, global = true)]
    delta: Option<f64>,

    /// Sampling seed; overrides the first config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Prior JSON (`{"weights": [...]}`); overrides the config.
    #[arg(long, global = true)]
    prior: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    OptqlExact,
    OptqlSpanner,
    PlanarLaplace,
    Exponential,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the greedy spanner of the location set.
    Spanner,
    /// Build a mechanism.
    Build {
        #[arg(long, value_enum)]
        kind: Kind,
    },
    /// Evaluate mechanisms against priors.
    Eval {
        /// Mechanism JSON files over the configured locations.
        #[arg(long = "mechanism", required = true)]
        mechanisms: Vec<PathBuf>,
        /// Per-user priors written by `ingest`.
        #[arg(long)]
        priors: Option<PathBuf>,
    },
    /// Turn a trace CSV or a GeoLife directory into regions and priors.
    Ingest {
        #[arg(long)]
        traces: PathBuf,
    },
    /// Find the Planar Laplace epsilon matching a target quality loss.
    Calibrate {
        /// Target quality loss in km; defaults to the loss of the optimal
        /// mechanism at the configured epsilon.
        #[arg(long)]
        target_ql: Option<f64>,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if common.epsilon.is_some() {
        cfg.epsilon = common.epsilon;
    }
    if common.delta.is_some() {
        cfg.delta = common.delta;
    }
    if let Some(s) = common.seed {
        cfg.seeds = vec![s];
    }
    if common.out.is_some() {
        cfg.output_dir = common.out.clone();
    }
    if let Some(p) = &common.prior {
        if !p.exists() {
            return Err(CliError::Config(format!("prior {} does not exist", p.display())));
        }
        cfg.prior = Some(p.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Spanner => commands::spanner(&cfg),
        Command::Build { kind } => commands::build(&cfg, kind),
        Command::Eval { mechanisms, priors } => commands::eval(&cfg, &mechanisms, priors.as_deref()),
        Command::Ingest { traces } => commands::ingest(&cfg, &traces),
        Command::Calibrate { target_ql } => commands::calibrate(&cfg, target_ql),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // clap exits with 2 on usage errors; keep 2 for numeric failures
            return if e.use_stderr() {
                ExitCode::from(error::exit::INPUT as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Warning(msg) => log::warn!("{msg}"),
                _ => log::error!("{e}"),
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
