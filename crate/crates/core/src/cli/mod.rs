//! Command-line front end.

pub mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::ExperimentConfig;

use crate::datagen::OodKind;
use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "qmarkov",
    version,
    about = "Estimate non-Markovian environment dimension from simulated qubit statistics"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Default, Args)]
pub struct GlobalArgs {
    /// TOML experiment configuration; flags override its values
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Master seed every randomized stage derives from
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,

    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Worker thread cap; results do not depend on it
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,

    /// Number of trees
    #[arg(long, global = true, value_name = "N")]
    pub trees: Option<usize>,

    /// Examples per grid cell
    #[arg(long, global = true, value_name = "N")]
    pub per_cell: Option<usize>,

    /// Examples per cell of the out-of-range test sets
    #[arg(long, global = true, value_name = "N")]
    pub ood_per_cell: Option<usize>,

    #[arg(long, global = true, overrides_with = "no_include_k1")]
    pub include_k1: bool,
    #[arg(long, global = true, overrides_with = "include_k1")]
    pub no_include_k1: bool,

    #[arg(long, global = true, overrides_with = "no_include_phi")]
    pub include_phi: bool,
    #[arg(long, global = true, overrides_with = "include_phi")]
    pub no_include_phi: bool,

    /// Features kept by `reduce`
    #[arg(long, global = true, value_name = "N")]
    pub top_k: Option<usize>,

    /// Permutation repeats for `importance`
    #[arg(long, global = true, value_name = "N")]
    pub repeats: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the configured grid into dataset.csv
    Generate,
    /// Shuffle and split a dataset into train/val/test
    Split {
        #[arg(long, value_name = "PATH")]
        data: Option<PathBuf>,
    },
    /// Split, fit the forest and write model.json with a training report
    Train {
        #[arg(long, value_name = "PATH")]
        data: Option<PathBuf>,
    },
    /// Score a model on a dataset (default: the test split)
    Evaluate {
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        data: Option<PathBuf>,
    },
    /// Rank features by permutation importance (default: the validation split)
    Importance {
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        data: Option<PathBuf>,
    },
    /// Retrain on the top-k features and compare with the full model
    Reduce {
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
    },
    /// Generate out-of-range test sets (both kinds unless --kind is given)
    Oodgen {
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=2))]
        kind: Option<u32>,
    },
}

fn pick(on: bool, off: bool) -> Option<bool> {
    match (on, off) {
        (true, _) => Some(true),
        (_, true) => Some(false),
        _ => None,
    }
}

impl GlobalArgs {
    /// Config file values (or defaults) with flags applied on top.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    cfg.$field = v;
                }
            )*};
        }
        set!(seed, out, trees, per_cell, ood_per_cell, top_k, repeats);
        if self.workers.is_some() {
            cfg.workers = self.workers;
        }
        if let Some(v) = pick(self.include_k1, self.no_include_k1) {
            cfg.include_k1 = v;
        }
        if let Some(v) = pick(self.include_phi, self.no_include_phi) {
            cfg.include_phi = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn dispatch(cfg: &ExperimentConfig, command: &Command) -> Result<String> {
    match command {
        Command::Generate => commands::generate(cfg),
        Command::Split { data } => commands::split(cfg, data.as_deref()),
        Command::Train { data } => commands::train(cfg, data.as_deref()),
        Command::Evaluate { model, data } => {
            commands::evaluate(cfg, model.as_deref(), data.as_deref())
        }
        Command::Importance { model, data } => {
            commands::importance(cfg, model.as_deref(), data.as_deref())
        }
        Command::Reduce { model } => commands::reduce(cfg, model.as_deref()),
        Command::Oodgen { kind } => {
            let kind = kind.map(OodKind::try_from).transpose()?;
            commands::oodgen(cfg, kind)
        }
    }
}

/// Runs one command, on a dedicated pool when `workers` is set.
pub fn run(cli: &Cli) -> Result<String> {
    let cfg = cli.global.resolve()?;
    match cfg.workers {
        None => dispatch(&cfg, &cli.command),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?
            .install(|| dispatch(&cfg, &cli.command)),
    }
}
