//! Command-line experiments: corpus generation, component training,
//! diversity-driven training, tuning, combination and evaluation.
//!
//! Every command reads one [`config::ExperimentConfig`], writes plain-text
//! artifacts under `paths.workdir` and appends a `key=value` [`report::Report`]
//! block to `paths.report`.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
pub use report::Report;

#[derive(Debug, Parser)]
#[command(name = "divcomb", version, about = "Diversity-driven system combination experiments")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the top-level `seed` key.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic train/dev/test corpora with gold edits.
    Gen,
    /// Train the policy components by maximum likelihood.
    Train,
    /// Diversity-driven training of the backbone component.
    Ddt {
        /// Run every reward kind and report them side by side.
        #[arg(long)]
        ablation: bool,
    },
    /// Round-robin DDT with a tuned combination after each stage.
    Stages,
    /// Tune combination weights on a dev set.
    Tune {
        #[arg(long, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Combine line-aligned hypothesis files.
    Combine {
        #[arg(long, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score a hypothesis file, optionally against a baseline.
    Eval {
        #[arg(long)]
        hyp: Option<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Pairwise 1 - BLEU between hypothesis files.
    Diversity {
        #[arg(long, num_args = 1..)]
        inputs: Vec<PathBuf>,
    },
}

/// Runs one command and appends its report.
pub fn run(cli: &Cli) -> CliResult<Report> {
    let cfg = ExperimentConfig::load(cli.config.as_deref(), cli.seed)?;
    let report = match &cli.command {
        Command::Gen => commands::gen(&cfg)?,
        Command::Train => commands::train(&cfg)?,
        Command::Ddt { ablation } => commands::ddt(&cfg, *ablation)?,
        Command::Stages => commands::stages(&cfg)?,
        Command::Tune { inputs, gold, output } => commands::tune(&cfg, inputs, gold.as_deref(), output.as_deref())?,
        Command::Combine {
            inputs,
            weights,
            output,
        } => commands::combine(&cfg, inputs, weights.as_deref(), output.as_deref())?,
        Command::Eval { hyp, gold, baseline } => {
            commands::eval(&cfg, hyp.as_deref(), gold.as_deref(), baseline.as_deref())?
        }
        Command::Diversity { inputs } => commands::diversity(&cfg, inputs)?,
    };
    report.emit(&cfg.paths.report)?;
    Ok(report)
}
