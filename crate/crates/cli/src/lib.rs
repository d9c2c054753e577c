//! Config-driven experiment runner: data generation, training, verification
//! of the degenerate optima, clustering and figures.

pub mod commands;
pub mod config;
pub mod error;
pub mod svg;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use config::{ExperimentConfig, SchemeName};
use error::{CliError, EXIT_OK};

#[derive(Debug, Parser)]
#[command(name = "subcol", version, about = "Self-expressive subspace clustering experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON experiment config; every key is optional.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for data, training, verification and clustering.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub norm_scheme: Option<SchemeName>,
    #[arg(long, global = true, value_enum)]
    pub post_process: Option<Switch>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Gradient step size for pretraining and joint training.
    #[arg(long, global = true)]
    pub lr: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset and its labels.
    Generate,
    /// Pretrain, initialize C and train jointly; writes parameters, C, Z and traces.
    Train,
    /// Check the closed-form degenerate optima against exhaustive and random search.
    Verify,
    /// Spectral clustering of a trained C, with and without post-processing.
    Cluster,
    /// SVG figures and a metrics summary from a training run.
    Report,
}

impl Cli {
    /// Config file plus command-line overrides, validated.
    pub fn resolve_config(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.set_seed(s);
        }
        if let Some(s) = self.norm_scheme {
            cfg.normalization.scheme = s;
        }
        if let Some(p) = self.post_process {
            cfg.postprocess.enabled = p == Switch::On;
        }
        if let Some(d) = &self.out_dir {
            cfg.output.dir = d.clone();
        }
        if let Some(lr) = self.lr {
            cfg.training.lr = lr;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run_command(command: Command, cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Generate => commands::generate(cfg, out),
        Command::Train => commands::train(cfg, out),
        Command::Verify => commands::verify(cfg, out),
        Command::Cluster => commands::cluster(cfg, out),
        Command::Report => commands::report(cfg, out),
    }
}

/// Runs the parsed command line and returns the process exit code.
pub fn run(cli: &Cli, out: &mut dyn Write) -> i32 {
    let result = cli.resolve_config().and_then(|cfg| run_command(cli.command, &cfg, out));
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
