//! `socialrec`: run the recommendation pipeline one stage at a time.
//!
//! Every stage reads one TOML config (`--config`, defaults otherwise), stamps
//! its outputs with the config hash and exits with 0 on success, 2 on an
//! invalid config and 1 when the stage itself fails.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use log::info;
use socialrec::config::RunConfig;
use socialrec::stages;

#[derive(Parser, Debug)]
#[command(name = "socialrec", version, about = "Follow recommendation pipeline")]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Dataset directory, overriding the config.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset and test period into the data directory.
    Gen,
    /// Session-filter and supplement the training log.
    Preprocess,
    /// Train a model on the preprocessed log.
    Train,
    /// Score a test log with a trained model.
    Predict {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
    },
    /// Two-stage training with the behavior blend; writes the final rankings.
    Ensemble {
        #[arg(long)]
        test: Option<PathBuf>,
    },
    /// MAP@N of a scores file against the labeled test log.
    Eval {
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Accept inputs stamped with a different config hash.
        #[arg(long)]
        force: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Gen => "gen",
            Command::Preprocess => "preprocess",
            Command::Train => "train",
            Command::Predict { .. } => "predict",
            Command::Ensemble { .. } => "ensemble",
            Command::Eval { .. } => "eval",
        }
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        config.out_dir = dir.clone();
    }
    if let Some(dir) = &cli.data_dir {
        config.data_dir = dir.clone();
    }
    config.resolve();
    config.validate()?;
    Ok(config)
}

fn run(command: &Command, config: &RunConfig) -> anyhow::Result<()> {
    info!("config hash {}", config.hash());
    match command {
        Command::Gen => {
            let s = stages::run_gen(config)?;
            info!(
                "wrote {} training records ({} positive) and {} test records to {}",
                s.records,
                s.positives,
                s.test_records,
                config.data_dir.display()
            );
        }
        Command::Preprocess => {
            let f = stages::run_preprocess(config)?;
            info!(
                "kept {} of {} records ({} positive, {} supplemented)",
                f.len(),
                f.stats.input_records,
                f.stats.kept_positive,
                f.stats.supplemented
            );
        }
        Command::Train => {
            let s = stages::run_train(config)?;
            info!("trained on {} records, final mean loss {:.6}", s.records, s.final_loss);
        }
        Command::Predict { model, test } => {
            let n = stages::run_predict(config, model.as_deref(), test.as_deref())?;
            info!("scored {n} user-item pairs");
        }
        Command::Ensemble { test } => {
            let n = stages::run_ensemble(config, test.as_deref())?;
            info!("ranked items for {n} users");
        }
        Command::Eval {
            predictions,
            truth,
            force,
        } => {
            let report = stages::run_eval(config, predictions.as_deref(), truth.as_deref(), *force)?;
            println!("MAP@{} {:.6} over {} users", report.n, report.map, report.users());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let config = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    match run(&cli.command, &config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: stage {} failed: {e:#}", cli.command.name());
            ExitCode::from(1)
        }
    }
}
