//! `pbvgan` command line: PCAP ingestion, splitting, class balancing,
//! GAN / conditional GAN training, classification and reporting.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Run;
use crate::config::{Augmenter, PipelineConfig};
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "pbvgan", version, about = "Packet byte vector pipeline with GAN-based class balancing")]
struct Cli {
    /// Pipeline configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Global seed; overrides the config.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read the configured captures, filter them and write the PBV CSV.
    Ingest,
    /// Print the class histogram of a PBV CSV.
    Stats {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Stratified train / validation / test split.
    Split {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Balance the training split with the chosen augmenter.
    Augment {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum)]
        method: Option<Augmenter>,
        /// Conditional GAN checkpoint file, or the directory of per-class GAN checkpoints.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Train the generative model inline instead of loading a checkpoint.
        #[arg(long)]
        train: bool,
    },
    /// Train one GAN per class.
    TrainGan {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Restrict to these classes (repeatable).
        #[arg(long = "class")]
        classes: Vec<usize>,
    },
    /// Train the conditional GAN on all classes.
    TrainCgan {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Sample rows for one class from a GAN or conditional GAN checkpoint.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        class: usize,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train the packet classifier.
    Classify {
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        validation: Option<PathBuf>,
    },
    /// Evaluate a classifier checkpoint on the test split.
    Evaluate {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        /// Method name recorded in the report.
        #[arg(long)]
        method: Option<String>,
    },
    /// Compare the metrics reports of several run directories.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

fn execute(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let seed = cli.seed.unwrap_or(config.seed);
    config = config.with_seed(seed);
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    let run = Run {
        out: config.output_dir.clone(),
        config,
    };
    match cli.command {
        Command::Ingest => run.ingest(),
        Command::Stats { data } => run.stats(data),
        Command::Split { data } => run.split(data),
        Command::Augment {
            data,
            method,
            checkpoint,
            train,
        } => run.augment(data, method, checkpoint, train),
        Command::TrainGan { data, classes } => run.train_gan(data, classes),
        Command::TrainCgan { data } => run.train_cgan(data),
        Command::Generate {
            checkpoint,
            class,
            count,
            output,
        } => run.generate(checkpoint, class, count, output),
        Command::Classify { train, validation } => run.classify(train, validation),
        Command::Evaluate { model, test, method } => run.evaluate(model, test, method),
        Command::Report { runs } => commands::report(&runs, &run.out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError { kind, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(kind.exit_code() as u8)
        }
    }
}
