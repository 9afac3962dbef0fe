//! Command-line pipelines: inject anomalies, train, score, evaluate, analyse
//! spectra and sweep the structure weight.
//!
//! Every command reads a [`config::RunConfig`] (TOML file plus flag
//! overrides) and writes plain-text artifacts into the output directory.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use anomman_core::{Error, Result};
use clap::{Parser, Subcommand};

use config::Overrides;

pub const DATASET_DIR: &str = "dataset";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.txt";
pub const ANOMALIES_FILE: &str = "anomalies.tsv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const REPORT_FILE: &str = "train_report.tsv";
pub const SCORES_FILE: &str = "scores.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const ROC_FILE: &str = "roc.tsv";
pub const SWEEP_FILE: &str = "sweep.tsv";
pub const SWEEP_JSON_FILE: &str = "sweep.json";

/// Environment variable holding the log filter, e.g. `info` or `debug`.
pub const LOG_ENV: &str = "ANOMMAN_LOG";

#[derive(Debug, Parser)]
#[command(
    name = "anomman",
    version,
    about = "Anomaly detection on multi-view attributed networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plant clique and attribute anomalies; writes dataset/ and the ground truth.
    Inject(Overrides),
    /// Train a model; writes checkpoint.json and train_report.tsv.
    Train(Overrides),
    /// Score every node with a checkpoint; writes scores.csv.
    Score {
        #[command(flatten)]
        overrides: Overrides,
        /// Defaults to checkpoint.json in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Accuracy@K and ROC/AUC of a scores file; writes metrics.json and roc.tsv.
    Eval {
        #[command(flatten)]
        overrides: Overrides,
        /// Defaults to scores.csv in the output directory.
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Graph frequencies and filter response of views; writes spectrum_<view>.tsv.
    Spectral {
        #[command(flatten)]
        overrides: Overrides,
        /// View to analyse; repeatable. Defaults to every view.
        #[arg(long)]
        view: Vec<String>,
        /// Extreme frequencies per end for graphs too large to decompose fully.
        #[arg(long)]
        top: Option<usize>,
        /// Attribute column to transform as a graph signal.
        #[arg(long)]
        signal_column: Option<usize>,
    },
    /// Train and evaluate once per structure weight; writes sweep.tsv and sweep.json.
    SweepEpsilon(Overrides),
    /// Write the clean synthetic benchmark network.
    Synth {
        #[arg(long)]
        output_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Process exit code for an error: 1 for invalid input, 2 for numeric
/// failure, 3 for I/O.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_numeric() {
        2
    } else if err.is_io() {
        3
    } else {
        1
    }
}

fn metrics_line(m: &commands::Metrics) -> String {
    let mut line = format!("auc\t{}", m.auc);
    for a in &m.accuracy_at_k {
        line.push_str(&format!("\taccuracy@{}\t{}", a.k, a.accuracy));
    }
    line
}

/// Runs one command, printing a short summary to stdout.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Inject(o) => {
            let (manifest, truth) = commands::inject(&o.resolve()?)?;
            println!("anomalies\t{}", truth.count());
            println!("manifest\t{}", manifest.display());
        }
        Command::Train(o) => {
            let cfg = o.resolve()?;
            commands::train(&cfg)?;
            println!("checkpoint\t{}", cfg.output_dir()?.join(CHECKPOINT_FILE).display());
        }
        Command::Score { overrides, checkpoint } => {
            let cfg = overrides.resolve()?;
            let scores = commands::score(&cfg, checkpoint.as_deref())?;
            println!("scored\t{}", scores.len());
        }
        Command::Eval { overrides, scores } => {
            let m = commands::eval(&overrides.resolve()?, scores.as_deref())?;
            println!("{}", metrics_line(&m));
        }
        Command::Spectral {
            overrides,
            view,
            top,
            signal_column,
        } => {
            let cfg = overrides.resolve()?;
            for (name, report) in commands::spectral(&cfg, &view, top, signal_column)? {
                println!("max_frequency\t{name}\t{}", report.max_frequency);
            }
        }
        Command::SweepEpsilon(o) => {
            for r in commands::sweep_epsilon(&o.resolve()?)? {
                println!("epsilon\t{}\t{}", r.epsilon, metrics_line(&r.metrics));
            }
        }
        Command::Synth { output_dir, seed } => {
            println!("manifest\t{}", commands::synth(&output_dir, seed)?.display());
        }
    }
    Ok(())
}
