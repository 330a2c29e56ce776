use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use bayesdiag::pipeline::{ExperimentConfig, Pipeline};
use bayesdiag::Error;
use clap::{Args, Parser, Subcommand};

/// Bayesian CNN fault diagnosis with uncertainty-gated OOD detection.
#[derive(Parser)]
#[command(name = "bayesdiag", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for every artifact.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configured seed and BAYESDIAG_SEED.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic signal fleet.
    Synth(Common),
    /// Segment signals, split, and build spectrogram datasets.
    Preprocess(Common),
    /// Train the network and save a checkpoint.
    Train(Common),
    /// Select uncertainty thresholds on the validation set.
    Calibrate(Common),
    /// Build uniform-noise and sensor-fault OOD sets.
    Inject(Common),
    /// Score in-distribution and OOD sets.
    Evaluate(Common),
    /// Write the manifest and print the text report.
    Report(Common),
    /// Run every stage in order.
    Run(Common),
    /// Print the effective configuration as JSON.
    Config(Common),
}

fn load_config(c: &Common) -> Result<ExperimentConfig, Error> {
    let base = match &c.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Validation {
                field: "config".into(),
                reason: format!("cannot read {}: {e}", p.display()),
            })?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig::default(),
    };
    base.with_seed_override(c.seed)
}

fn run(cli: Cli) -> Result<(), Error> {
    let (common, cmd) = match &cli.command {
        Command::Synth(c) => (c, "synth"),
        Command::Preprocess(c) => (c, "preprocess"),
        Command::Train(c) => (c, "train"),
        Command::Calibrate(c) => (c, "calibrate"),
        Command::Inject(c) => (c, "inject"),
        Command::Evaluate(c) => (c, "evaluate"),
        Command::Report(c) => (c, "report"),
        Command::Run(c) => (c, "run"),
        Command::Config(c) => (c, "config"),
    };
    let config = load_config(common)?;
    let mut p = Pipeline::new(config, &common.out)?.with_logger(|m| eprintln!("{m}"));
    match cmd {
        "synth" => {
            p.synth()?;
        }
        "preprocess" => {
            p.preprocess()?;
        }
        "train" => {
            p.train()?;
        }
        "calibrate" => {
            p.calibrate()?;
        }
        "inject" => {
            p.inject()?;
        }
        "evaluate" => {
            p.evaluate()?;
        }
        "report" => print!("{}", p.report()?),
        "run" => {
            p.run()?;
            print!("{}", fs::read_to_string(p.layout().report()).unwrap_or_default());
        }
        _ => println!("{}", p.config().to_json_pretty()),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
