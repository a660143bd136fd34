//! `pcbdefect`: condition extraction, toy diffusion sampling, block
//! invariant checks, evaluation and dataset bookkeeping from one binary.
//! Reports go to stdout as a single JSON object; diagnostics go to stderr.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pcbdefect::config::Settings;

use commands::{blocks, conditions, dataset, diffuse, eval};

#[derive(Debug, Parser)]
#[command(name = "pcbdefect", version, about = "PCB defect synthesis and detection toolkit")]
struct Cli {
    /// Flat `key = value` settings file. Falls back to $PCBDEFECT_CONFIG, then
    /// to built-in defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract edge, depth and prompt conditions for one image.
    Conditions(conditions::ConditionsArgs),
    /// Build the structured prompt for a set of labelled defects.
    Prompt(conditions::PromptArgs),
    /// Sample a latent with the toy conditioned denoiser.
    Diffuse(diffuse::DiffuseArgs),
    /// Run the detector block invariant sweep.
    BlocksCheck(blocks::BlocksCheckArgs),
    /// Score detections against ground truth.
    EvalDet(eval::EvalDetArgs),
    /// Score generated images against real ones.
    EvalGen(eval::EvalGenArgs),
    /// Per-class image and defect counts of a manifest.
    Stats(dataset::StatsArgs),
    /// Expand a manifest with flipped, rotated and blurred copies.
    Augment(dataset::AugmentArgs),
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let settings = Settings::resolve(cli.config.as_deref())?;
    match cli.command {
        Command::Conditions(a) => conditions::run_conditions(&a, &settings),
        Command::Prompt(a) => conditions::run_prompt(&a, &settings),
        Command::Diffuse(a) => diffuse::run(&a, &settings),
        Command::BlocksCheck(a) => blocks::run(&a, &settings),
        Command::EvalDet(a) => eval::run_det(&a, &settings),
        Command::EvalGen(a) => eval::run_gen(&a, &settings),
        Command::Stats(a) => dataset::run_stats(&a),
        Command::Augment(a) => dataset::run_augment(&a, &settings),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
