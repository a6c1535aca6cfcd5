use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use salbench::pipeline::{run_pipeline, Outcome, RunConfig, Stage};

#[derive(Parser)]
#[command(name = "salbench", version, about = "Saliency benchmark pipeline for agreement probes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate agreement datasets, perturbation pairs, LM corpus and probe sets.
    GenerateData(Args),
    /// Train the language models.
    Train(Args),
    /// Fine-tune the agreement probes.
    Probe(Args),
    /// Distill the student model and fine-tune its probes.
    Distill(Args),
    /// Run the plausibility and consistency tests and write the report.
    Evaluate(Args),
    /// Render saliency examples to HTML.
    Render(Args),
    /// Every stage in order.
    All(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Run configuration (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Rerun even if artifacts are up to date.
    #[arg(long)]
    force: bool,
    /// Override `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Override `run.threads`.
    #[arg(long)]
    threads: Option<usize>,
}

impl Command {
    fn split(self) -> (Stage, Args) {
        match self {
            Command::GenerateData(a) => (Stage::GenerateData, a),
            Command::Train(a) => (Stage::Train, a),
            Command::Probe(a) => (Stage::Probe, a),
            Command::Distill(a) => (Stage::Distill, a),
            Command::Evaluate(a) => (Stage::Evaluate, a),
            Command::Render(a) => (Stage::Render, a),
            Command::All(a) => (Stage::All, a),
        }
    }
}

fn run(stage: Stage, args: Args) -> salbench::Result<()> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.run.seed = seed;
    }
    if let Some(threads) = args.threads {
        config.run.threads = threads;
    }
    for (st, outcome) in run_pipeline(config, stage, args.force)? {
        let what = match outcome {
            Outcome::Ran => "done",
            Outcome::UpToDate => "up to date",
            Outcome::Disabled => "disabled",
        };
        println!("{st}: {what}");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let (stage, args) = Cli::parse().command.split();
    let config = args.config.display().to_string();
    match run(stage, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {config}: {e}");
            ExitCode::FAILURE
        }
    }
}
