use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nkconsensus_cli::pipeline::{self, WalkOverrides};
use nkconsensus_cli::{ExperimentConfig, Result, RunContext};

#[derive(Parser)]
#[command(name = "nkconsensus", version, about = "Deep (n, k) consensus experiments")]
struct Cli {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Root directory for run outputs.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the ensemble and write models plus test metrics.
    Train,
    /// Coverage/accuracy curves per k and OOD rejection.
    Consensus,
    /// FGSM batch from the source model and its transfer report.
    Attack,
    /// Diff-vector clusters, cross-model groups and feature rankings.
    Interpret,
    /// Model outputs along straight paths between training samples.
    Walk {
        #[arg(long)]
        model: Option<usize>,
        #[arg(long)]
        from: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        to: Vec<usize>,
    },
    /// Run every stage and summarize.
    Report,
}

fn run(cli: Cli) -> Result<PathBuf> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.output_dir = o;
    }
    cfg.validate()?;
    let ctx = RunContext::new(cfg);
    let dir = match cli.command {
        Command::Train => pipeline::cmd_train(&ctx)?.dir,
        Command::Consensus => pipeline::cmd_consensus(&ctx)?.dir,
        Command::Attack => pipeline::cmd_attack(&ctx)?.dir,
        Command::Interpret => pipeline::cmd_interpret(&ctx)?.dir,
        Command::Walk { model, from, to } => {
            let o = WalkOverrides {
                model,
                origin: from,
                targets: to,
            };
            pipeline::cmd_walk(&ctx, &o)?.dir
        }
        Command::Report => pipeline::cmd_report(&ctx)?.dir,
    };
    Ok(dir)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
