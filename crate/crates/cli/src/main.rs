//! `jumperg <experiment> --config <path> [--seed N] [--out DIR] [--threads N]`

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use jumperg::experiment::{parse_config, run_experiment, write_failure, ExperimentKind};
use jumperg::Error;

#[derive(Parser)]
#[command(name = "jumperg", version, about = "Seeded experiments for jump SDEs with monotone coefficients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an ensemble of paths.
    Simulate(RunArgs),
    /// Simulate reflection-coupled pairs and estimate P(tau > t).
    Couple(RunArgs),
    /// Importance-sampled hitting probability of a ball.
    Irreducibility(RunArgs),
    /// Invariant measure and total-variation decay rate.
    Ergodicity(RunArgs),
    /// Audit the model hypotheses on a point cloud.
    Check(RunArgs),
    /// Seeded commuting-pair matrix inequality suite.
    Lemma21(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config `out`, defaults to `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; overrides the config `threads`.
    #[arg(long)]
    threads: Option<usize>,
}

impl Command {
    fn split(self) -> (ExperimentKind, RunArgs) {
        match self {
            Command::Simulate(a) => (ExperimentKind::Simulate, a),
            Command::Couple(a) => (ExperimentKind::Couple, a),
            Command::Irreducibility(a) => (ExperimentKind::Irreducibility, a),
            Command::Ergodicity(a) => (ExperimentKind::Ergodicity, a),
            Command::Check(a) => (ExperimentKind::Check, a),
            Command::Lemma21(a) => (ExperimentKind::Lemma21, a),
        }
    }
}

fn run(kind: ExperimentKind, args: RunArgs) -> Result<PathBuf, (Option<PathBuf>, Error)> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| (args.out.clone(), e.into()))?;
    let mut config = parse_config(&text).map_err(|e| (args.out.clone(), e))?;
    let out = args.out.clone().or_else(|| config.out.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));
    if config.kind != kind {
        let msg = format!("config describes a `{}` experiment, not `{}`", config.kind.name(), kind.name());
        return Err((Some(out), Error::Usage(msg)));
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if args.threads == Some(0) {
        return Err((Some(out), Error::Usage("--threads must be at least 1".into())));
    }
    run_experiment(&config, &out, args.threads).map_err(|e| (None, e))?;
    Ok(out)
}

fn main() -> ExitCode {
    let (kind, args) = Cli::parse().command.split();
    match run(kind, args) {
        Ok(out) => {
            println!("{}", out.join("report.json").display());
            ExitCode::SUCCESS
        }
        Err((dir, err)) => {
            eprintln!("error: {err}");
            if let Some(dir) = dir {
                if let Err(e) = write_failure(&dir, None, &err) {
                    eprintln!("error: cannot write failure record: {e}");
                }
            }
            ExitCode::from(if matches!(err, Error::Config(_) | Error::Usage(_)) { 2 } else { 1 })
        }
    }
}
