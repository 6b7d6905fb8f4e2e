use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use netjmm::cli::{run, Command, RunManifest, RunOptions};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Sub {
    Fit,
    Standardize,
    Simulate,
    Netstats,
}

impl Sub {
    fn command(self) -> Command {
        match self {
            Sub::Fit => Command::Fit,
            Sub::Standardize => Command::Standardize,
            Sub::Simulate => Command::Simulate,
            Sub::Netstats => Command::Netstats,
        }
    }
}

#[derive(Parser)]
struct Common {
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory; overrides the manifest.
    #[arg(long, env = "NETJMM_OUT")]
    out: Option<PathBuf>,
    /// Master seed; overrides the manifest.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, env = "NETJMM_WORKERS")]
    workers: Option<usize>,
    /// Drop nodes without ties before fitting.
    #[arg(long)]
    exclude_isolates: bool,
}

#[derive(Parser)]
#[command(name = "netjmm", version, about = "Bayesian causal inference on clustered networks with interference")]
struct Cli {
    #[command(subcommand)]
    command: SubWithArgs,
}

#[derive(Subcommand)]
enum SubWithArgs {
    /// Sample the posterior of a model fitted to network data.
    Fit(Common),
    /// Turn posterior draws into average potential outcomes and contrasts.
    Standardize(Common),
    /// Run a simulation campaign and report estimator performance.
    Simulate(Common),
    /// Descriptive network statistics.
    Netstats(Common),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (sub, common) = match cli.command {
        SubWithArgs::Fit(c) => (Sub::Fit, c),
        SubWithArgs::Standardize(c) => (Sub::Standardize, c),
        SubWithArgs::Simulate(c) => (Sub::Simulate, c),
        SubWithArgs::Netstats(c) => (Sub::Netstats, c),
    };
    // The subcommand must agree with the manifest.
    match std::fs::read_to_string(&common.manifest).map_err(|e| e.to_string()).and_then(|t| RunManifest::parse(&t).map_err(|e| e.to_string())) {
        Ok(m) if m.command != sub.command() => {
            eprintln!(
                "error: manifest command is {:?} but the subcommand is {:?}",
                m.command.label(),
                sub.command().label()
            );
            return ExitCode::from(4);
        }
        _ => {}
    }
    let opts = RunOptions {
        manifest: common.manifest,
        out: common.out,
        seed: common.seed,
        workers: common.workers,
        exclude_isolates: common.exclude_isolates,
    };
    match run(&opts) {
        Ok(out) => {
            log::info!("wrote {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
