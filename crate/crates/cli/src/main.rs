//! Command-line driver: runs configured experiments and evaluates bound shapes.

mod artifacts;
mod bounds;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Experiments on Brownian motion with varying dimension.
#[derive(Debug, Parser)]
#[command(name = "bmvd", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Experiment configuration (TOML), or a `manifest.json` of an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the output directory of the configuration.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Prints the report as JSON.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Records sample paths.
    Simulate,
    /// Endpoint density on a grid.
    Density,
    /// First hitting times of the junction.
    Hitting,
    /// Green function of a killed process.
    Green,
    /// Fits a two-sided envelope and its negative control.
    EnvelopeVerify,
    /// Parabolic Harnack ratio across the junction.
    HarnackDemo,
    /// Dynkin residuals against the flux at the junction.
    GeneratorCheck,
    /// Prints the bound shapes at one time and pair of points.
    Bounds(bounds::BoundsArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Density => "density",
            Command::Hitting => "hitting",
            Command::Green => "green",
            Command::EnvelopeVerify => "envelope-verify",
            Command::HarnackDemo => "harnack-demo",
            Command::GeneratorCheck => "generator-check",
            Command::Bounds(_) => "bounds",
        }
    }
}

/// Failure of a command.
#[derive(Debug)]
enum Failure {
    /// Bad invocation, configuration or input; exit status 1.
    Usage(String),
    /// The experiment ran but its check failed; exit status 2.
    Verification,
}

impl From<bmvd_core::Error> for Failure {
    fn from(e: bmvd_core::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Bounds(args) => bounds::run(args, &cli.global),
        other => run::run(other.name(), &cli.global),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification) => ExitCode::from(2),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
