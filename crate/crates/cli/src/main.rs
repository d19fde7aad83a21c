mod analyze;
mod common;
mod generate;
mod reduce;
mod simulate;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Stability-preserving model order reduction.
#[derive(Parser, Debug)]
#[command(name = "stabmor", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a benchmark system bundle.
    Generate(generate::GenerateArgs),
    /// Sweep reduced orders, conventional and stabilized.
    Reduce(reduce::ReduceArgs),
    /// Integrate a system bundle in time.
    Simulate(simulate::SimulateArgs),
    /// Stability report, Bode data and optional H2 distance to a ROM.
    Analyze(analyze::AnalyzeArgs),
}

/// Usage errors exit with 2, numerical failures with 3.
pub(crate) const EXIT_USAGE: u8 = 2;
pub(crate) const EXIT_NUMERICAL: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.downcast_ref::<common::NumericalFailure>().is_some()) {
        return EXIT_NUMERICAL;
    }
    let numerical = err.chain().filter_map(|e| e.downcast_ref::<stabmor::Error>()).any(|e| e.is_numerical());
    if numerical {
        EXIT_NUMERICAL
    } else {
        EXIT_USAGE
    }
}

fn configure_threads() {
    if let Ok(v) = std::env::var("STABMOR_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not configure {n} worker threads: {e}");
                }
            }
            _ => log::warn!("ignoring STABMOR_THREADS={v:?}; expected a positive integer"),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    configure_threads();
    let result = match cli.command {
        Command::Generate(a) => generate::run(a),
        Command::Reduce(a) => reduce::run(a),
        Command::Simulate(a) => simulate::run(a),
        Command::Analyze(a) => analyze::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
