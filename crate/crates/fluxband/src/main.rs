use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use fluxband::evolve::Method;
use fluxband::experiments::{exit_code, run, Resolved, Scenario};
use fluxband::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Integrator {
    Piecewise,
    Rk,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Command {
    StarkError,
    RabiSweep,
    GeometricShift,
    Spectrum,
    SidebandPi,
    Cnot,
    FidelityVsKappa,
    DispersiveReport,
    /// Check a config and list physics-validity warnings without running.
    Validate,
}

impl Command {
    fn scenario(self) -> Option<Scenario> {
        Some(match self {
            Command::StarkError => Scenario::StarkError,
            Command::RabiSweep => Scenario::RabiSweep,
            Command::GeometricShift => Scenario::GeometricShift,
            Command::Spectrum => Scenario::Spectrum,
            Command::SidebandPi => Scenario::SidebandPi,
            Command::Cnot => Scenario::Cnot,
            Command::FidelityVsKappa => Scenario::FidelityVsKappa,
            Command::DispersiveReport => Scenario::DispersiveReport,
            Command::Validate => return None,
        })
    }
}

/// Pulse-level simulator for flux-modulated transmons sharing a resonator.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    command: Command,
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output`, else `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 1 gives bitwise-reproducible output.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum)]
    integrator: Option<Integrator>,
    /// Scenario to validate against when the config does not name one.
    #[arg(long, value_enum)]
    scenario: Option<Scenario>,
}

fn resolve(cli: &Cli) -> Result<Resolved, Error> {
    let text = std::fs::read_to_string(&cli.config).map_err(|e| Error::config("config", format!("{}: {e}", cli.config.display())))?;
    let scenario = cli.command.scenario().or(cli.scenario);
    let resolved = Resolved::parse(&text, scenario)?;
    match cli.integrator {
        Some(Integrator::Piecewise) => resolved.with_method(Method::PiecewiseExponential),
        Some(Integrator::Rk) => resolved.with_method(Method::AdaptiveRk),
        None => Ok(resolved),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let resolved = match resolve(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e, false) as u8);
        }
    };
    if cli.command == Command::Validate {
        return match resolved.validate() {
            Ok(warnings) => {
                let report = serde_json::json!({
                    "scenario": resolved.scenario,
                    "config_digest": resolved.digest,
                    "warnings": warnings,
                });
                println!("{}", serde_json::to_string_pretty(&report).expect("plain JSON"));
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        };
    }
    let threads = cli
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let out = cli.out.clone().or_else(|| resolved.config.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
    match run(&resolved, threads, Some(&out)) {
        Ok(outcome) => {
            for w in &outcome.record.validation_warnings {
                eprintln!("warning: {w}");
            }
            if let Some(p) = &outcome.csv_path {
                eprintln!("wrote {}", p.display());
            }
            if let Some(p) = &outcome.json_path {
                eprintln!("wrote {}", p.display());
            }
            if outcome.record.failures > 0 {
                eprintln!("{} of {} points failed", outcome.record.failures, outcome.record.points.len());
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e, false) as u8)
        }
    }
}
