use std::path::PathBuf;
use std::process::ExitCode;

use aoi_cli::{exit_status, load_config, run_experiment, CliError, Experiment, Overrides};
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Simulate,
    Analyze,
    SweepS,
    SweepN,
    ComparePolicies,
    VerifyCoupling,
}

impl From<Command> for Experiment {
    fn from(c: Command) -> Self {
        match c {
            Command::Simulate => Experiment::Simulate,
            Command::Analyze => Experiment::Analyze,
            Command::SweepS => Experiment::SweepS,
            Command::SweepN => Experiment::SweepN,
            Command::ComparePolicies => Experiment::ComparePolicies,
            Command::VerifyCoupling => Experiment::VerifyCoupling,
        }
    }
}

/// Age-of-information experiments for gateway-polled sensor networks.
#[derive(Debug, Parser)]
#[command(name = "aoi-gateway", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// Experiment config (`key = value` lines under [model], [policy], [run], [sweep]).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Omit the timestamp line from the metadata header.
    #[arg(long)]
    no_timestamp: bool,
}

fn execute(args: &Args) -> Result<u8, CliError> {
    let overrides = Overrides {
        seed: args.seed,
        replicates: args.replicates,
    };
    let cfg = load_config(args.config.as_deref(), &overrides)?;
    let report = run_experiment(args.command.into(), &cfg)?;
    let csv = report.to_csv(!args.no_timestamp);
    match &args.out {
        Some(path) => std::fs::write(path, csv).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?,
        None => print!("{csv}"),
    }
    for snippet in &report.violations {
        eprintln!("dominance violation; reproduce with:\n{snippet}");
    }
    Ok(exit_status(&report))
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(&args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
