use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mpf_cli::metrics::{metric_checks, render, Coords};
use mpf_cli::{compare, parse_scenario, run, CliError};

#[derive(Parser)]
#[command(name = "mpf", version, about = "Mixture projection filter experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Gaussian,
}

#[derive(Subcommand)]
enum Command {
    /// Run the engines of a scenario file and write CSV output.
    Run {
        config: PathBuf,
        #[arg(short, long, env = "MPF_OUTPUT_DIR", default_value = "mpf-output")]
        output: PathBuf,
    },
    /// Print per-time discrepancies between the engines of a run directory.
    Compare { dir: PathBuf },
    /// Print closed-form Gaussian metrics with their quadrature checks.
    Metrics {
        #[arg(long, value_enum, default_value = "gaussian")]
        family: Family,
        #[arg(long, value_enum, default_value = "canonical")]
        coords: Coords,
        /// Point in the chosen chart; defaults to the standard normal.
        #[arg(long, num_args = 2, allow_negative_numbers = true)]
        point: Option<Vec<f64>>,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, output } => {
            let sc = parse_scenario(&config)?;
            let report = run::run(&sc, &output)?;
            match report.failures() {
                0 => Ok(()),
                failed => Err(CliError::EngineFailures { failed }),
            }
        }
        Command::Compare { dir } => {
            let rows = compare::compare_dir(&dir)?;
            compare::write_table(&rows, std::io::stdout().lock())
        }
        Command::Metrics { family: Family::Gaussian, coords, point } => {
            let p = match (point, coords) {
                (Some(p), _) => [p[0], p[1]],
                (None, Coords::Canonical) => [0.0, -0.5],
                (None, Coords::Expectation) => [0.0, 1.0],
            };
            print!("{}", render(&metric_checks(coords, p)?));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
