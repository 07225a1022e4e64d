use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sphereflow_cli::{check, configure_threads, reproduce, simulate, CliError, Report};

#[derive(Parser)]
#[command(name = "sphereflow", version, about = "Attention dynamics on the sphere: simulate, reproduce, verify")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a TOML scenario and write trajectory, verdict and summary files.
    Simulate {
        config: PathBuf,
        /// Output directory (overrides `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a built-in reproduction and compare against its thresholds.
    Reproduce {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(reproduce::SCENARIOS))]
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a seeded verification suite and print its JSON report.
    Check {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(check::SUITES))]
        suite: String,
        #[arg(long, default_value_t = check::DEFAULT_SEED)]
        seed: u64,
    },
}

fn finish(report: Report) -> Result<(), CliError> {
    println!("{}", report.to_json());
    if report.passed {
        Ok(())
    } else {
        Err(CliError::Acceptance(format!("{}: {}", report.name, report.failure_summary())))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Simulate { config, out } => {
            let summary = simulate::cmd_simulate(&config, out)?;
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            Ok(())
        }
        Command::Reproduce { name, out } => finish(reproduce::cmd_reproduce(&name, out)?),
        Command::Check { suite, seed } => finish(check::run(&suite, seed)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sphereflow: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
