use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fhmimo_bench::config::{ExperimentSpec, Scenario};
use fhmimo_bench::experiment::run_experiment;
use fhmimo_bench::oracle::run_oracles;
use fhmimo_bench::BenchError;

#[derive(Parser)]
#[command(name = "fhmimo", version, about = "Finite-horizon beamforming experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write traces plus summary.csv.
    Run {
        config: PathBuf,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Comma-separated seeds overriding the config.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Scenario overriding the config.
        #[arg(long)]
        scenario: Option<Scenario>,
    },
    /// Parse and check a config without running it.
    Validate { config: PathBuf },
    /// Run the brute-force and dense linear-algebra self-checks.
    Oracle,
}

fn run(cli: Cli) -> Result<(), BenchError> {
    match cli.command {
        Command::Run {
            config,
            out,
            seeds,
            scenario,
        } => {
            let mut spec = ExperimentSpec::from_path(&config)?;
            if let Some(s) = seeds {
                spec.seeds = s;
            }
            if let Some(s) = scenario {
                spec.scenario = s;
            }
            spec.validate()?;
            let outcome = run_experiment(&spec, &out)?;
            println!(
                "{} runs, {} trace files, summary at {}",
                outcome.rows.len(),
                outcome.trace_files.len(),
                outcome.summary_file.display()
            );
            match outcome.failures() {
                0 => Ok(()),
                n => Err(BenchError::Solver(format!("{n} run(s) failed; see summary.csv"))),
            }
        }
        Command::Validate { config } => {
            let spec = ExperimentSpec::from_path(&config)?;
            println!(
                "ok: {} with {} solver(s), {} seed(s), M = {}",
                spec.scenario,
                spec.solvers.len(),
                spec.seeds.len(),
                spec.system.tx_antennas
            );
            Ok(())
        }
        Command::Oracle => {
            let checks = run_oracles();
            let mut failed = 0;
            for c in &checks {
                println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                failed += usize::from(!c.passed);
            }
            match failed {
                0 => Ok(()),
                n => Err(BenchError::Oracle(format!("{n} of {} checks failed", checks.len()))),
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
