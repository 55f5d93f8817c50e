//! Command-line interface of the experiment runner.
//!
//! `tridg run --config <path>` executes the experiment matrix described by a
//! TOML configuration and writes one CSV result table per (problem, degree)
//! pair.  Exit codes: 0 on success, 2 for configuration errors, 3 when
//! `--check` finds an acceptance violation, 4 when a run is unstable that
//! the theory says should not be.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tridg::config::parse_config;
use tridg::runner::{run_experiments, RunOptions, RunnerError};

#[derive(Parser)]
#[command(name = "tridg", version, about = "DG/FR experiments on triangles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment matrix of a configuration file.
    Run {
        /// TOML configuration describing the experiment matrix.
        #[arg(long)]
        config: PathBuf,
        /// Directory receiving the CSV result tables (default `results/`).
        #[arg(long, default_value = "results")]
        output_dir: PathBuf,
        /// Check the results against the acceptance thresholds.
        #[arg(long)]
        check: bool,
        /// Run the full-scale Euler matrix (m = 16, p ∈ {2, 3, 4}) instead
        /// of the configured scale.
        #[arg(long)]
        full: bool,
        /// Write the reference-element operators of every combination to
        /// this directory before solving.
        #[arg(long, value_name = "DIR")]
        dump_operators: Option<PathBuf>,
        /// Write the mesh (nodes, connectivity) to this directory before
        /// solving.
        #[arg(long, value_name = "DIR")]
        dump_mesh: Option<PathBuf>,
        /// Print one progress line per run.
        #[arg(long, short)]
        verbose: bool,
    },
}

fn run(command: Command) -> i32 {
    match command {
        Command::Run {
            config,
            output_dir,
            check,
            full,
            dump_operators,
            dump_mesh,
            verbose,
        } => {
            let parsed = match parse_config(&config) {
                Ok(parsed) => parsed,
                Err(err) => {
                    eprintln!("configuration error: {err}");
                    return 2;
                }
            };
            let options = RunOptions {
                output_dir,
                check,
                full,
                dump_operators,
                dump_mesh,
                verbose,
            };
            let report = match run_experiments(&parsed, &options) {
                Ok(report) => report,
                Err(RunnerError::Config(err)) => {
                    eprintln!("configuration error: {err}");
                    return 2;
                }
                Err(err) => {
                    eprintln!("error: {err}");
                    return 1;
                }
            };
            for path in &report.table_paths {
                println!("wrote {}", path.display());
            }
            for note in &report.unexpected {
                eprintln!("unexpected instability: {note}");
            }
            if check {
                if report.check_failures.is_empty() {
                    println!("check: all thresholds satisfied");
                } else {
                    for failure in &report.check_failures {
                        eprintln!("check failure: {failure}");
                    }
                }
            }
            report.exit_code()
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    ExitCode::from(u8::try_from(run(cli.command)).unwrap_or(1))
}
