use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mpflow::scenario::{self, RunOptions};
use mpflow::{emit_csv, Result};

#[derive(Parser)]
#[command(name = "mpflow", version, about = "Multipath TCP sub-flow priority simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its throughput timeline as CSV.
    Run {
        /// Built-in scenario name or path to a scenario file.
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 1000)]
        bucket_ms: u64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the scenario's duration.
        #[arg(long)]
        duration_ms: Option<u64>,
        /// Accepted for forward compatibility; runs are deterministic.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// List the built-in scenarios.
    ListScenarios,
    /// Parse and validate a scenario file.
    Validate { path: PathBuf },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { scenario, bucket_ms, out, duration_ms, seed } => {
            let mut scenario = scenario::load_scenario(&scenario)?;
            if let Some(duration_ms) = duration_ms {
                scenario.duration_ms = duration_ms;
                scenario.actions.retain(|a| a.at_ms <= duration_ms);
            }
            let options = RunOptions {
                bucket_ms,
                seed,
                force_ppos: scenario::primary_path_only_from_env(),
            };
            let report = scenario::run_scenario(&scenario, &options)?;
            match out {
                Some(path) => {
                    let mut w = BufWriter::new(File::create(&path)?);
                    emit_csv(&report, &mut w)?;
                    w.flush()?;
                }
                None => {
                    let mut w = BufWriter::new(io::stdout().lock());
                    emit_csv(&report, &mut w)?;
                    w.flush()?;
                }
            }
        }
        Command::ListScenarios => {
            for name in scenario::builtin_names() {
                println!("{name}");
            }
        }
        Command::Validate { path } => {
            let text = std::fs::read_to_string(&path)?;
            let s = scenario::parse_scenario(&text)?;
            println!("{}: ok ({} actions, {} ms)", s.name, s.actions.len(), s.duration_ms);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
