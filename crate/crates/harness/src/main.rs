use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sharepass_harness::plan::Scenario;
use sharepass_harness::scenario::run_scenario;
use sharepass_harness::sweep::{boundary, fault_tolerance_sweep};
use sharepass_harness::timing::{self, timing_profile, DEFAULT_LEVELS};

#[derive(Parser)]
#[command(name = "harness", about = "Run sharepass scenarios on the in-process network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario document and print the result as JSON.
    Run { scenario: PathBuf },
    /// Log in with k = 0..=n shareholders down and print a CSV table.
    Sweep {
        #[arg(long)]
        t: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 166)]
        p_bits: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Measure sign-up and login latency and print a CSV table.
    Timing {
        #[arg(long, value_delimiter = ',', default_value = "166")]
        p_bits: Vec<u64>,
        #[arg(long, default_value_t = 3)]
        t: usize,
        #[arg(long, default_value_t = 5)]
        n: usize,
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<usize>>,
    },
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run { scenario } => {
            let text = std::fs::read_to_string(&scenario)?;
            let scenario: Scenario = serde_json::from_str(&text)?;
            let result = run_scenario(&scenario)?;
            println!("{}", serde_json::to_string_pretty(&result)?);
        }
        Command::Sweep { t, n, p_bits, seed } => {
            let rows = fault_tolerance_sweep(t, n, p_bits, seed)?;
            print!("{}", sharepass_harness::sweep::to_csv(t, n, &rows));
            match boundary(&rows) {
                Some(k) => eprintln!("logins succeed with up to {k} shareholders down"),
                None => eprintln!("no clean success boundary"),
            }
        }
        Command::Timing { p_bits, t, n, levels } => {
            let levels = levels.unwrap_or_else(|| DEFAULT_LEVELS.to_vec());
            let mut rows = Vec::new();
            for p in p_bits {
                rows.extend(timing_profile(t, n, p, &levels)?);
            }
            print!("{}", timing::to_csv(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("harness: {e}");
            ExitCode::FAILURE
        }
    }
}
