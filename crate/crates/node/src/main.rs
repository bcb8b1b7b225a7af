use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::rngs::OsRng;
use sharepass_core::group::{default_q_bits, generate_params};
use sharepass_core::protocol::logger::Logger;
use sharepass_core::protocol::store::RecordStore;
use sharepass_node::{run_node, NodeConfig, Role};

#[derive(Parser)]
#[command(name = "sharepass-node", about = "Run a sharepass dealer, shareholder, service or logger")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve a role until killed.
    Run {
        #[arg(long)]
        role: Option<Role>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        listen: Option<String>,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        log_sink: Option<String>,
        /// Deterministic randomness; accepted only by debug builds.
        #[arg(long, hide = !cfg!(debug_assertions))]
        seed: Option<u64>,
    },
    /// Print the logger's report from its store.
    Report {
        #[arg(long)]
        store: PathBuf,
    },
    /// Generate a group parameter file.
    GenParams {
        #[arg(long, default_value_t = 166)]
        p_bits: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run { role, config, listen, params, store, log_sink, seed } => {
            if seed.is_some() && !cfg!(debug_assertions) {
                return Err("--seed is only available in test builds".into());
            }
            let mut cfg = NodeConfig::load(&config)?;
            if let Some(r) = role {
                if r != cfg.role {
                    return Err(format!("--role {r:?} contradicts config role {:?}", cfg.role).into());
                }
            }
            cfg.listen = listen.unwrap_or(cfg.listen);
            cfg.params = params.unwrap_or(cfg.params);
            cfg.store = store.unwrap_or(cfg.store);
            cfg.log_sink = log_sink.or(cfg.log_sink);
            let node = run_node(&cfg, seed)?;
            eprintln!("sharepass-node: {:?} serving on {}", cfg.role, node.addr());
            node.wait();
        }
        Command::Report { store } => {
            let logger = Logger::new(RecordStore::open(&store)?);
            print!("{}", logger.report());
        }
        Command::GenParams { p_bits, out } => {
            let params = generate_params(p_bits, default_q_bits(p_bits), &mut OsRng)?;
            params.save(&out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sharepass-node: {e}");
            ExitCode::FAILURE
        }
    }
}
