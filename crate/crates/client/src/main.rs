use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sharepass_client::{cmd_export, cmd_import, cmd_login, cmd_signup, CliError, Endpoints};

#[derive(Parser)]
#[command(name = "sharepass", about = "Sign up and log in to a sharepass deployment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Session {
    #[arg(long)]
    dealer: String,
    #[arg(long)]
    service: String,
    /// Group parameter file shared by the deployment.
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    state: PathBuf,
    #[arg(long)]
    username: String,
    /// Read the password from this environment variable instead of prompting.
    #[arg(long)]
    password_env: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    Signup(Session),
    /// Prints the session token on success.
    Login(Session),
    ExportState {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Delete the local state after exporting.
        #[arg(long = "move")]
        move_out: bool,
    },
    ImportState {
        #[arg(long)]
        state: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn password(s: &Session) -> Result<String, CliError> {
    match &s.password_env {
        Some(var) => std::env::var(var).map_err(|_| CliError::Password(format!("{var} is not set"))),
        None => rpassword::prompt_password(format!("password for {}: ", s.username))
            .map_err(|e| CliError::Password(e.to_string())),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Signup(s) => {
            let ep = Endpoints::new(&s.dealer, &s.service, &s.params)?;
            cmd_signup(&ep, &s.username, &password(&s)?, &s.state)?;
            eprintln!("signed up {}; state saved to {}", s.username, s.state.display());
        }
        Command::Login(s) => {
            let ep = Endpoints::new(&s.dealer, &s.service, &s.params)?;
            let token = cmd_login(&ep, &s.username, &password(&s)?, &s.state)?;
            println!("{token}");
        }
        Command::ExportState { state, out, move_out } => cmd_export(&state, &out, move_out)?,
        Command::ImportState { state, input } => cmd_import(&input, &state)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sharepass: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
