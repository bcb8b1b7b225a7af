//! The sharepass command-line client: sign-up, login, and moving the local
//! credential state between machines.

pub mod state;

use std::net::SocketAddr;
use std::path::Path;
use std::time::Duration;

use rand::rngs::OsRng;
use sharepass_core::group::{GroupError, GroupParams};
use sharepass_core::protocol::client::{login, signup, ClientError};
use sharepass_core::protocol::logging::NullLog;
use sharepass_core::protocol::net::{SystemClock, TcpTransport, DEFAULT_DEADLINE};
use sharepass_core::protocol::{Ctx, NodeId};
use thiserror::Error;

pub use state::{StateError, StateLock};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Protocol(#[from] ClientError),
    #[error("group parameters: {0}")]
    Params(#[from] GroupError),
    #[error("password: {0}")]
    Password(String),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// 0 is success; protocol codes map to 10 plus their hundreds bucket.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Protocol(e) => match e.code() {
                Some(code) => (10 + code.number() / 100) as u8,
                None if matches!(e, ClientError::Busy) => 3,
                None => 1,
            },
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

/// Where the deployment lives.
pub struct Endpoints {
    pub dealer: SocketAddr,
    pub service: SocketAddr,
    pub params: GroupParams,
    pub deadline: Duration,
}

impl Endpoints {
    pub fn new(dealer: &str, service: &str, params: &Path) -> Result<Endpoints, CliError> {
        let resolve =
            |a: &str| TcpTransport::resolve(a).map_err(|e| CliError::Usage(format!("bad address {a}: {e}")));
        Ok(Endpoints {
            dealer: resolve(dealer)?,
            service: resolve(service)?,
            params: GroupParams::load(params)?,
            deadline: DEFAULT_DEADLINE * 4,
        })
    }

    fn transport(&self) -> TcpTransport {
        TcpTransport::new(self.deadline)
            .with_peer(NodeId::Dealer, self.dealer)
            .with_peer(NodeId::Service, self.service)
    }
}

fn with_ctx<T>(ep: &Endpoints, f: impl FnOnce(&Ctx) -> T) -> T {
    let net = ep.transport();
    let ctx = Ctx { net: &net, me: NodeId::Client(0), log: &NullLog, clock: &SystemClock };
    f(&ctx)
}

/// Runs the sharing phase and writes a fresh state file.
pub fn cmd_signup(ep: &Endpoints, username: &str, password: &str, path: &Path) -> Result<(), CliError> {
    let _lock = StateLock::acquire(path)?;
    if path.exists() {
        return Err(StateError::Exists(path.into()).into());
    }
    let st = with_ctx(ep, |ctx| signup(ctx, username, password, &ep.params, &mut OsRng))?;
    state::write(path, &st)?;
    Ok(())
}

/// Runs the reconstruction phase; on success rotates the state file and
/// returns the session token. The file is untouched on any failure.
pub fn cmd_login(ep: &Endpoints, username: &str, password: &str, path: &Path) -> Result<String, CliError> {
    let _lock = StateLock::acquire(path)?;
    let current = state::read(path)?;
    if current.username != username {
        return Err(CliError::Usage(format!("{} holds the state of {}", path.display(), current.username)));
    }
    let out = with_ctx(ep, |ctx| login(ctx, &current, password, &ep.params, &mut OsRng))?;
    state::write(path, &out.state)?;
    Ok(out.token)
}

/// Copies the state to `out`; with `move_out` the original is deleted.
pub fn cmd_export(path: &Path, out: &Path, move_out: bool) -> Result<(), CliError> {
    let _lock = StateLock::acquire(path)?;
    let st = state::read(path)?;
    if out.exists() {
        return Err(StateError::Exists(out.into()).into());
    }
    state::write(out, &st)?;
    if move_out {
        state::remove(path)?;
    }
    Ok(())
}

/// Validates a blob and installs it at `path`.
pub fn cmd_import(blob: &Path, path: &Path) -> Result<(), CliError> {
    let _lock = StateLock::acquire(path)?;
    let bytes = std::fs::read(blob).map_err(|source| StateError::Io { path: blob.into(), source })?;
    let st = state::decode(&bytes)?;
    if path.exists() {
        return Err(StateError::Exists(path.into()).into());
    }
    state::write(path, &st)?;
    Ok(())
}
