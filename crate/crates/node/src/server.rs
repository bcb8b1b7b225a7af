//! TCP daemon: one thread per connection, frames dispatched to the role.

use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use sharepass_core::group::{GroupError, GroupParams};
use sharepass_core::protocol::dealer::Dealer;
use sharepass_core::protocol::logger::Logger;
use sharepass_core::protocol::logging::LogSink;
use sharepass_core::protocol::message::{read_frame, write_frame, CodecError};
use sharepass_core::protocol::net::{SystemClock, TcpTransport};
use sharepass_core::protocol::service::Service;
use sharepass_core::protocol::shareholder::Shareholder;
use sharepass_core::protocol::store::{RecordStore, StoreError};
use sharepass_core::protocol::{dispatch, Ctx, Deployment, Handler, NodeId};
use thiserror::Error;

use crate::config::{ConfigError, NodeConfig, Role};
use crate::sink::{FileSink, LocalSink, RemoteSink};

#[derive(Debug, Error)]
pub enum NodeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("group parameters: {0}")]
    Params(#[from] GroupError),
    #[error("cannot open store {path}: {source}")]
    Store { path: String, source: StoreError },
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("bad peer address {addr}: {source}")]
    Peer { addr: String, source: std::io::Error },
    #[error("log fallback {path}: {source}")]
    LogFile { path: String, source: std::io::Error },
}

/// An idle inbound connection is closed after this long.
pub const IDLE_TIMEOUT: Duration = Duration::from_secs(60);

/// Everything a connection thread needs.
struct Node {
    me: NodeId,
    handler: Arc<dyn Handler>,
    net: TcpTransport,
    log: Arc<dyn LogSink>,
}

pub fn transport_for(config: &NodeConfig) -> Result<TcpTransport, NodeError> {
    let resolve = |addr: &str| {
        TcpTransport::resolve(addr).map_err(|source| NodeError::Peer { addr: addr.into(), source })
    };
    let mut net = TcpTransport::new(config.deadline());
    if !config.dealer.is_empty() {
        net.add_peer(NodeId::Dealer, resolve(&config.dealer)?);
    }
    if !config.service.is_empty() {
        net.add_peer(NodeId::Service, resolve(&config.service)?);
    }
    for (i, addr) in config.shareholders.iter().enumerate() {
        net.add_peer(NodeId::Shareholder(i as u16), resolve(addr)?);
    }
    Ok(net)
}

fn open_store(path: &Path) -> Result<RecordStore, NodeError> {
    RecordStore::open(path).map_err(|source| NodeError::Store { path: path.display().to_string(), source })
}

fn build(config: &NodeConfig, params: GroupParams, seed: Option<u64>) -> Result<Node, NodeError> {
    config.validate()?;
    let me = config.node_id();
    let net = transport_for(config)?;
    let store = open_store(&config.store)?;
    let fallback = match &config.log_fallback {
        Some(p) => Some(
            FileSink::open(p).map_err(|source| NodeError::LogFile { path: p.display().to_string(), source })?,
        ),
        None => None,
    };
    let remote_log = |fallback| -> Result<Arc<dyn LogSink>, NodeError> {
        Ok(match &config.log_sink {
            Some(addr) => {
                let logger = TcpTransport::resolve(addr)
                    .map_err(|source| NodeError::Peer { addr: addr.clone(), source })?;
                let net = TcpTransport::new(config.deadline()).with_peer(NodeId::Logger, logger);
                Arc::new(RemoteSink::new(net, me, fallback))
            }
            None => Arc::new(LocalSink(fallback)),
        })
    };
    let deployment = Deployment { params: params.clone(), t: config.t, n: config.n };
    let (handler, log): (Arc<dyn Handler>, Arc<dyn LogSink>) = match config.role {
        Role::Dealer => (Arc::new(Dealer::new(deployment, store, seed)), remote_log(fallback)?),
        Role::Service => {
            (Arc::new(Service::new(deployment, store, config.share_service_keys, seed)), remote_log(fallback)?)
        }
        Role::Shareholder => (Arc::new(Shareholder::new(params, store)), remote_log(fallback)?),
        Role::Logger => {
            let logger = Arc::new(Logger::new(store));
            (logger.clone(), logger)
        }
    };
    Ok(Node { me, handler, net, log })
}

/// A node accepting connections until stopped or dropped.
pub struct RunningNode {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl RunningNode {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting and releases the listening socket.
    pub fn stop(mut self) {
        self.shutdown();
    }

    /// Blocks until the node is stopped from elsewhere.
    pub fn wait(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for RunningNode {
    fn drop(&mut self) {
        if self.accept.is_some() {
            self.shutdown();
        }
    }
}

pub fn bind(addr: &str) -> Result<TcpListener, NodeError> {
    TcpListener::bind(addr).map_err(|source| NodeError::Bind { addr: addr.into(), source })
}

/// Builds the role from `config` and serves it on an already-bound listener.
/// Fails before accepting anything if the store does not load.
pub fn serve(
    listener: TcpListener,
    config: &NodeConfig,
    params: GroupParams,
    seed: Option<u64>,
) -> Result<RunningNode, NodeError> {
    let node = Arc::new(build(config, params, seed)?);
    let addr = listener.local_addr().map_err(|source| NodeError::Bind { addr: config.listen.clone(), source })?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    log::info!("{} listening on {addr}", node.me);
    let accept = std::thread::spawn(move || {
        for conn in listener.incoming() {
            if flag.load(Ordering::SeqCst) {
                break;
            }
            match conn {
                Ok(stream) => {
                    let node = node.clone();
                    std::thread::spawn(move || connection(&node, stream));
                }
                Err(e) => log::warn!("accept failed: {e}"),
            }
        }
    });
    Ok(RunningNode { addr, stop, accept: Some(accept) })
}

/// Loads parameters, binds the configured address and serves.
pub fn run_node(config: &NodeConfig, seed: Option<u64>) -> Result<RunningNode, NodeError> {
    config.validate()?;
    let params = GroupParams::load(&config.params)?;
    let listener = bind(&config.listen)?;
    serve(listener, config, params, seed)
}

fn connection(node: &Node, mut stream: TcpStream) {
    stream.set_nodelay(true).ok();
    stream.set_read_timeout(Some(IDLE_TIMEOUT)).ok();
    let clock = SystemClock;
    let ctx = Ctx { net: &node.net, me: node.me, log: &*node.log, clock: &clock };
    loop {
        let msg = match read_frame(&mut stream) {
            Ok(m) => m,
            Err(CodecError::Io(e)) if matches!(e.kind(), ErrorKind::UnexpectedEof | ErrorKind::ConnectionReset) => {
                return
            }
            Err(e) => {
                log::debug!("dropping connection: {e}");
                return;
            }
        };
        match dispatch(&*node.handler, &ctx, &msg) {
            Some(reply) => {
                if let Err(e) = write_frame(&mut stream, &reply) {
                    log::debug!("reply not delivered: {e}");
                    return;
                }
            }
            // silence: closing tells the caller no answer is coming
            None => return,
        }
    }
}
