//! Request/response transport, clocks, and the handler context.

use std::collections::{HashMap, HashSet};
use std::io::ErrorKind;
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use thiserror::Error;

use super::error::ErrorCode;
use super::logging::{LogRecord, LogSink};
use super::message::{read_frame, write_frame, Body, CodecError, Message, NodeId};
use super::Phase;

/// Per-message deadline in live mode.
pub const DEFAULT_DEADLINE: Duration = Duration::from_secs(5);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("{0} did not answer before the deadline")]
    Timeout(NodeId),
    #[error("{0} closed the exchange without answering")]
    NoReply(NodeId),
    #[error("{0} unreachable: {1}")]
    Unreachable(NodeId, String),
    #[error("codec failure talking to {0}: {1}")]
    Codec(NodeId, String),
    #[error("message budget exhausted")]
    Budget,
}

/// Synchronous request/response delivery between actors.
pub trait Transport: Send + Sync {
    fn call(&self, from: NodeId, to: NodeId, msg: &Message) -> Result<Message, TransportError>;
}

pub trait Clock: Send + Sync {
    /// Milliseconds since an arbitrary, fixed origin.
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct VirtualClock(AtomicU64);

impl VirtualClock {
    pub fn new(start_ms: u64) -> VirtualClock {
        VirtualClock(AtomicU64::new(start_ms))
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for VirtualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

/// Everything a role needs from its surroundings while handling a message.
#[derive(Clone, Copy)]
pub struct Ctx<'a> {
    pub net: &'a dyn Transport,
    pub me: NodeId,
    pub log: &'a dyn LogSink,
    pub clock: &'a dyn Clock,
}

impl<'a> Ctx<'a> {
    pub fn call(&self, to: NodeId, msg: &Message) -> Result<Message, TransportError> {
        self.net.call(self.me, to, msg)
    }

    pub fn record(
        &self,
        msg: &Message,
        phase: Phase,
        event: impl Into<String>,
        code: Option<ErrorCode>,
        detail: impl Into<String>,
    ) {
        self.log.emit(LogRecord {
            ts_ms: self.clock.now_ms(),
            node: self.me.to_string(),
            role: self.me.role().to_string(),
            username: msg.username.clone(),
            session_id: msg.session_id.clone(),
            phase,
            event: event.into(),
            code,
            detail: detail.into(),
        });
    }

    /// Logs a detected protocol error and builds the reply carrying it.
    pub fn raise(&self, msg: &Message, code: ErrorCode, detail: impl Into<String>) -> Message {
        let detail = detail.into();
        self.record(msg, msg.body.phase(), "error", Some(code), detail.clone());
        msg.reply(Body::error(Some(code), detail))
    }

    /// Logs and replies with an uncoded failure.
    pub fn fail(&self, msg: &Message, detail: impl Into<String>) -> Message {
        let detail = detail.into();
        self.record(msg, msg.body.phase(), "failure", None, detail.clone());
        msg.reply(Body::error(None, detail))
    }
}

/// A protocol role. `None` means the role stays silent.
pub trait Handler: Send + Sync {
    fn handle(&self, ctx: &Ctx, msg: &Message) -> Option<Message>;
}

/// Runs a handler and records the exchange in the message trace.
///
/// Delivery receipts from shareholders are part of the fan-out, not of the
/// protocol trace, and are left out.
pub fn dispatch(handler: &dyn Handler, ctx: &Ctx, msg: &Message) -> Option<Message> {
    let traced = ctx.me != NodeId::Logger;
    if traced {
        ctx.record(msg, msg.body.phase(), msg.kind(), None, "in");
    }
    let reply = handler.handle(ctx, msg);
    match &reply {
        Some(r) if traced => {
            let receipt = matches!(ctx.me, NodeId::Shareholder(_)) && r.body == Body::Ack;
            if !receipt {
                ctx.record(msg, msg.body.phase(), r.kind(), None, "out");
            }
        }
        None if traced => ctx.record(msg, msg.body.phase(), "silence", None, "out"),
        _ => {}
    }
    reply
}

/// At most one in-flight request per username.
#[derive(Debug, Default)]
pub struct SessionRegistry(Mutex<HashSet<String>>);

pub struct SessionGuard<'a> {
    registry: &'a SessionRegistry,
    username: String,
}

impl SessionRegistry {
    pub fn try_enter(&self, username: &str) -> Option<SessionGuard<'_>> {
        let mut held = self.0.lock().unwrap();
        if !held.insert(username.to_string()) {
            return None;
        }
        Some(SessionGuard { registry: self, username: username.to_string() })
    }
}

impl Drop for SessionGuard<'_> {
    fn drop(&mut self) {
        self.registry.0.lock().unwrap().remove(&self.username);
    }
}

/// Length-prefixed canonical messages over TCP, one connection per call.
#[derive(Debug, Clone)]
pub struct TcpTransport {
    peers: HashMap<NodeId, SocketAddr>,
    deadline: Duration,
}

impl TcpTransport {
    pub fn new(deadline: Duration) -> TcpTransport {
        TcpTransport { peers: HashMap::new(), deadline }
    }

    pub fn with_peer(mut self, id: NodeId, addr: SocketAddr) -> TcpTransport {
        self.peers.insert(id, addr);
        self
    }

    pub fn add_peer(&mut self, id: NodeId, addr: SocketAddr) {
        self.peers.insert(id, addr);
    }

    /// Resolves `host:port` strings.
    pub fn resolve(addr: &str) -> std::io::Result<SocketAddr> {
        addr.to_socket_addrs()?
            .next()
            .ok_or_else(|| std::io::Error::new(ErrorKind::NotFound, format!("cannot resolve {addr}")))
    }

    pub fn peers(&self) -> &HashMap<NodeId, SocketAddr> {
        &self.peers
    }
}

impl Transport for TcpTransport {
    fn call(&self, _from: NodeId, to: NodeId, msg: &Message) -> Result<Message, TransportError> {
        let addr = self
            .peers
            .get(&to)
            .ok_or_else(|| TransportError::Unreachable(to, "no address configured".into()))?;
        let mut stream = TcpStream::connect_timeout(addr, self.deadline)
            .map_err(|e| TransportError::Unreachable(to, e.to_string()))?;
        stream.set_read_timeout(Some(self.deadline)).ok();
        stream.set_write_timeout(Some(self.deadline)).ok();
        stream.set_nodelay(true).ok();
        write_frame(&mut stream, msg).map_err(|e| classify(to, e))?;
        read_frame(&mut stream).map_err(|e| classify(to, e))
    }
}

fn classify(to: NodeId, e: CodecError) -> TransportError {
    match e {
        CodecError::Io(io) => match io.kind() {
            ErrorKind::WouldBlock | ErrorKind::TimedOut => TransportError::Timeout(to),
            ErrorKind::UnexpectedEof | ErrorKind::ConnectionReset => TransportError::NoReply(to),
            _ => TransportError::Unreachable(to, io.to_string()),
        },
        other => TransportError::Codec(to, other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_serializes_per_user() {
        let reg = SessionRegistry::default();
        let a = reg.try_enter("alice").unwrap();
        assert!(reg.try_enter("alice").is_none());
        let _b = reg.try_enter("bob").unwrap();
        drop(a);
        assert!(reg.try_enter("alice").is_some());
    }

    #[test]
    fn virtual_clock_moves_only_on_demand() {
        let c = VirtualClock::new(10);
        assert_eq!(c.now_ms(), 10);
        c.advance(5000);
        assert_eq!(c.now_ms(), 5010);
    }

    #[test]
    fn tcp_unknown_peer_is_unreachable() {
        let t = TcpTransport::new(Duration::from_millis(100));
        let m = Message::new("s", "u", Body::Ack);
        assert!(matches!(
            t.call(NodeId::Client(0), NodeId::Dealer, &m),
            Err(TransportError::Unreachable(NodeId::Dealer, _))
        ));
    }
}
