//! In-process network: every call is delivered synchronously through the
//! canonical codec, captured, and optionally rewritten by an interceptor.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use sharepass_core::protocol::logging::MemoryLog;
use sharepass_core::protocol::net::VirtualClock;
use sharepass_core::protocol::{dispatch, Clock, Ctx, Handler, Message, NodeId, Transport, TransportError};

/// Virtual time charged for a call to a node that is down.
pub const TIMEOUT_MS: u64 = 5_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEntry {
    pub from: NodeId,
    pub to: NodeId,
    pub kind: &'static str,
    pub reply: bool,
    pub bytes: Vec<u8>,
}

/// Rewrites traffic on behalf of byzantine actors.
pub trait Interceptor: Send + Sync {
    /// A request leaving `from`.
    fn outgoing(&self, _from: NodeId, _to: NodeId, msg: Message) -> Message {
        msg
    }

    /// `node`'s answer to `req`; `None` is silence.
    fn response(&self, _node: NodeId, _req: &Message, resp: Option<Message>) -> Option<Message> {
        resp
    }
}

struct Honest;

impl Interceptor for Honest {}

pub enum SimClock {
    Virtual(Arc<VirtualClock>),
    Wall(Arc<dyn Clock>),
}

pub struct Simnet {
    nodes: RwLock<HashMap<NodeId, Arc<dyn Handler>>>,
    down: RwLock<HashSet<NodeId>>,
    interceptor: RwLock<Arc<dyn Interceptor>>,
    log: Arc<MemoryLog>,
    clock: SimClock,
    trace: Mutex<Vec<TraceEntry>>,
    capture: bool,
    sent: AtomicUsize,
    budget: usize,
}

impl Simnet {
    pub fn new(clock: SimClock, log: Arc<MemoryLog>, capture: bool, budget: usize) -> Simnet {
        Simnet {
            nodes: RwLock::default(),
            down: RwLock::default(),
            interceptor: RwLock::new(Arc::new(Honest)),
            log,
            clock,
            trace: Mutex::default(),
            capture,
            sent: AtomicUsize::new(0),
            budget,
        }
    }

    pub fn add_node(&self, id: NodeId, handler: Arc<dyn Handler>) {
        self.nodes.write().unwrap().insert(id, handler);
    }

    pub fn set_interceptor(&self, i: Arc<dyn Interceptor>) {
        *self.interceptor.write().unwrap() = i;
    }

    pub fn set_down(&self, id: NodeId, down: bool) {
        let mut set = self.down.write().unwrap();
        if down {
            set.insert(id);
        } else {
            set.remove(&id);
        }
    }

    pub fn is_down(&self, id: NodeId) -> bool {
        self.down.read().unwrap().contains(&id)
    }

    pub fn clock(&self) -> &dyn Clock {
        match &self.clock {
            SimClock::Virtual(c) => &**c,
            SimClock::Wall(c) => &**c,
        }
    }

    pub fn advance(&self, ms: u64) {
        if let SimClock::Virtual(c) = &self.clock {
            c.advance(ms);
        }
    }

    pub fn log(&self) -> &MemoryLog {
        &self.log
    }

    /// A context for an actor outside the node table (a client).
    pub fn ctx_for(&self, me: NodeId) -> Ctx<'_> {
        Ctx { net: self, me, log: &*self.log, clock: self.clock() }
    }

    pub fn trace(&self) -> Vec<TraceEntry> {
        self.trace.lock().unwrap().clone()
    }

    pub fn messages_sent(&self) -> usize {
        self.sent.load(Ordering::SeqCst)
    }

    fn capture(&self, from: NodeId, to: NodeId, msg: &Message, reply: bool, bytes: &[u8]) {
        if self.capture {
            self.trace.lock().unwrap().push(TraceEntry { from, to, kind: msg.kind(), reply, bytes: bytes.to_vec() });
        }
    }
}

impl Transport for Simnet {
    fn call(&self, from: NodeId, to: NodeId, msg: &Message) -> Result<Message, TransportError> {
        if self.sent.fetch_add(1, Ordering::SeqCst) >= self.budget {
            return Err(TransportError::Budget);
        }
        let interceptor = self.interceptor.read().unwrap().clone();
        let msg = interceptor.outgoing(from, to, msg.clone());
        let bytes = msg.to_canonical_bytes();
        self.capture(from, to, &msg, false, &bytes);
        if self.is_down(to) {
            self.advance(TIMEOUT_MS);
            return Err(TransportError::Timeout(to));
        }
        let handler = self
            .nodes
            .read()
            .unwrap()
            .get(&to)
            .cloned()
            .ok_or_else(|| TransportError::Unreachable(to, "no such node".into()))?;
        let wire = Message::from_bytes(&bytes).map_err(|e| TransportError::Codec(to, e.to_string()))?;
        let ctx = Ctx { net: self, me: to, log: &*self.log, clock: self.clock() };
        let resp = dispatch(&*handler, &ctx, &wire);
        match interceptor.response(to, &wire, resp) {
            Some(r) => {
                let rb = r.to_canonical_bytes();
                self.capture(to, from, &r, true, &rb);
                Message::from_bytes(&rb).map_err(|e| TransportError::Codec(to, e.to_string()))
            }
            None => Err(TransportError::NoReply(to)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sharepass_core::protocol::Body;

    struct Echo;

    impl Handler for Echo {
        fn handle(&self, _ctx: &Ctx, msg: &Message) -> Option<Message> {
            Some(msg.reply(Body::Ack))
        }
    }

    fn net(budget: usize) -> Simnet {
        let clock = SimClock::Virtual(Arc::new(VirtualClock::new(0)));
        let n = Simnet::new(clock, Arc::new(MemoryLog::new()), true, budget);
        n.add_node(NodeId::Dealer, Arc::new(Echo));
        n
    }

    #[test]
    fn down_node_times_out_in_virtual_time() {
        let n = net(10);
        let m = Message::new("s", "u", Body::Ack);
        n.set_down(NodeId::Dealer, true);
        assert_eq!(n.call(NodeId::Client(0), NodeId::Dealer, &m), Err(TransportError::Timeout(NodeId::Dealer)));
        assert_eq!(n.clock().now_ms(), TIMEOUT_MS);
        n.set_down(NodeId::Dealer, false);
        assert!(n.call(NodeId::Client(0), NodeId::Dealer, &m).is_ok());
        assert_eq!(n.trace().len(), 3);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let n = net(2);
        let m = Message::new("s", "u", Body::Ack);
        assert!(n.call(NodeId::Client(0), NodeId::Dealer, &m).is_ok());
        assert!(n.call(NodeId::Client(0), NodeId::Dealer, &m).is_ok());
        assert_eq!(n.call(NodeId::Client(0), NodeId::Dealer, &m), Err(TransportError::Budget));
    }
}
