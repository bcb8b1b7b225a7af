//! Logger: an append-only collector of records sent by the other nodes.

use std::sync::atomic::{AtomicU64, Ordering};

use super::logging::{report, LogRecord, LogSink};
use super::message::{Body, Message};
use super::net::{Ctx, Handler};
use super::store::{RecordStore, StoreError};

pub struct Logger {
    store: RecordStore,
    next: AtomicU64,
}

impl Logger {
    pub fn new(store: RecordStore) -> Logger {
        let next = store.len() as u64;
        Logger { store, next: AtomicU64::new(next) }
    }

    pub fn append(&self, rec: &LogRecord) -> Result<(), StoreError> {
        let seq = self.next.fetch_add(1, Ordering::SeqCst);
        self.store.put(&format!("log/{seq:012}"), rec)
    }

    /// Records in arrival order.
    pub fn records(&self) -> Vec<LogRecord> {
        self.store.keys().iter().filter_map(|k| self.store.get(k).ok().flatten()).collect()
    }

    pub fn report(&self) -> String {
        report(&self.records())
    }

    pub fn store(&self) -> &RecordStore {
        &self.store
    }
}

impl LogSink for Logger {
    fn emit(&self, record: LogRecord) {
        let _ = self.append(&record);
    }
}

impl Handler for Logger {
    fn handle(&self, _ctx: &Ctx, msg: &Message) -> Option<Message> {
        match &msg.body {
            Body::Log(rec) => Some(match self.append(rec) {
                Ok(()) => msg.reply(Body::Ack),
                Err(e) => msg.reply(Body::error(None, e.to_string())),
            }),
            other => Some(msg.reply(Body::error(None, format!("logger does not accept {}", other.kind())))),
        }
    }
}
