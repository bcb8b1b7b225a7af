//! Log sinks for daemons: ship records to the logger, fall back to a file.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use sharepass_core::protocol::logging::{LogRecord, LogSink};
use sharepass_core::protocol::{Body, Message, NodeId, Transport};

/// Appends records as JSON lines.
pub struct FileSink(Mutex<File>);

impl FileSink {
    pub fn open(path: &Path) -> std::io::Result<FileSink> {
        Ok(FileSink(Mutex::new(OpenOptions::new().create(true).append(true).open(path)?)))
    }

    fn write(&self, record: &LogRecord) {
        let mut line = serde_json::to_vec(record).expect("log record serializes");
        line.push(b'\n');
        let mut f = self.0.lock().unwrap();
        if let Err(e) = f.write_all(&line) {
            log::warn!("log fallback write failed: {e}");
        }
    }
}

impl LogSink for FileSink {
    fn emit(&self, record: LogRecord) {
        self.write(&record);
    }
}

/// Sends each record to the logger node; records it refuses or cannot
/// receive go to the fallback file, or to the diagnostic log without one.
pub struct RemoteSink<T: Transport> {
    net: T,
    me: NodeId,
    fallback: Option<FileSink>,
}

impl<T: Transport> RemoteSink<T> {
    pub fn new(net: T, me: NodeId, fallback: Option<FileSink>) -> Self {
        RemoteSink { net, me, fallback }
    }
}

impl<T: Transport> LogSink for RemoteSink<T> {
    fn emit(&self, record: LogRecord) {
        let msg = Message::new(record.session_id.clone(), record.username.clone(), Body::Log(record.clone()));
        match self.net.call(self.me, NodeId::Logger, &msg) {
            Ok(Message { body: Body::Ack, .. }) => {}
            other => match &self.fallback {
                Some(f) => f.write(&record),
                None => log::warn!("logger unavailable ({other:?}); dropped {} record", record.event),
            },
        }
    }
}

/// Without a logger: fallback file if configured, diagnostic log otherwise.
pub struct LocalSink(pub Option<FileSink>);

impl LogSink for LocalSink {
    fn emit(&self, record: LogRecord) {
        match &self.0 {
            Some(f) => f.write(&record),
            None => log::info!("{}", serde_json::to_string(&record).expect("log record serializes")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sharepass_core::protocol::{Phase, TransportError};

    struct Dead;

    impl Transport for Dead {
        fn call(&self, _: NodeId, to: NodeId, _: &Message) -> Result<Message, TransportError> {
            Err(TransportError::Timeout(to))
        }
    }

    fn rec() -> LogRecord {
        LogRecord {
            ts_ms: 5,
            node: "dealer".into(),
            role: "dealer".into(),
            username: "u".into(),
            session_id: "s".into(),
            phase: Phase::Sharing,
            event: "signup_mc".into(),
            code: None,
            detail: "in".into(),
        }
    }

    #[test]
    fn unreachable_logger_falls_back_to_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fallback.log");
        let sink = RemoteSink::new(Dead, NodeId::Dealer, Some(FileSink::open(&path).unwrap()));
        sink.emit(rec());
        sink.emit(rec());
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        let back: LogRecord = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(back, rec());
    }
}
