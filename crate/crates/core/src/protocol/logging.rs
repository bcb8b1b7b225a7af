//! Audit records, sinks, and the administrator report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::error::ErrorCode;
use super::Phase;

/// Trace records kept per session; error records are always kept.
pub const SESSION_TRACE_CAP: usize = 512;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub ts_ms: u64,
    /// Emitting node, e.g. `shareholder-2`.
    pub node: String,
    pub role: String,
    pub username: String,
    pub session_id: String,
    pub phase: Phase,
    /// Message kind for trace records, `error` or `failure` otherwise.
    pub event: String,
    pub code: Option<ErrorCode>,
    pub detail: String,
}

impl LogRecord {
    pub fn is_trace(&self) -> bool {
        self.code.is_none() && self.event != "failure"
    }
}

pub trait LogSink: Send + Sync {
    fn emit(&self, record: LogRecord);
}

/// Discards everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullLog;

impl LogSink for NullLog {
    fn emit(&self, _record: LogRecord) {}
}

/// Keeps records in arrival order, capping trace volume per session.
#[derive(Debug, Default)]
pub struct MemoryLog {
    inner: Mutex<MemoryLogInner>,
}

#[derive(Debug, Default)]
struct MemoryLogInner {
    records: Vec<LogRecord>,
    per_session: BTreeMap<String, usize>,
    dropped: usize,
}

impl MemoryLog {
    pub fn new() -> MemoryLog {
        MemoryLog::default()
    }

    pub fn records(&self) -> Vec<LogRecord> {
        self.inner.lock().unwrap().records.clone()
    }

    pub fn dropped(&self) -> usize {
        self.inner.lock().unwrap().dropped
    }

    pub fn clear(&self) {
        *self.inner.lock().unwrap() = MemoryLogInner::default();
    }

    /// Codes raised so far, in order.
    pub fn codes(&self) -> Vec<ErrorCode> {
        self.inner.lock().unwrap().records.iter().filter_map(|r| r.code).collect()
    }
}

impl LogSink for MemoryLog {
    fn emit(&self, record: LogRecord) {
        let mut inner = self.inner.lock().unwrap();
        if record.is_trace() {
            let n = inner.per_session.entry(record.session_id.clone()).or_default();
            if *n >= SESSION_TRACE_CAP {
                inner.dropped += 1;
                return;
            }
            *n += 1;
        }
        inner.records.push(record);
    }
}

/// Trace events of one session. Consecutive repeats of the same event at
/// the same role (a fan-out) collapse into one entry.
pub fn session_trace(records: &[LogRecord], session_id: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut last: Option<(&str, &str, &str)> = None;
    for r in records.iter().filter(|r| r.session_id == session_id && r.is_trace()) {
        let key = (r.role.as_str(), r.event.as_str(), r.detail.as_str());
        if last != Some(key) {
            out.push(r.event.clone());
            last = Some(key);
        }
    }
    out
}

/// Error-code counts over all records.
pub fn error_counts(records: &[LogRecord]) -> BTreeMap<ErrorCode, usize> {
    let mut counts = BTreeMap::new();
    for code in records.iter().filter_map(|r| r.code) {
        *counts.entry(code).or_insert(0) += 1;
    }
    counts
}

/// Human-readable report: one block per session (ordered message trace and
/// the errors raised in it), then an error summary grouped by phase.
pub fn report(records: &[LogRecord]) -> String {
    let mut out = String::new();
    if records.is_empty() {
        return out;
    }
    let mut sessions: Vec<&str> = Vec::new();
    for r in records {
        if !sessions.contains(&r.session_id.as_str()) {
            sessions.push(&r.session_id);
        }
    }
    for sid in sessions {
        let rows: Vec<&LogRecord> = records.iter().filter(|r| r.session_id == sid).collect();
        let first = rows[0];
        let _ = writeln!(out, "== session {sid} user={} phase={}", first.username, first.phase);
        let mut last: Option<(&str, &str, &str)> = None;
        let mut repeat = 0usize;
        let flush = |out: &mut String, last: Option<(&str, &str, &str)>, repeat: usize| {
            if let Some((node, event, dir)) = last {
                let arrow = if dir == "in" { "->" } else { "<-" };
                let times = if repeat > 1 { format!(" x{repeat}") } else { String::new() };
                let _ = writeln!(out, "  {arrow} {node:<16} {event}{times}");
            }
        };
        for r in &rows {
            if r.is_trace() {
                let role = r.role.as_str();
                let key = (role, r.event.as_str(), r.detail.as_str());
                if last == Some(key) {
                    repeat += 1;
                    continue;
                }
                flush(&mut out, last, repeat);
                last = Some(key);
                repeat = 1;
            } else {
                flush(&mut out, last.take(), repeat);
                repeat = 0;
                let code = r.code.map(|c| c.to_string()).unwrap_or_else(|| "-".into());
                let _ = writeln!(out, "  !! {:<16} {code} {}", r.node, r.detail);
            }
        }
        flush(&mut out, last, repeat);
    }
    let mut by_phase: BTreeMap<String, BTreeMap<ErrorCode, usize>> = BTreeMap::new();
    for r in records {
        if let Some(code) = r.code {
            *by_phase.entry(r.phase.to_string()).or_default().entry(code).or_insert(0) += 1;
        }
    }
    let _ = writeln!(out, "== error summary");
    if by_phase.is_empty() {
        let _ = writeln!(out, "  none");
    }
    for (phase, codes) in by_phase {
        for (code, n) in codes {
            let severity = format!("{:?}", code.severity());
            let _ = writeln!(out, "  {phase:<15} {:<8} {severity:<13} {n}", code.to_string());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(sid: &str, event: &str, code: Option<ErrorCode>) -> LogRecord {
        LogRecord {
            ts_ms: 0,
            node: "dealer".into(),
            role: "dealer".into(),
            username: "u".into(),
            session_id: sid.into(),
            phase: Phase::Reconstruction,
            event: event.into(),
            code,
            detail: "in".into(),
        }
    }

    #[test]
    fn empty_log_gives_empty_report() {
        assert_eq!(report(&[]), "");
    }

    #[test]
    fn report_groups_sessions_and_counts_errors() {
        let log = vec![
            rec("a", "login", None),
            rec("b", "login", None),
            rec("a", "error", Some(ErrorCode::Cod830)),
            rec("a", "error", Some(ErrorCode::Cod830)),
            rec("b", "error", Some(ErrorCode::Cod860)),
        ];
        let text = report(&log);
        assert!(text.find("session a").unwrap() < text.find("session b").unwrap());
        assert!(text.contains("COD830   NonFatal      2"), "{text}");
        assert!(text.contains("COD860   Fatal         1"), "{text}");
        assert_eq!(error_counts(&log)[&ErrorCode::Cod830], 2);
    }

    #[test]
    fn trace_collapses_repeats_and_cap_applies() {
        let log = MemoryLog::new();
        for _ in 0..(SESSION_TRACE_CAP + 10) {
            log.emit(rec("s", "store_share", None));
        }
        log.emit(rec("s", "error", Some(ErrorCode::Cod700)));
        assert_eq!(log.dropped(), 10);
        assert_eq!(log.codes(), vec![ErrorCode::Cod700]);
        assert_eq!(session_trace(&log.records(), "s"), vec!["store_share"]);
    }
}
