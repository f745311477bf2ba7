//! Layer 6: the hash-chained, append-only audit log.
//!
//! Each event commits to its predecessor:
//!
//! ```text
//! this_digest = SHA-256( seq:u64be ‖ lp(kind) ‖ lp(task_id) ‖ canonical(payload) ‖ prev_digest )
//! ```
//!
//! where `lp` is a u64 big-endian length prefix and `canonical` is the
//! sorted-key, length-prefixed encoding implemented in [`canonical`]. The
//! genesis event uses `SHA-256("")` as its `prev_digest`.
//!
//! On disk the log is newline-delimited JSON, one event per line, in the
//! fixed field order `seq, kind, task_id, payload, prev_digest, this_digest`
//! with sorted payload keys, no whitespace and lowercase hex digests. Because
//! that form is canonical, [`verify_ndjson`] also rejects any line that does
//! not re-serialize to exactly the stored bytes.

pub mod canonical;
pub mod events;
mod snapshot;
mod trace;

use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::digest::{Digest, Hasher};
use crate::types::TaskId;

pub use snapshot::{ConfigSnapshot, SnapshotError, SnapshotRef, SnapshotStore};
pub use trace::{
    completeness_report, reconstruct_trace, task_ids, AuditCompleteness, DecisionTrace, HumanIntervention,
    TraceError, TraceField, TRACE_FIELDS, all_traces, ActionOutcome, ContextBoundaries, RouteStep,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Ingest,
    RouteAttempt,
    Normalize,
    ConstraintVerdict,
    Enqueue,
    HumanDecision,
    Escalation,
    Action,
    AdminPin,
    AdminRollback,
    AdminSnapshot,
    PolicyReload,
    ScenarioMarker,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Ingest => "ingest",
            EventKind::RouteAttempt => "route_attempt",
            EventKind::Normalize => "normalize",
            EventKind::ConstraintVerdict => "constraint_verdict",
            EventKind::Enqueue => "enqueue",
            EventKind::HumanDecision => "human_decision",
            EventKind::Escalation => "escalation",
            EventKind::Action => "action",
            EventKind::AdminPin => "admin_pin",
            EventKind::AdminRollback => "admin_rollback",
            EventKind::AdminSnapshot => "admin_snapshot",
            EventKind::PolicyReload => "policy_reload",
            EventKind::ScenarioMarker => "scenario_marker",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditEvent {
    pub seq: u64,
    pub kind: EventKind,
    pub task_id: Option<TaskId>,
    pub payload: Value,
    pub prev_digest: Digest,
    pub this_digest: Digest,
}

impl AuditEvent {
    /// Decodes the payload into its typed form.
    pub fn decode<T: for<'de> Deserialize<'de>>(&self) -> Option<T> {
        serde_json::from_value(self.payload.clone()).ok()
    }

    pub fn recompute_digest(&self) -> Digest {
        event_digest(self.seq, self.kind, self.task_id.as_ref(), &self.payload, &self.prev_digest)
    }

    /// The canonical NDJSON line, without the trailing newline.
    pub fn to_line(&self) -> String {
        let mut out = String::with_capacity(256);
        out.push_str("{\"seq\":");
        out.push_str(&self.seq.to_string());
        out.push_str(",\"kind\":\"");
        out.push_str(self.kind.as_str());
        out.push_str("\",\"task_id\":");
        match &self.task_id {
            Some(t) => canonical::write_json(&mut out, &Value::String(t.as_str().to_owned())),
            None => out.push_str("null"),
        }
        out.push_str(",\"payload\":");
        canonical::write_json(&mut out, &self.payload);
        out.push_str(",\"prev_digest\":\"");
        out.push_str(&self.prev_digest.to_hex());
        out.push_str("\",\"this_digest\":\"");
        out.push_str(&self.this_digest.to_hex());
        out.push_str("\"}");
        out
    }
}

pub fn genesis_digest() -> Digest {
    Digest::of(b"")
}

pub fn event_digest(seq: u64, kind: EventKind, task_id: Option<&TaskId>, payload: &Value, prev: &Digest) -> Digest {
    let mut buf = Vec::with_capacity(256);
    canonical::encode(payload, &mut buf);
    let mut h = Hasher::new();
    h.update(&seq.to_be_bytes())
        .field(kind.as_str().as_bytes())
        .field(task_id.map(|t| t.as_str()).unwrap_or("").as_bytes())
        .update(&buf)
        .update(prev.as_bytes());
    h.finish()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainVerdict {
    Valid,
    BrokenAt(u64),
}

impl std::fmt::Display for ChainVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ChainVerdict::Valid => f.write_str("valid"),
            ChainVerdict::BrokenAt(seq) => write!(f, "broken_at({seq})"),
        }
    }
}

/// Recomputes every digest and reports the first event that does not link.
pub fn verify_chain(events: &[AuditEvent]) -> ChainVerdict {
    let mut prev = genesis_digest();
    for (i, ev) in events.iter().enumerate() {
        let i = i as u64;
        if ev.seq != i || ev.prev_digest != prev || ev.recompute_digest() != ev.this_digest {
            return ChainVerdict::BrokenAt(i);
        }
        prev = ev.this_digest;
    }
    ChainVerdict::Valid
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("audit chain {0}")]
    Broken(ChainVerdict),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Parses an NDJSON log. Does not check the chain.
pub fn parse_ndjson(text: &str) -> Result<Vec<AuditEvent>, LogError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| LogError::Parse { line: i + 1, message: e.to_string() }))
        .collect()
}

pub fn to_ndjson(events: &[AuditEvent]) -> String {
    let mut out = String::new();
    for ev in events {
        out.push_str(&ev.to_line());
        out.push('\n');
    }
    out
}

/// Verifies a stored log bit-exactly. A line that cannot be decoded, or that
/// decodes to an event whose canonical form differs from the stored bytes,
/// breaks the chain at that line's position.
pub fn verify_ndjson(bytes: &[u8]) -> ChainVerdict {
    let mut prev = genesis_digest();
    let body = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    if body.is_empty() {
        return ChainVerdict::Valid;
    }
    for (i, line) in body.split(|b| *b == b'\n').enumerate() {
        let i = i as u64;
        let Ok(ev) = serde_json::from_slice::<AuditEvent>(line) else {
            return ChainVerdict::BrokenAt(i);
        };
        if ev.seq != i || ev.prev_digest != prev || ev.to_line().as_bytes() != line {
            return ChainVerdict::BrokenAt(i);
        }
        if ev.recompute_digest() != ev.this_digest {
            return ChainVerdict::BrokenAt(i);
        }
        prev = ev.this_digest;
    }
    ChainVerdict::Valid
}

#[derive(Debug, Default)]
struct LogState {
    events: Vec<AuditEvent>,
    sink: Option<BufWriter<File>>,
}

/// The append-only log. Appends are linearized through one lock; readers
/// take owned snapshots of a consistent prefix.
#[derive(Debug, Default)]
pub struct AuditLog {
    state: Mutex<LogState>,
}

impl AuditLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Opens (or creates) a file-backed log. An existing file must verify.
    pub fn open(path: &Path) -> Result<Self, LogError> {
        let events = if path.exists() {
            let text = std::fs::read(path)?;
            match verify_ndjson(&text) {
                ChainVerdict::Valid => parse_ndjson(std::str::from_utf8(&text).map_err(|e| LogError::Parse {
                    line: 0,
                    message: e.to_string(),
                })?)?,
                broken => return Err(LogError::Broken(broken)),
            }
        } else {
            Vec::new()
        };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(AuditLog { state: Mutex::new(LogState { events, sink: Some(BufWriter::new(file)) }) })
    }

    pub fn from_events(events: Vec<AuditEvent>) -> Self {
        AuditLog { state: Mutex::new(LogState { events, sink: None }) }
    }

    /// Appends an event; the only mutation the log supports.
    pub fn append<P: Serialize>(&self, kind: EventKind, task_id: Option<&TaskId>, payload: &P) -> AuditEvent {
        let payload = serde_json::to_value(payload).expect("audit payloads serialize");
        let mut state = self.state.lock().expect("audit log lock");
        let seq = state.events.len() as u64;
        let prev_digest = state.events.last().map(|e| e.this_digest).unwrap_or_else(genesis_digest);
        let this_digest = event_digest(seq, kind, task_id, &payload, &prev_digest);
        let ev = AuditEvent { seq, kind, task_id: task_id.cloned(), payload, prev_digest, this_digest };
        if let Some(sink) = state.sink.as_mut() {
            // A failed write leaves the in-memory chain authoritative; the
            // next successful open will report the file as broken.
            let _ = writeln!(sink, "{}", ev.to_line()).and_then(|_| sink.flush());
        }
        state.events.push(ev.clone());
        ev
    }

    pub fn snapshot(&self) -> Vec<AuditEvent> {
        self.state.lock().expect("audit log lock").events.clone()
    }

    pub fn len(&self) -> usize {
        self.state.lock().expect("audit log lock").events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_ndjson(&self) -> String {
        to_ndjson(&self.state.lock().expect("audit log lock").events)
    }
}
