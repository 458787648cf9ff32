//! Append-only audit log: authentication, submission, and round lifecycle
//! events, optionally mirrored to a line-delimited JSON file.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use fedscore_core::aggregator::ClientId;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditKind {
    Hello,
    Grant,
    Reject,
    Submit,
    Expire,
    RoundBegin,
    RoundEnd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub timestamp_ms: u64,
    pub kind: AuditKind,
    pub client_id: Option<ClientId>,
    pub round: Option<u64>,
    pub detail: String,
}

impl AuditEvent {
    pub fn new(
        kind: AuditKind,
        client_id: Option<ClientId>,
        round: Option<u64>,
        detail: impl Into<String>,
    ) -> Self {
        let timestamp_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        Self {
            timestamp_ms,
            kind,
            client_id,
            round,
            detail: detail.into(),
        }
    }
}

struct Inner {
    events: Vec<AuditEvent>,
    sink: Option<BufWriter<File>>,
}

/// Append-only event log. Concurrent appends serialize through a mutex;
/// entries are never modified or removed.
pub struct AuditLog {
    inner: Mutex<Inner>,
}

impl AuditLog {
    pub fn new() -> Self {
        Self {
            inner: Mutex::new(Inner {
                events: Vec::new(),
                sink: None,
            }),
        }
    }

    /// Log that also mirrors every event to a JSONL file as it happens.
    pub fn with_file(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let file = File::create(path)?;
        Ok(Self {
            inner: Mutex::new(Inner {
                events: Vec::new(),
                sink: Some(BufWriter::new(file)),
            }),
        })
    }

    pub fn append(&self, event: AuditEvent) {
        let mut inner = self.inner.lock().expect("audit log poisoned");
        if let Some(sink) = inner.sink.as_mut() {
            if let Ok(line) = serde_json::to_string(&event) {
                let _ = writeln!(sink, "{line}");
                let _ = sink.flush();
            }
        }
        inner.events.push(event);
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("audit log poisoned").events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Snapshot of all events in append order.
    pub fn events(&self) -> Vec<AuditEvent> {
        self.inner
            .lock()
            .expect("audit log poisoned")
            .events
            .clone()
    }

    pub fn count(&self, kind: AuditKind) -> usize {
        self.inner
            .lock()
            .expect("audit log poisoned")
            .events
            .iter()
            .filter(|e| e.kind == kind)
            .count()
    }
}

impl Default for AuditLog {
    fn default() -> Self {
        Self::new()
    }
}
