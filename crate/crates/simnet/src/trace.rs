//! The run record: one line per observable event, in processing order.
//!
//! The trace is the ground truth for reproducibility checks (two runs of
//! the same scenario and seed must produce byte-identical traces) and for
//! after-the-fact audits, so entries carry payload digests rather than
//! payloads: enough to compare runs and bind content, cheap enough to keep
//! for every message.

use std::fmt::Write as _;

use bdsas_core::{sha256, Digest, NodeId, SimTime};
use sha2::{Digest as _, Sha256};

#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEvent {
    /// A node handed a message to the network.
    Send { from: NodeId, to: NodeId, payload: Digest },
    /// The network delivered a message.
    Deliver { from: NodeId, to: NodeId, payload: Digest },
    /// The destination was down at delivery time; the message is gone.
    DropCrashed { from: NodeId, to: NodeId, payload: Digest },
    Crash { node: NodeId },
    Restart { node: NodeId },
    Byzantine { node: NodeId, behavior: String },
}

#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TraceLine {
    pub at: SimTime,
    pub seq: u64,
    pub event: TraceEvent,
}

#[derive(Clone, Default)]
pub struct Trace {
    lines: Vec<TraceLine>,
    hasher: Sha256,
}

impl std::fmt::Debug for Trace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Trace").field("lines", &self.lines.len()).finish()
    }
}

impl Trace {
    pub fn new() -> Self {
        Trace::default()
    }

    pub(crate) fn record(&mut self, at: SimTime, seq: u64, event: TraceEvent) {
        let line = TraceLine { at, seq, event };
        self.hasher.update(line.render().as_bytes());
        self.hasher.update(b"\n");
        self.lines.push(line);
    }

    pub fn lines(&self) -> &[TraceLine] {
        &self.lines
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    /// Digest over the rendered lines; the identity of a run.
    pub fn digest(&self) -> Digest {
        Digest(self.hasher.clone().finalize().into())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            out.push_str(&serde_json::to_string(line).expect("trace lines serialize"));
            out.push('\n');
        }
        out
    }
}

impl TraceLine {
    /// Stable textual form, independent of serde details.
    pub fn render(&self) -> String {
        let mut s = format!("{} {} ", self.at.0, self.seq);
        match &self.event {
            TraceEvent::Send { from, to, payload } => {
                let _ = write!(s, "send {from} {to} {payload}");
            }
            TraceEvent::Deliver { from, to, payload } => {
                let _ = write!(s, "deliver {from} {to} {payload}");
            }
            TraceEvent::DropCrashed { from, to, payload } => {
                let _ = write!(s, "drop-crashed {from} {to} {payload}");
            }
            TraceEvent::Crash { node } => {
                let _ = write!(s, "crash {node}");
            }
            TraceEvent::Restart { node } => {
                let _ = write!(s, "restart {node}");
            }
            TraceEvent::Byzantine { node, behavior } => {
                let _ = write!(s, "byzantine {node} {behavior}");
            }
        }
        s
    }
}

/// Payload digests bind message bytes into the trace.
pub fn payload_digest(bytes: &[u8]) -> Digest {
    sha256(bytes)
}
