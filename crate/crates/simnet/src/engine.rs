//! The discrete-event loop.
//!
//! One queue, one clock, one thread. Every node is stepped only from here,
//! so node implementations need no synchronization. Determinism rests on
//! three rules: events process in (deliver-at, sequence) order; the engine
//! iterates nodes in registration order, never by name; and all randomness
//! flows from the single seeded generator.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, BTreeMap};

use bdsas_core::codec::Encode;
use bdsas_core::{NodeId, SimTime};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::delay::DelayMap;
use crate::fault::{validate_faults, ByzantineBehavior, Fault, FaultError};
use crate::trace::{payload_digest, Trace, TraceEvent};

/// A protocol participant. Implementations hold all their own state; the
/// engine owns the clock, the wires and the lifecycle.
pub trait Node {
    type Msg: Encode;

    fn on_message(&mut self, from: &NodeId, msg: Self::Msg, now: SimTime, out: &mut Outbox<Self::Msg>);

    /// Called when the clock reaches the instant this node asked for via
    /// [`Node::next_wake`].
    fn on_wake(&mut self, now: SimTime, out: &mut Outbox<Self::Msg>);

    /// Earliest instant the node wants control, if any. Re-read after every
    /// step; returning a past instant means "immediately".
    fn next_wake(&self) -> Option<SimTime>;

    /// Crash recovery: volatile state is gone, durable state survives.
    fn on_restart(&mut self, now: SimTime, out: &mut Outbox<Self::Msg>);

    /// The node switches to a scripted misbehavior from now on.
    fn on_byzantine(&mut self, behavior: ByzantineBehavior) {
        let _ = behavior;
    }
}

/// Messages a node emits during one step.
pub struct Outbox<M> {
    sends: Vec<(NodeId, M)>,
}

impl<M> Outbox<M> {
    fn new() -> Self {
        Outbox { sends: Vec::new() }
    }

    pub fn send(&mut self, to: &NodeId, msg: M) {
        self.sends.push((to.clone(), msg));
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("event cap exceeded: {processed} events processed, queue still holds {queued}")]
    Livelock { processed: u64, queued: usize },
    #[error(transparent)]
    Fault(#[from] FaultError),
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
}

enum Payload<M> {
    Deliver { from: NodeId, msg: M, digest: bdsas_core::Digest },
    Wake { node: usize },
    Crash { node: usize },
    Restart { node: usize },
    Byzantine { node: usize, behavior: ByzantineBehavior },
}

struct QEntry<M> {
    at: SimTime,
    seq: u64,
    to: usize,
    payload: Payload<M>,
}

impl<M> PartialEq for QEntry<M> {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}
impl<M> Eq for QEntry<M> {}
impl<M> PartialOrd for QEntry<M> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<M> Ord for QEntry<M> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

struct Slot<N> {
    id: NodeId,
    node: N,
    up: bool,
    armed_wake: Option<SimTime>,
    faults: Vec<Fault>,
}

pub struct Engine<N: Node> {
    nodes: Vec<Slot<N>>,
    index: BTreeMap<NodeId, usize>,
    queue: BinaryHeap<Reverse<QEntry<N::Msg>>>,
    seq: u64,
    now: SimTime,
    rng: ChaCha8Rng,
    pub delays: DelayMap,
    trace: Trace,
    processed: u64,
    /// Hard stop against event-loop livelock; raise it for long benches.
    pub max_events: u64,
}

impl<N: Node> Engine<N> {
    pub fn new(seed: u64, delays: DelayMap) -> Self {
        Engine {
            nodes: Vec::new(),
            index: BTreeMap::new(),
            queue: BinaryHeap::new(),
            seq: 0,
            now: SimTime::ZERO,
            rng: ChaCha8Rng::seed_from_u64(seed),
            delays,
            trace: Trace::new(),
            processed: 0,
            max_events: 50_000_000,
        }
    }

    /// Registration order is the engine's iteration order everywhere, which
    /// keeps runs byte-stable and makes pure relabelings isomorphic.
    pub fn add_node(&mut self, id: NodeId, node: N) -> Result<(), SimError> {
        if self.index.contains_key(&id) {
            return Err(SimError::DuplicateNode(id));
        }
        self.index.insert(id.clone(), self.nodes.len());
        self.nodes.push(Slot { id, node, up: true, armed_wake: None, faults: Vec::new() });
        Ok(())
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn node(&self, id: &NodeId) -> &N {
        &self.nodes[self.index[id]].node
    }

    pub fn node_mut(&mut self, id: &NodeId) -> &mut N {
        let i = self.index[id];
        &mut self.nodes[i].node
    }

    pub fn ids(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.iter().map(|s| &s.id)
    }

    pub fn is_up(&self, id: &NodeId) -> bool {
        self.nodes[self.index[id]].up
    }

    /// Declares a lifecycle fault. The whole per-node fault set is
    /// re-validated, so contradictory scripts are rejected before they run.
    pub fn fault(&mut self, id: &NodeId, fault: Fault) -> Result<(), SimError> {
        let i = *self
            .index
            .get(id)
            .ok_or_else(|| FaultError::UnknownNode(id.clone()))?;
        let mut faults = self.nodes[i].faults.clone();
        faults.push(fault);
        validate_faults(id, &faults)?;
        self.nodes[i].faults = faults;
        let payload = match fault {
            Fault::CrashAt(_) => Payload::Crash { node: i },
            Fault::RestartAt(_) => Payload::Restart { node: i },
            Fault::ByzantineFrom(_, b) => Payload::Byzantine { node: i, behavior: b },
        };
        self.push(fault.at(), i, payload);
        Ok(())
    }

    /// Injects a message from outside the simulated network (bootstrap,
    /// test stimulus). Delivery at `at`, no sampled delay.
    pub fn inject(&mut self, at: SimTime, from: &NodeId, to: &NodeId, msg: N::Msg) {
        assert!(at >= self.now, "cannot schedule into the past");
        let digest = payload_digest(&msg.encoded());
        let i = self.index[to];
        self.push(at, i, Payload::Deliver { from: from.clone(), msg, digest });
    }

    fn push(&mut self, at: SimTime, to: usize, payload: Payload<N::Msg>) {
        debug_assert!(at >= self.now, "events may only be scheduled at or after now");
        self.seq += 1;
        self.queue.push(Reverse(QEntry { at: at.max(self.now), seq: self.seq, to, payload }));
    }

    /// Runs until the queue drains or the clock passes `until`; the clock
    /// ends at `until` either way.
    pub fn run_until(&mut self, until: SimTime) -> Result<(), SimError> {
        self.pump(Some(until))?;
        self.now = self.now.max(until);
        Ok(())
    }

    /// Runs until no events remain, leaving the clock at the last event.
    /// The cap is the only brake, so a node that perpetually re-arms its
    /// own timer trips `Livelock` rather than hanging.
    pub fn run_to_quiescence(&mut self) -> Result<(), SimError> {
        self.pump(None)
    }

    fn pump(&mut self, until: Option<SimTime>) -> Result<(), SimError> {
        self.arm_all();
        while let Some(Reverse(head)) = self.queue.peek() {
            if until.is_some_and(|u| head.at > u) {
                break;
            }
            let entry = self.queue.pop().unwrap().0;
            debug_assert!(entry.at >= self.now, "clock must be monotone");
            self.now = entry.at;
            self.processed += 1;
            if self.processed > self.max_events {
                return Err(SimError::Livelock {
                    processed: self.processed,
                    queued: self.queue.len(),
                });
            }
            self.dispatch(entry);
        }
        Ok(())
    }

    fn arm_all(&mut self) {
        for i in 0..self.nodes.len() {
            self.arm(i);
        }
    }

    fn arm(&mut self, i: usize) {
        if !self.nodes[i].up {
            return;
        }
        let Some(want) = self.nodes[i].node.next_wake() else { return };
        let want = want.max(self.now);
        if self.nodes[i].armed_wake == Some(want) {
            return;
        }
        self.nodes[i].armed_wake = Some(want);
        self.push(want, i, Payload::Wake { node: i });
    }

    fn dispatch(&mut self, entry: QEntry<N::Msg>) {
        let i = entry.to;
        let seq = entry.seq;
        match entry.payload {
            Payload::Deliver { from, msg, digest } => {
                if !self.nodes[i].up {
                    self.trace.record(
                        self.now,
                        seq,
                        TraceEvent::DropCrashed { from, to: self.nodes[i].id.clone(), payload: digest },
                    );
                    return;
                }
                self.trace.record(
                    self.now,
                    seq,
                    TraceEvent::Deliver { from: from.clone(), to: self.nodes[i].id.clone(), payload: digest },
                );
                let mut out = Outbox::new();
                let now = self.now;
                self.nodes[i].node.on_message(&from, msg, now, &mut out);
                self.flush(i, out);
            }
            Payload::Wake { node } => {
                let slot = &mut self.nodes[node];
                if !slot.up {
                    return;
                }
                if slot.armed_wake == Some(self.now) {
                    slot.armed_wake = None;
                }
                // A wake is stale if the node no longer wants this instant.
                match slot.node.next_wake() {
                    Some(w) if w.max(self.now) == self.now => {
                        let mut out = Outbox::new();
                        let now = self.now;
                        slot.node.on_wake(now, &mut out);
                        self.flush(node, out);
                    }
                    _ => self.arm(node),
                }
            }
            Payload::Crash { node } => {
                self.nodes[node].up = false;
                self.nodes[node].armed_wake = None;
                self.trace
                    .record(self.now, seq, TraceEvent::Crash { node: self.nodes[node].id.clone() });
            }
            Payload::Restart { node } => {
                self.nodes[node].up = true;
                self.trace
                    .record(self.now, seq, TraceEvent::Restart { node: self.nodes[node].id.clone() });
                let mut out = Outbox::new();
                let now = self.now;
                self.nodes[node].node.on_restart(now, &mut out);
                self.flush(node, out);
            }
            Payload::Byzantine { node, behavior } => {
                self.trace.record(
                    self.now,
                    seq,
                    TraceEvent::Byzantine {
                        node: self.nodes[node].id.clone(),
                        behavior: behavior.name().to_string(),
                    },
                );
                self.nodes[node].node.on_byzantine(behavior);
            }
        }
        self.arm(i);
    }

    /// Routes one step's output onto the wires: sample the link delay,
    /// stamp the trace, schedule delivery.
    fn flush(&mut self, from_idx: usize, out: Outbox<N::Msg>) {
        let from = self.nodes[from_idx].id.clone();
        for (to, msg) in out.sends {
            let Some(&to_idx) = self.index.get(&to) else {
                panic!("{from} sent to unknown node {to}");
            };
            let digest = payload_digest(&msg.encoded());
            self.seq += 1;
            self.trace.record(
                self.now,
                self.seq,
                TraceEvent::Send { from: from.clone(), to: to.clone(), payload: digest },
            );
            let delay = self.delays.model_for(&from, &to).sample(&mut self.rng);
            self.push(self.now + delay, to_idx, Payload::Deliver {
                from: from.clone(),
                msg,
                digest,
            });
        }
    }
}
