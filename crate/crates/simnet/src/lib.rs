//! Deterministic discrete-event network simulation.
//!
//! A single-threaded [`Engine`] owns the clock, an ordered event queue and
//! every registered [`Node`]. Messages between nodes take a sampled
//! [`DelayModel`] delay per link; crash, restart and Byzantine-flag faults
//! are scheduled like any other event. Two runs with the same scenario and
//! seed yield byte-identical [`Trace`]s.

mod delay;
mod engine;
mod fault;
mod trace;

pub use delay::{DelayMap, DelayModel};
pub use engine::{Engine, Node, Outbox, SimError};
pub use fault::{validate_faults, ByzantineBehavior, Fault, FaultError};
pub use trace::{payload_digest, Trace, TraceEvent, TraceLine};
