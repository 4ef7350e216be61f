//! Zone spectrum contract: versioned state, channel assignment, transaction
//! execution, and the device-side radio state machine.
//!
//! Execution here is deliberately host-free. Peers call [`execute`] over an
//! [`ExecView`] to endorse, the commit path calls [`expire_sweep`] plus
//! [`mvcc_check`] plus `apply_write_set`, and everything in between is pure
//! data. The ordering and networking layers live in other crates.

pub mod alloc;
pub mod channel;
pub mod exec;
pub mod fsm;
pub mod grant;
pub mod state;

pub use alloc::{allocate, AllocEnv, AllocOutcome, AllocRequest};
pub use channel::{ChannelDescriptor, ChannelTable};
pub use exec::{
    execute, expire_sweep, genesis_state, ExecError, ExecOutcome, GenesisConfig, SweepOutcome,
};
pub use fsm::{ClientFsm, FsmAction, HeldGrant};
pub use grant::{
    Assignment, Decision, DenialReason, FeeRecord, Grant, GrantState, OccupancyMap,
    PendingWitnessChange, HEARTBEAT_GRACE,
};
pub use state::{
    mvcc_check, version_at, version_height, CommitteeInfo, CommittedState, ExecView, KeyVersion,
    ReadSet, StateKey, StateValue, WriteSet,
};
