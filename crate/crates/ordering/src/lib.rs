//! Ordering service run by a zone's witness committee.
//!
//! Witnesses agree on a single chain of blocks using leader-based
//! replication tolerant of minority crashes. The leader batches incoming
//! transactions with a [`BlockCutter`] (cut at a byte budget or on a timer)
//! and drives each cut block through log replication; a block is final once
//! a majority stores it.

mod cutter;
mod raft;

pub use cutter::BlockCutter;
pub use raft::{
    Input, LogEntry, Orderable, Output, RaftEvent, RaftMsg, RaftNode, Role,
    BLOCK_INTERVAL, ELECTION_TIMEOUT_MAX, ELECTION_TIMEOUT_MIN, FORWARD_RETRY,
    HEARTBEAT_INTERVAL, MAX_BLOCK_BYTES,
};
