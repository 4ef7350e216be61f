//! Versioned key-value state underneath the zone contract.
//!
//! Every replica holds the same `CommittedState` and applies the same write
//! sets in the same order, so versions, digests, and iteration order must be
//! deterministic everywhere. Versions are block coordinates: the version of a
//! key is `(height << 16) | seq`, where `seq` numbers the writes applied while
//! committing that block (the expiry sweep takes seq 0, transactions follow).
//! A read set recording these versions pins exactly which committed writes an
//! execution observed.

use std::collections::BTreeMap;

use bdsas_core::codec::{CodecError, Decode, Encode, Reader};
use bdsas_core::{
    impl_codec_struct, sha256, ClientRecord, ContractParams, DeviceId, Digest, NodeId, SimTime,
    TokenAmount,
};
use serde::{Deserialize, Serialize};

use crate::channel::ChannelTable;
use crate::grant::{FeeRecord, Grant, PendingWitnessChange};

/// Version of a key: 0 means "never written"; otherwise a block coordinate.
pub type KeyVersion = u64;

/// Bits reserved for the intra-block write sequence.
pub const SEQ_BITS: u32 = 16;

/// Builds the version for write `seq` of block `height`.
pub fn version_at(height: u64, seq: u16) -> KeyVersion {
    (height << SEQ_BITS) | seq as u64
}

/// The block height a version was committed at.
pub fn version_height(v: KeyVersion) -> u64 {
    v >> SEQ_BITS
}

/// Addressable state. One key per channel index for occupancy, so an
/// availability change conflicts exactly with the assignments it would
/// invalidate, and with nothing else.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StateKey {
    /// Channel descriptor table (availability flags live here).
    Channels,
    /// Devices currently holding channel `i` under an active grant.
    ChannelOcc(u16),
    /// Zone contract parameters.
    Params,
    /// Current committee round and membership.
    Committee,
    /// Ordering-service membership.
    Witnesses,
    /// Devices allowed to request priority-tier access.
    PalRegistry,
    /// Registration record for a device.
    Client(DeviceId),
    /// Token balance of a device.
    Account(DeviceId),
    /// The device's grant (at most one non-terminal at a time).
    Grant(DeviceId),
    /// Escrowed fee for a grant, keyed by grant id.
    Fee(Digest),
    /// Witness-eligibility change awaiting witness votes.
    WitnessPending(DeviceId),
}

impl Encode for StateKey {
    fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            StateKey::Channels => out.push(0),
            StateKey::ChannelOcc(i) => {
                out.push(1);
                i.encode_into(out);
            }
            StateKey::Params => out.push(2),
            StateKey::Committee => out.push(3),
            StateKey::Witnesses => out.push(4),
            StateKey::PalRegistry => out.push(5),
            StateKey::Client(d) => {
                out.push(6);
                d.encode_into(out);
            }
            StateKey::Account(d) => {
                out.push(7);
                d.encode_into(out);
            }
            StateKey::Grant(d) => {
                out.push(8);
                d.encode_into(out);
            }
            StateKey::Fee(g) => {
                out.push(9);
                g.encode_into(out);
            }
            StateKey::WitnessPending(d) => {
                out.push(10);
                d.encode_into(out);
            }
        }
    }
}

impl Decode for StateKey {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(match r.byte()? {
            0 => StateKey::Channels,
            1 => StateKey::ChannelOcc(u16::decode_from(r)?),
            2 => StateKey::Params,
            3 => StateKey::Committee,
            4 => StateKey::Witnesses,
            5 => StateKey::PalRegistry,
            6 => StateKey::Client(DeviceId::decode_from(r)?),
            7 => StateKey::Account(DeviceId::decode_from(r)?),
            8 => StateKey::Grant(DeviceId::decode_from(r)?),
            9 => StateKey::Fee(Digest::decode_from(r)?),
            10 => StateKey::WitnessPending(DeviceId::decode_from(r)?),
            t => return Err(CodecError::BadTag { ty: "StateKey", tag: t }),
        })
    }
}

/// Committee round plus membership, stored under `StateKey::Committee`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitteeInfo {
    pub round: u64,
    pub members: std::collections::BTreeSet<NodeId>,
}

impl_codec_struct!(CommitteeInfo { round, members });

/// Value stored under a `StateKey`. Variants pair one-to-one with key kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StateValue {
    Channels(ChannelTable),
    Occupancy(std::collections::BTreeSet<DeviceId>),
    Params(ContractParams),
    Committee(CommitteeInfo),
    Witnesses(std::collections::BTreeSet<NodeId>),
    PalRegistry(std::collections::BTreeSet<DeviceId>),
    Client(ClientRecord),
    Account(TokenAmount),
    Grant(Grant),
    Fee(FeeRecord),
    WitnessPending(PendingWitnessChange),
}

impl Encode for StateValue {
    fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            StateValue::Channels(v) => {
                out.push(0);
                v.encode_into(out);
            }
            StateValue::Occupancy(v) => {
                out.push(1);
                v.encode_into(out);
            }
            StateValue::Params(v) => {
                out.push(2);
                v.encode_into(out);
            }
            StateValue::Committee(v) => {
                out.push(3);
                v.encode_into(out);
            }
            StateValue::Witnesses(v) => {
                out.push(4);
                v.encode_into(out);
            }
            StateValue::PalRegistry(v) => {
                out.push(5);
                v.encode_into(out);
            }
            StateValue::Client(v) => {
                out.push(6);
                v.encode_into(out);
            }
            StateValue::Account(v) => {
                out.push(7);
                v.encode_into(out);
            }
            StateValue::Grant(v) => {
                out.push(8);
                v.encode_into(out);
            }
            StateValue::Fee(v) => {
                out.push(9);
                v.encode_into(out);
            }
            StateValue::WitnessPending(v) => {
                out.push(10);
                v.encode_into(out);
            }
        }
    }
}

impl Decode for StateValue {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(match r.byte()? {
            0 => StateValue::Channels(ChannelTable::decode_from(r)?),
            1 => StateValue::Occupancy(Decode::decode_from(r)?),
            2 => StateValue::Params(ContractParams::decode_from(r)?),
            3 => StateValue::Committee(CommitteeInfo::decode_from(r)?),
            4 => StateValue::Witnesses(Decode::decode_from(r)?),
            5 => StateValue::PalRegistry(Decode::decode_from(r)?),
            6 => StateValue::Client(ClientRecord::decode_from(r)?),
            7 => StateValue::Account(TokenAmount::decode_from(r)?),
            8 => StateValue::Grant(Grant::decode_from(r)?),
            9 => StateValue::Fee(FeeRecord::decode_from(r)?),
            10 => StateValue::WitnessPending(PendingWitnessChange::decode_from(r)?),
            t => return Err(CodecError::BadTag { ty: "StateValue", tag: t }),
        })
    }
}

/// Keys read during execution, with the committed version each read saw.
pub type ReadSet = Vec<(StateKey, KeyVersion)>;

/// Keys written during execution; `None` deletes the key.
pub type WriteSet = Vec<(StateKey, Option<StateValue>)>;

/// Replicated contract state: every honest replica of a zone holds an
/// identical copy after each block.
#[derive(Debug, Clone, Default)]
pub struct CommittedState {
    entries: BTreeMap<StateKey, (StateValue, KeyVersion)>,
    /// Cut time of the last committed block; executions read this as "now".
    state_time: SimTime,
}

impl CommittedState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &StateKey) -> Option<&StateValue> {
        self.entries.get(key).map(|(v, _)| v)
    }

    /// Version of a key; 0 for keys never written (or deleted).
    pub fn version(&self, key: &StateKey) -> KeyVersion {
        self.entries.get(key).map(|(_, v)| *v).unwrap_or(0)
    }

    pub fn state_time(&self) -> SimTime {
        self.state_time
    }

    pub fn set_state_time(&mut self, t: SimTime) {
        self.state_time = t;
    }

    /// Applies one write at an explicit block coordinate.
    pub fn apply_one(&mut self, key: StateKey, value: Option<StateValue>, version: KeyVersion) {
        match value {
            Some(v) => {
                self.entries.insert(key, (v, version));
            }
            None => {
                self.entries.remove(&key);
            }
        }
    }

    /// Applies a whole write set at one block coordinate. All writes of one
    /// transaction share a version; the read-your-write buffering inside
    /// `ExecView` means a write set never contains the same key twice.
    pub fn apply_write_set(&mut self, ws: &WriteSet, version: KeyVersion) {
        for (key, value) in ws {
            self.apply_one(key.clone(), value.clone(), version);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StateKey, &StateValue, KeyVersion)> {
        self.entries.iter().map(|(k, (v, ver))| (k, v, *ver))
    }

    /// All grants in the state, in device order.
    pub fn grants(&self) -> impl Iterator<Item = &Grant> {
        self.entries.iter().filter_map(|(k, (v, _))| match (k, v) {
            (StateKey::Grant(_), StateValue::Grant(g)) => Some(g),
            _ => None,
        })
    }

    /// All pending witness-eligibility changes, in device order.
    pub fn pending_witness_changes(&self) -> impl Iterator<Item = &PendingWitnessChange> {
        self.entries.iter().filter_map(|(k, (v, _))| match (k, v) {
            (StateKey::WitnessPending(_), StateValue::WitnessPending(p)) => Some(p),
            _ => None,
        })
    }

    /// Digest over the full contents, versions included. Two replicas agree
    /// on this iff they committed the same writes at the same coordinates.
    pub fn digest(&self) -> Digest {
        let mut buf = Vec::with_capacity(64 + self.entries.len() * 64);
        buf.extend_from_slice(b"bdsas-state");
        self.state_time.encode_into(&mut buf);
        (self.entries.len() as u32).encode_into(&mut buf);
        for (k, (v, ver)) in &self.entries {
            k.encode_into(&mut buf);
            v.encode_into(&mut buf);
            ver.encode_into(&mut buf);
        }
        sha256(&buf)
    }
}

/// Buffered execution view over a `CommittedState`: reads record the base
/// version they observed, writes stay local until extracted. Speculative by
/// construction; nothing touches the base state.
pub struct ExecView<'a> {
    base: &'a CommittedState,
    reads: BTreeMap<StateKey, KeyVersion>,
    writes: BTreeMap<StateKey, Option<StateValue>>,
}

impl<'a> ExecView<'a> {
    pub fn new(base: &'a CommittedState) -> Self {
        Self { base, reads: BTreeMap::new(), writes: BTreeMap::new() }
    }

    /// Execution's clock: the cut time of the last committed block, so every
    /// endorser computes with the same "now".
    pub fn now(&self) -> SimTime {
        self.base.state_time()
    }

    /// Read through the write buffer; first reads record the base version.
    pub fn get(&mut self, key: &StateKey) -> Option<StateValue> {
        if let Some(buffered) = self.writes.get(key) {
            return buffered.clone();
        }
        self.reads.entry(key.clone()).or_insert_with(|| self.base.version(key));
        self.base.get(key).cloned()
    }

    pub fn put(&mut self, key: StateKey, value: StateValue) {
        self.writes.insert(key, Some(value));
    }

    pub fn delete(&mut self, key: StateKey) {
        self.writes.insert(key, None);
    }

    /// Extracts the recorded read set and buffered write set, consuming the
    /// view. Order is the BTreeMap key order, identical on every endorser.
    pub fn into_rw_sets(self) -> (ReadSet, WriteSet) {
        let reads = self.reads.into_iter().collect();
        let writes = self.writes.into_iter().collect();
        (reads, writes)
    }
}

/// First-committer-wins check: every read version must still be current.
/// Returns the first stale key for diagnostics.
pub fn mvcc_check(state: &CommittedState, reads: &ReadSet) -> Result<(), StateKey> {
    for (key, seen) in reads {
        if state.version(key) != *seen {
            return Err(key.clone());
        }
    }
    Ok(())
}
