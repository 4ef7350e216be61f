//! Transaction execution against a buffered state view.
//!
//! Execution is speculative and endorsement-oriented: it never mutates
//! committed state, only records reads (with versions) and buffers writes.
//! Every peer executing the same transaction over the same committed state
//! must produce byte-identical read sets, write sets, and results; all
//! iteration in here runs over ordered collections for that reason.
//!
//! Spectrum denials are successful executions with a `Denied` outcome and an
//! empty write set, not errors. `ExecError` is reserved for transactions that
//! are malformed at the protocol level (wrong proposer role, unknown channel
//! index, duplicate registration); those endorse as errors and the ordered
//! transaction is flagged invalid at commit.

use std::collections::BTreeSet;

use bdsas_core::codec::{CodecError, Decode, Encode, Reader};
use bdsas_core::{
    split_fee, AccessRequest, CTxPayload, ClientRecord, ContractParams, DTxPayload, DeviceId,
    Digest, NodeId, RequestType, SimDuration, SimTime, TokenAmount, Transaction, TxPayload,
};
use serde::{Deserialize, Serialize};

use crate::alloc::{allocate, AllocEnv, AllocRequest};
use crate::channel::ChannelTable;
use crate::grant::{
    Assignment, Decision, DenialReason, FeeRecord, Grant, GrantState, PendingWitnessChange,
    HEARTBEAT_GRACE,
};
use crate::state::{version_at, CommitteeInfo, CommittedState, ExecView, StateKey, StateValue};

/// Protocol-level execution failures. These are deterministic properties of
/// (state, transaction), so every honest endorser reports the same one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExecError {
    /// R-Tx and S-Tx belong to the coordination chain, not a zone chain.
    WrongChain,
    /// Proposer must be a current committee member for this payload.
    NotCommittee,
    /// Proposer must be a current witness for this payload.
    NotWitness,
    /// Channel index outside the zone's table.
    UnknownChannel(u16),
    /// Device already registered.
    DuplicateRegistration,
    /// Device not registered.
    UnknownDevice,
    /// An eligibility change for this device is already awaiting votes.
    PendingExists,
    /// No eligibility change awaiting votes for this device.
    NoPending,
    /// No escrow record under that grant id.
    UnknownFee,
    /// Committee update round not newer than the current round.
    StaleRound,
    /// Parameter update rejected by sanity bounds.
    BadParams,
    /// A key the genesis block must populate is missing.
    MissingState(String),
}

impl std::fmt::Display for ExecError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExecError::WrongChain => write!(f, "transaction family not valid on a zone chain"),
            ExecError::NotCommittee => write!(f, "proposer is not a committee member"),
            ExecError::NotWitness => write!(f, "proposer is not a witness"),
            ExecError::UnknownChannel(i) => write!(f, "unknown channel index {i}"),
            ExecError::DuplicateRegistration => write!(f, "device already registered"),
            ExecError::UnknownDevice => write!(f, "device not registered"),
            ExecError::PendingExists => write!(f, "eligibility change already pending"),
            ExecError::NoPending => write!(f, "no pending eligibility change"),
            ExecError::UnknownFee => write!(f, "no escrow record for grant id"),
            ExecError::StaleRound => write!(f, "committee round is not newer"),
            ExecError::BadParams => write!(f, "parameter update out of bounds"),
            ExecError::MissingState(k) => write!(f, "genesis state key missing: {k}"),
        }
    }
}

impl std::error::Error for ExecError {}

impl Encode for ExecError {
    fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            ExecError::WrongChain => out.push(0),
            ExecError::NotCommittee => out.push(1),
            ExecError::NotWitness => out.push(2),
            ExecError::UnknownChannel(i) => {
                out.push(3);
                i.encode_into(out);
            }
            ExecError::DuplicateRegistration => out.push(4),
            ExecError::UnknownDevice => out.push(5),
            ExecError::PendingExists => out.push(6),
            ExecError::NoPending => out.push(7),
            ExecError::UnknownFee => out.push(8),
            ExecError::StaleRound => out.push(9),
            ExecError::BadParams => out.push(10),
            ExecError::MissingState(k) => {
                out.push(11);
                k.encode_into(out);
            }
        }
    }
}

impl Decode for ExecError {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(match r.byte()? {
            0 => ExecError::WrongChain,
            1 => ExecError::NotCommittee,
            2 => ExecError::NotWitness,
            3 => ExecError::UnknownChannel(u16::decode_from(r)?),
            4 => ExecError::DuplicateRegistration,
            5 => ExecError::UnknownDevice,
            6 => ExecError::PendingExists,
            7 => ExecError::NoPending,
            8 => ExecError::UnknownFee,
            9 => ExecError::StaleRound,
            10 => ExecError::BadParams,
            11 => ExecError::MissingState(String::decode_from(r)?),
            t => return Err(CodecError::BadTag { ty: "ExecError", tag: t }),
        })
    }
}

/// Successful execution result, carried inside endorsements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ExecOutcome {
    /// Spectrum request processed; the assignment says granted or denied.
    Assignment(Assignment),
    /// Administrative payload applied.
    Applied,
}

impl Encode for ExecOutcome {
    fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            ExecOutcome::Assignment(a) => {
                out.push(0);
                a.encode_into(out);
            }
            ExecOutcome::Applied => out.push(1),
        }
    }
}

impl Decode for ExecOutcome {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(match r.byte()? {
            0 => ExecOutcome::Assignment(Assignment::decode_from(r)?),
            1 => ExecOutcome::Applied,
            t => return Err(CodecError::BadTag { ty: "ExecOutcome", tag: t }),
        })
    }
}

/// Executes one transaction against the view. `tx_digest` seeds grant ids.
pub fn execute(
    view: &mut ExecView<'_>,
    tx: &Transaction,
    tx_digest: Digest,
) -> Result<ExecOutcome, ExecError> {
    match &tx.payload {
        TxPayload::Access(req) => {
            Ok(ExecOutcome::Assignment(exec_access(view, req, tx_digest)?))
        }
        TxPayload::Channel(c) => {
            exec_ctx(view, &tx.proposer, c)?;
            Ok(ExecOutcome::Applied)
        }
        TxPayload::Device(d) => {
            exec_dtx(view, &tx.proposer, d)?;
            Ok(ExecOutcome::Applied)
        }
        TxPayload::Regulatory(_) | TxPayload::Sync(_) => Err(ExecError::WrongChain),
    }
}

// Typed accessors. Absent keys that genesis always writes are protocol
// corruption, reported as MissingState; per-device keys default naturally.

fn params(view: &mut ExecView<'_>) -> Result<ContractParams, ExecError> {
    match view.get(&StateKey::Params) {
        Some(StateValue::Params(p)) => Ok(p),
        _ => Err(ExecError::MissingState("params".into())),
    }
}

fn channel_table(view: &mut ExecView<'_>) -> Result<ChannelTable, ExecError> {
    match view.get(&StateKey::Channels) {
        Some(StateValue::Channels(t)) => Ok(t),
        _ => Err(ExecError::MissingState("channels".into())),
    }
}

fn committee(view: &mut ExecView<'_>) -> Result<CommitteeInfo, ExecError> {
    match view.get(&StateKey::Committee) {
        Some(StateValue::Committee(c)) => Ok(c),
        _ => Err(ExecError::MissingState("committee".into())),
    }
}

fn witnesses(view: &mut ExecView<'_>) -> Result<BTreeSet<NodeId>, ExecError> {
    match view.get(&StateKey::Witnesses) {
        Some(StateValue::Witnesses(w)) => Ok(w),
        _ => Err(ExecError::MissingState("witnesses".into())),
    }
}

fn pal_registry(view: &mut ExecView<'_>) -> BTreeSet<DeviceId> {
    match view.get(&StateKey::PalRegistry) {
        Some(StateValue::PalRegistry(p)) => p,
        _ => BTreeSet::new(),
    }
}

fn occupancy(view: &mut ExecView<'_>, ch: u16) -> BTreeSet<DeviceId> {
    match view.get(&StateKey::ChannelOcc(ch)) {
        Some(StateValue::Occupancy(o)) => o,
        _ => BTreeSet::new(),
    }
}

fn client(view: &mut ExecView<'_>, dev: &DeviceId) -> Option<ClientRecord> {
    match view.get(&StateKey::Client(dev.clone())) {
        Some(StateValue::Client(c)) => Some(c),
        _ => None,
    }
}

fn account(view: &mut ExecView<'_>, dev: &DeviceId) -> TokenAmount {
    match view.get(&StateKey::Account(dev.clone())) {
        Some(StateValue::Account(a)) => a,
        _ => TokenAmount::ZERO,
    }
}

fn grant_of(view: &mut ExecView<'_>, dev: &DeviceId) -> Option<Grant> {
    match view.get(&StateKey::Grant(dev.clone())) {
        Some(StateValue::Grant(g)) => Some(g),
        _ => None,
    }
}

fn fee_record(view: &mut ExecView<'_>, gid: &Digest) -> Option<FeeRecord> {
    match view.get(&StateKey::Fee(*gid)) {
        Some(StateValue::Fee(f)) => Some(f),
        _ => None,
    }
}

fn pending_change(view: &mut ExecView<'_>, dev: &DeviceId) -> Option<PendingWitnessChange> {
    match view.get(&StateKey::WitnessPending(dev.clone())) {
        Some(StateValue::WitnessPending(p)) => Some(p),
        _ => None,
    }
}

fn put_grant(view: &mut ExecView<'_>, g: Grant) {
    view.put(StateKey::Grant(g.device.clone()), StateValue::Grant(g));
}

fn occ_remove(view: &mut ExecView<'_>, ch: u16, dev: &DeviceId) {
    let mut occ = occupancy(view, ch);
    occ.remove(dev);
    if occ.is_empty() {
        view.delete(StateKey::ChannelOcc(ch));
    } else {
        view.put(StateKey::ChannelOcc(ch), StateValue::Occupancy(occ));
    }
}

fn occ_insert(view: &mut ExecView<'_>, ch: u16, dev: &DeviceId) {
    let mut occ = occupancy(view, ch);
    occ.insert(dev.clone());
    view.put(StateKey::ChannelOcc(ch), StateValue::Occupancy(occ));
}

/// Suspends a grant in place: spectrum is returned, the record stays until
/// relinquished or expired. The device keeps its one-grant slot occupied.
fn suspend_grant(view: &mut ExecView<'_>, mut g: Grant) {
    for ch in std::mem::take(&mut g.channels) {
        occ_remove(view, ch, &g.device);
    }
    g.state = GrantState::Suspended;
    put_grant(view, g);
}

fn exec_access(
    view: &mut ExecView<'_>,
    req: &AccessRequest,
    tx_digest: Digest,
) -> Result<Assignment, ExecError> {
    let p = params(view)?;
    let now = view.now();
    let dev = &req.device;

    let Some(record) = client(view, dev) else {
        return Ok(Assignment::denied(dev.clone(), req.request, DenialReason::Unregistered));
    };

    match req.request {
        RequestType::Grant => {
            if let Some(g) = grant_of(view, dev) {
                // One non-terminal grant per device, suspended included.
                if !g.state.is_terminal() {
                    return Ok(Assignment::denied(
                        dev.clone(),
                        req.request,
                        DenialReason::AlreadyGranted,
                    ));
                }
            }
            if req.fee_deposit < p.grant_fee || account(view, dev) < req.fee_deposit {
                return Ok(Assignment::denied(
                    dev.clone(),
                    req.request,
                    DenialReason::InsufficientFee,
                ));
            }

            let table = channel_table(view)?;
            let candidates: Vec<u16> = match &req.desired {
                Some(range) => table.indices_within(range),
                None => (0..table.len() as u16).collect(),
            }
            .into_iter()
            .filter(|&i| table.get(i).map(|d| d.available).unwrap_or(false))
            .collect();

            let registry = pal_registry(view);
            let priority = record.category == bdsas_core::Category::Pal && registry.contains(dev);
            let alloc_req = AllocRequest {
                device: dev,
                priority,
                neighbors: &record.neighbors,
                count: p.channels_per_grant as usize,
                candidates: &candidates,
                reserved: &p.pal_reserved,
            };
            let Some(found) = run_allocation(view, &alloc_req) else {
                return Ok(Assignment::denied(
                    dev.clone(),
                    req.request,
                    DenialReason::NoSpectrum,
                ));
            };

            // Charge the full deposit and escrow it split across the current
            // committee. Denied requests never reach this point, so denials
            // never pay.
            let fee = req.fee_deposit;
            let balance = account(view, dev);
            view.put(
                StateKey::Account(dev.clone()),
                StateValue::Account(balance.checked_sub(fee).expect("balance checked above")),
            );
            let members: Vec<NodeId> = committee(view)?.members.into_iter().collect();
            let splits = split_fee(fee, &members);
            let grant_id = Grant::grant_id_for(&tx_digest);
            view.put(
                StateKey::Fee(grant_id),
                StateValue::Fee(FeeRecord {
                    grant_id,
                    payer: dev.clone(),
                    splits,
                    cleared: false,
                }),
            );

            for blocked in &found.preempted {
                if let Some(victim) = grant_of(view, blocked) {
                    if victim.state.occupies() {
                        suspend_grant(view, victim);
                    }
                }
            }
            for &ch in &found.channels {
                occ_insert(view, ch, dev);
            }
            let expire_time = now + p.grant_lifetime;
            let grant = Grant {
                id: grant_id,
                device: dev.clone(),
                channels: found.channels.clone(),
                eirp_dbm: req.eirp_dbm,
                granted_at: now,
                expire_time,
                heartbeat_interval: p.heartbeat_interval,
                last_heartbeat: None,
                state: GrantState::Granted,
            };
            put_grant(view, grant);

            Ok(Assignment {
                device: dev.clone(),
                request: req.request,
                decision: Decision::Granted,
                denial: None,
                grant_id: Some(grant_id),
                channels: found.channels,
                expire_time: Some(expire_time),
                heartbeat_interval: Some(p.heartbeat_interval),
                authorized_until: None,
                fee_charged: fee,
                preempted: found.preempted,
            })
        }

        RequestType::Heartbeat => {
            let denied = |reason| Assignment::denied(dev.clone(), req.request, reason);
            let Some(mut g) = grant_of(view, dev) else {
                return Ok(denied(DenialReason::UnknownGrant));
            };
            if req.grant_id != Some(g.id) {
                return Ok(denied(DenialReason::UnknownGrant));
            }
            if g.state.is_terminal() || g.expire_time <= now {
                return Ok(denied(DenialReason::GrantNotActive));
            }
            g.last_heartbeat = Some(now);
            // A suspended grant acknowledges the heartbeat but stays
            // suspended with no channels; the empty channel set tells the
            // device its spectrum is gone.
            let authorized_until = if g.state == GrantState::Suspended {
                None
            } else {
                g.state = GrantState::Authorized;
                Some(now + g.heartbeat_interval)
            };
            let snapshot = g.clone();
            put_grant(view, g);
            Ok(Assignment {
                device: dev.clone(),
                request: req.request,
                decision: Decision::HeartbeatOk,
                denial: None,
                grant_id: Some(snapshot.id),
                channels: snapshot.channels,
                expire_time: Some(snapshot.expire_time),
                heartbeat_interval: Some(snapshot.heartbeat_interval),
                authorized_until,
                fee_charged: TokenAmount::ZERO,
                preempted: BTreeSet::new(),
            })
        }

        RequestType::Relinquish => {
            let denied = |reason| Assignment::denied(dev.clone(), req.request, reason);
            let Some(mut g) = grant_of(view, dev) else {
                return Ok(denied(DenialReason::UnknownGrant));
            };
            if req.grant_id != Some(g.id) {
                return Ok(denied(DenialReason::UnknownGrant));
            }
            if g.state.is_terminal() {
                return Ok(denied(DenialReason::GrantNotActive));
            }
            for ch in std::mem::take(&mut g.channels) {
                occ_remove(view, ch, dev);
            }
            g.state = GrantState::Relinquished;
            let id = g.id;
            put_grant(view, g);
            Ok(Assignment {
                device: dev.clone(),
                request: req.request,
                decision: Decision::Relinquished,
                denial: None,
                grant_id: Some(id),
                channels: BTreeSet::new(),
                expire_time: None,
                heartbeat_interval: None,
                authorized_until: None,
                fee_charged: TokenAmount::ZERO,
                preempted: BTreeSet::new(),
            })
        }
    }
}

/// Bridges the allocator's lookups onto the execution view, so everything the
/// search inspects lands in the read set.
struct ViewEnv<'v, 'b> {
    view: &'v mut ExecView<'b>,
    registry: BTreeSet<DeviceId>,
}

impl AllocEnv for ViewEnv<'_, '_> {
    fn occupants(&mut self, ch: u16) -> BTreeSet<DeviceId> {
        occupancy(self.view, ch)
    }

    fn preemptible(&mut self, dev: &DeviceId) -> bool {
        // General-tier standing: general category, or priority category
        // without the registry listing that activates it.
        match client(self.view, dev) {
            Some(c) => c.category == bdsas_core::Category::Gaa || !self.registry.contains(dev),
            None => false,
        }
    }
}

fn run_allocation(
    view: &mut ExecView<'_>,
    req: &AllocRequest<'_>,
) -> Option<crate::alloc::AllocOutcome> {
    let registry = pal_registry(view);
    allocate(req, &mut ViewEnv { view, registry })
}

fn exec_ctx(
    view: &mut ExecView<'_>,
    proposer: &NodeId,
    payload: &CTxPayload,
) -> Result<(), ExecError> {
    let current = committee(view)?;
    match payload {
        CTxPayload::CommitteeUpdate { round, committee: next } => {
            // Handover window: the outgoing committee bridges the outcome,
            // the incoming one may also push it if the old set stalls.
            if !current.members.contains(proposer) && !next.contains(proposer) {
                return Err(ExecError::NotCommittee);
            }
            if *round <= current.round {
                return Err(ExecError::StaleRound);
            }
            view.put(
                StateKey::Committee,
                StateValue::Committee(CommitteeInfo {
                    round: *round,
                    members: next.iter().cloned().collect(),
                }),
            );
            Ok(())
        }
        _ => {
            if !current.members.contains(proposer) {
                return Err(ExecError::NotCommittee);
            }
            match payload {
                CTxPayload::Channels(update) => {
                    let mut table = channel_table(view)?;
                    for &idx in &update.channels {
                        if table.get(idx).is_none() {
                            return Err(ExecError::UnknownChannel(idx));
                        }
                    }
                    let mut flipped: Vec<u16> = Vec::new();
                    for &idx in &update.channels {
                        let desc = table.get(idx).expect("bounds checked above");
                        if desc.available != update.available {
                            flipped.push(idx);
                        }
                    }
                    if flipped.is_empty() {
                        // Redundant update: valid, no table write.
                        return Ok(());
                    }
                    for &idx in &flipped {
                        table.set_availability(idx, update.available, update.reason);
                    }
                    if !update.available {
                        // Newly closed channels evict every active grant
                        // sitting on them; eviction is suspension, so the
                        // whole grant (all its channels) is released.
                        for &idx in &flipped {
                            let holders = occupancy(view, idx);
                            for dev in holders {
                                if let Some(g) = grant_of(view, &dev) {
                                    if g.state.occupies() {
                                        suspend_grant(view, g);
                                    }
                                }
                            }
                        }
                    }
                    view.put(StateKey::Channels, StateValue::Channels(table));
                    Ok(())
                }
                CTxPayload::FeeCleared { grant_ids, .. } => {
                    for gid in grant_ids {
                        let Some(mut rec) = fee_record(view, gid) else {
                            return Err(ExecError::UnknownFee);
                        };
                        if rec.cleared {
                            continue; // idempotent re-sync
                        }
                        rec.cleared = true;
                        view.put(StateKey::Fee(*gid), StateValue::Fee(rec));
                    }
                    Ok(())
                }
                CTxPayload::PalRegistry { devices } => {
                    view.put(
                        StateKey::PalRegistry,
                        StateValue::PalRegistry(devices.clone()),
                    );
                    Ok(())
                }
                CTxPayload::Params(p) => {
                    let ok = p.heartbeat_interval > SimDuration::ZERO
                        && p.grant_lifetime > SimDuration::ZERO
                        && p.channels_per_grant >= 1
                        && p.endorse_k >= 1
                        && p.witness_vote_timeout > SimDuration::ZERO;
                    if !ok {
                        return Err(ExecError::BadParams);
                    }
                    view.put(StateKey::Params, StateValue::Params(p.clone()));
                    Ok(())
                }
                CTxPayload::CommitteeUpdate { .. } => unreachable!("handled above"),
            }
        }
    }
}

fn exec_dtx(
    view: &mut ExecView<'_>,
    proposer: &NodeId,
    payload: &DTxPayload,
) -> Result<(), ExecError> {
    match payload {
        DTxPayload::Register(record) => {
            require_committee(view, proposer)?;
            if client(view, &record.device).is_some() {
                return Err(ExecError::DuplicateRegistration);
            }
            view.put(
                StateKey::Client(record.device.clone()),
                StateValue::Client(record.clone()),
            );
            Ok(())
        }
        DTxPayload::Update(record) => {
            require_committee(view, proposer)?;
            let Some(existing) = client(view, &record.device) else {
                return Err(ExecError::UnknownDevice);
            };
            // Witness eligibility only moves through the vote flow below;
            // a plain update cannot smuggle it.
            let mut merged = record.clone();
            merged.witness_eligible = existing.witness_eligible;
            view.put(
                StateKey::Client(record.device.clone()),
                StateValue::Client(merged),
            );
            Ok(())
        }
        DTxPayload::WitnessFlag { device, eligible } => {
            require_committee(view, proposer)?;
            let Some(existing) = client(view, device) else {
                return Err(ExecError::UnknownDevice);
            };
            if pending_change(view, device).is_some() {
                return Err(ExecError::PendingExists);
            }
            if existing.witness_eligible == *eligible {
                return Ok(()); // already in the requested state
            }
            let p = params(view)?;
            let now = view.now();
            view.put(
                StateKey::WitnessPending(device.clone()),
                StateValue::WitnessPending(PendingWitnessChange {
                    device: device.clone(),
                    eligible: *eligible,
                    approvals: BTreeSet::new(),
                    created_at: now,
                    deadline: now + p.witness_vote_timeout,
                }),
            );
            Ok(())
        }
        DTxPayload::WitnessVote { device, approve } => {
            let w = witnesses(view)?;
            if !w.contains(proposer) {
                return Err(ExecError::NotWitness);
            }
            let Some(mut pending) = pending_change(view, device) else {
                return Err(ExecError::NoPending);
            };
            if !*approve || pending.approvals.contains(proposer) {
                // Disapproval is abstention (the deadline rejects the change);
                // duplicate approvals are idempotent. Both make vote outcomes
                // independent of arrival order.
                return Ok(());
            }
            pending.approvals.insert(proposer.clone());
            let majority = w.len() / 2 + 1;
            if pending.approvals.len() >= majority {
                let mut rec = client(view, device).ok_or(ExecError::UnknownDevice)?;
                rec.witness_eligible = pending.eligible;
                view.put(StateKey::Client(device.clone()), StateValue::Client(rec));
                view.delete(StateKey::WitnessPending(device.clone()));
            } else {
                view.put(
                    StateKey::WitnessPending(device.clone()),
                    StateValue::WitnessPending(pending),
                );
            }
            Ok(())
        }
    }
}

fn require_committee(view: &mut ExecView<'_>, proposer: &NodeId) -> Result<(), ExecError> {
    if committee(view)?.members.contains(proposer) {
        Ok(())
    } else {
        Err(ExecError::NotCommittee)
    }
}

/// What the pre-transaction sweep did to each affected grant.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SweepOutcome {
    /// Grants past absolute expiry, now terminal.
    pub expired: Vec<DeviceId>,
    /// Grants whose heartbeats went stale past the grace period; spectrum
    /// reclaimed, record kept.
    pub suspended: Vec<DeviceId>,
    /// Authorized grants with a merely overdue heartbeat; authorization
    /// lapses but spectrum is kept until the grace period runs out.
    pub demoted: Vec<DeviceId>,
    /// Eligibility votes that timed out unresolved.
    pub votes_expired: Vec<DeviceId>,
}

/// Deterministic pass over all grants and pending votes, run by every replica
/// at the start of each block commit (before the block's transactions), with
/// `now` = the block's cut time. Writes land at sequence 0 of the block.
pub fn expire_sweep(state: &mut CommittedState, now: SimTime, height: u64) -> SweepOutcome {
    let version = version_at(height, 0);
    let mut out = SweepOutcome::default();

    enum Change {
        Expire(Grant),
        Suspend(Grant),
        Demote(Grant),
    }
    let mut changes: Vec<Change> = Vec::new();
    for g in state.grants() {
        if g.state.is_terminal() {
            continue;
        }
        if g.expire_time <= now {
            changes.push(Change::Expire(g.clone()));
            continue;
        }
        let hb_ref = g.last_heartbeat.unwrap_or(g.granted_at);
        if g.state.occupies() && now > hb_ref + g.heartbeat_interval + HEARTBEAT_GRACE {
            changes.push(Change::Suspend(g.clone()));
        } else if g.state == GrantState::Authorized && now > hb_ref + g.heartbeat_interval {
            changes.push(Change::Demote(g.clone()));
        }
    }

    let free_channels = |state: &mut CommittedState, g: &Grant| {
        for &ch in &g.channels {
            let key = StateKey::ChannelOcc(ch);
            let mut occ = match state.get(&key) {
                Some(StateValue::Occupancy(o)) => o.clone(),
                _ => BTreeSet::new(),
            };
            occ.remove(&g.device);
            if occ.is_empty() {
                state.apply_one(key, None, version);
            } else {
                state.apply_one(key, Some(StateValue::Occupancy(occ)), version);
            }
        }
    };

    for change in changes {
        match change {
            Change::Expire(mut g) => {
                free_channels(state, &g);
                g.channels.clear();
                g.state = GrantState::Expired;
                out.expired.push(g.device.clone());
                state.apply_one(
                    StateKey::Grant(g.device.clone()),
                    Some(StateValue::Grant(g)),
                    version,
                );
            }
            Change::Suspend(mut g) => {
                free_channels(state, &g);
                g.channels.clear();
                g.state = GrantState::Suspended;
                out.suspended.push(g.device.clone());
                state.apply_one(
                    StateKey::Grant(g.device.clone()),
                    Some(StateValue::Grant(g)),
                    version,
                );
            }
            Change::Demote(mut g) => {
                g.state = GrantState::Granted;
                out.demoted.push(g.device.clone());
                state.apply_one(
                    StateKey::Grant(g.device.clone()),
                    Some(StateValue::Grant(g)),
                    version,
                );
            }
        }
    }

    let stale: Vec<DeviceId> = state
        .pending_witness_changes()
        .filter(|p| p.deadline < now)
        .map(|p| p.device.clone())
        .collect();
    for dev in stale {
        state.apply_one(StateKey::WitnessPending(dev.clone()), None, version);
        out.votes_expired.push(dev);
    }

    out
}

/// Everything the genesis block seeds into a zone's state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenesisConfig {
    pub channels: ChannelTable,
    pub params: ContractParams,
    pub committee: BTreeSet<NodeId>,
    pub witnesses: BTreeSet<NodeId>,
    pub pal_registry: BTreeSet<DeviceId>,
    pub clients: Vec<ClientRecord>,
    pub accounts: Vec<(DeviceId, TokenAmount)>,
}

/// Builds the state as of the genesis block. All writes carry version
/// (0, 1): nonzero, so they are distinguishable from "never written".
pub fn genesis_state(cfg: &GenesisConfig, genesis_time: SimTime) -> CommittedState {
    let version = version_at(0, 1);
    let mut state = CommittedState::new();
    state.set_state_time(genesis_time);
    state.apply_one(
        StateKey::Channels,
        Some(StateValue::Channels(cfg.channels.clone())),
        version,
    );
    state.apply_one(StateKey::Params, Some(StateValue::Params(cfg.params.clone())), version);
    state.apply_one(
        StateKey::Committee,
        Some(StateValue::Committee(CommitteeInfo { round: 0, members: cfg.committee.clone() })),
        version,
    );
    state.apply_one(
        StateKey::Witnesses,
        Some(StateValue::Witnesses(cfg.witnesses.clone())),
        version,
    );
    state.apply_one(
        StateKey::PalRegistry,
        Some(StateValue::PalRegistry(cfg.pal_registry.clone())),
        version,
    );
    for c in &cfg.clients {
        state.apply_one(
            StateKey::Client(c.device.clone()),
            Some(StateValue::Client(c.clone())),
            version,
        );
    }
    for (dev, amount) in &cfg.accounts {
        state.apply_one(
            StateKey::Account(dev.clone()),
            Some(StateValue::Account(*amount)),
            version,
        );
    }
    state
}
