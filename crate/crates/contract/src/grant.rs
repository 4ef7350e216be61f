//! Grants, assignment outcomes, fee escrow records and pending witness
//! changes.

use std::collections::{BTreeMap, BTreeSet};

use bdsas_core::codec::{CodecError, Decode, Encode, Reader};
use bdsas_core::{DeviceId, Digest, NodeId, RequestType, SimDuration, SimTime, TokenAmount};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum GrantState {
    /// Issued; the device has not yet heartbeat.
    Granted,
    /// Heartbeat current; transmission authorized for one interval.
    Authorized,
    /// Channels withdrawn (incumbent protection or preemption). The record
    /// stays until the device relinquishes or the grant expires; it never
    /// resumes on its own.
    Suspended,
    Relinquished,
    Expired,
}

impl GrantState {
    pub fn is_terminal(&self) -> bool {
        matches!(self, GrantState::Relinquished | GrantState::Expired)
    }

    /// States in which the grant occupies its channels.
    pub fn occupies(&self) -> bool {
        matches!(self, GrantState::Granted | GrantState::Authorized)
    }
}

impl Encode for GrantState {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(match self {
            GrantState::Granted => 0,
            GrantState::Authorized => 1,
            GrantState::Suspended => 2,
            GrantState::Relinquished => 3,
            GrantState::Expired => 4,
        });
    }
    fn encoded_len(&self) -> usize {
        1
    }
}

impl Decode for GrantState {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(match r.byte()? {
            0 => GrantState::Granted,
            1 => GrantState::Authorized,
            2 => GrantState::Suspended,
            3 => GrantState::Relinquished,
            4 => GrantState::Expired,
            tag => return Err(CodecError::BadTag { ty: "GrantState", tag }),
        })
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Grant {
    /// Derived from the requesting transaction digest, so every endorser
    /// computes the same id.
    pub id: Digest,
    pub device: DeviceId,
    /// Empty once the grant stops occupying spectrum.
    pub channels: BTreeSet<u16>,
    pub eirp_dbm: f64,
    pub granted_at: SimTime,
    pub expire_time: SimTime,
    /// Heartbeat cadence frozen at grant time; later parameter updates do
    /// not retime existing grants.
    pub heartbeat_interval: SimDuration,
    pub last_heartbeat: Option<SimTime>,
    pub state: GrantState,
}

bdsas_core::impl_codec_struct!(Grant {
    id,
    device,
    channels,
    eirp_dbm,
    granted_at,
    expire_time,
    heartbeat_interval,
    last_heartbeat,
    state
});

/// Grace period after a missed heartbeat before spectrum is reclaimed.
/// Matches the radio stop rule: a device that loses contact must cease
/// transmission within 60 seconds, so reclaiming at interval + grace never
/// strands a still-transmitting device on a reassigned channel.
pub const HEARTBEAT_GRACE: SimDuration = SimDuration::from_secs(60);

impl Grant {
    /// Instant after which a silent device is considered gone: one full
    /// heartbeat interval plus the 60 s incumbent-protection grace.
    pub fn heartbeat_deadline(&self) -> SimTime {
        let reference = self.last_heartbeat.unwrap_or(self.granted_at);
        reference + self.heartbeat_interval + HEARTBEAT_GRACE
    }

    pub fn grant_id_for(tx_digest: &Digest) -> Digest {
        bdsas_core::sha256_parts(&[b"bdsas-grant", tx_digest.as_bytes()])
    }
}

/// Escrowed fee for one grant, split among the committee that served it.
/// `cleared` flips when the settlement is finalized on the global chain;
/// the record itself stays for audit.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FeeRecord {
    pub grant_id: Digest,
    pub payer: DeviceId,
    pub splits: Vec<(NodeId, TokenAmount)>,
    pub cleared: bool,
}

bdsas_core::impl_codec_struct!(FeeRecord { grant_id, payer, splits, cleared });

impl FeeRecord {
    pub fn total(&self) -> TokenAmount {
        self.splits.iter().fold(TokenAmount::ZERO, |acc, (_, a)| acc + *a)
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PendingWitnessChange {
    pub device: DeviceId,
    pub eligible: bool,
    pub approvals: BTreeSet<NodeId>,
    pub created_at: SimTime,
    pub deadline: SimTime,
}

bdsas_core::impl_codec_struct!(PendingWitnessChange {
    device,
    eligible,
    approvals,
    created_at,
    deadline
});

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum DenialReason {
    /// Device has no registration record on this chain.
    Unregistered,
    /// No channel assignment satisfies availability, interference and
    /// priority constraints.
    NoSpectrum,
    /// Deposit below the current grant fee, or balance insufficient.
    InsufficientFee,
    /// Device already holds a live grant.
    AlreadyGranted,
    /// Named grant does not exist or belongs to another device.
    UnknownGrant,
    /// Named grant exists but is suspended or terminal.
    GrantNotActive,
}

impl Encode for DenialReason {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(match self {
            DenialReason::Unregistered => 0,
            DenialReason::NoSpectrum => 1,
            DenialReason::InsufficientFee => 2,
            DenialReason::AlreadyGranted => 3,
            DenialReason::UnknownGrant => 4,
            DenialReason::GrantNotActive => 5,
        });
    }
    fn encoded_len(&self) -> usize {
        1
    }
}

impl Decode for DenialReason {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(match r.byte()? {
            0 => DenialReason::Unregistered,
            1 => DenialReason::NoSpectrum,
            2 => DenialReason::InsufficientFee,
            3 => DenialReason::AlreadyGranted,
            4 => DenialReason::UnknownGrant,
            5 => DenialReason::GrantNotActive,
            tag => return Err(CodecError::BadTag { ty: "DenialReason", tag }),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Decision {
    Granted,
    Denied,
    HeartbeatOk,
    HeartbeatDenied,
    Relinquished,
}

impl Encode for Decision {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(match self {
            Decision::Granted => 0,
            Decision::Denied => 1,
            Decision::HeartbeatOk => 2,
            Decision::HeartbeatDenied => 3,
            Decision::Relinquished => 4,
        });
    }
    fn encoded_len(&self) -> usize {
        1
    }
}

impl Decode for Decision {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(match r.byte()? {
            0 => Decision::Granted,
            1 => Decision::Denied,
            2 => Decision::HeartbeatOk,
            3 => Decision::HeartbeatDenied,
            4 => Decision::Relinquished,
            tag => return Err(CodecError::BadTag { ty: "Decision", tag }),
        })
    }
}

/// The contract's answer to an access request. Denials are ordinary
/// committed results, not execution errors.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Assignment {
    pub device: DeviceId,
    pub request: RequestType,
    pub decision: Decision,
    pub denial: Option<DenialReason>,
    pub grant_id: Option<Digest>,
    pub channels: BTreeSet<u16>,
    pub expire_time: Option<SimTime>,
    pub heartbeat_interval: Option<SimDuration>,
    /// Transmission window granted by a successful heartbeat, measured on
    /// the contract clock.
    pub authorized_until: Option<SimTime>,
    pub fee_charged: TokenAmount,
    /// Devices whose grants this assignment suspended by priority.
    pub preempted: BTreeSet<DeviceId>,
}

bdsas_core::impl_codec_struct!(Assignment {
    device,
    request,
    decision,
    denial,
    grant_id,
    channels,
    expire_time,
    heartbeat_interval,
    authorized_until,
    fee_charged,
    preempted
});

impl Assignment {
    pub fn denied(device: DeviceId, request: RequestType, reason: DenialReason) -> Self {
        let decision = match request {
            RequestType::Heartbeat => Decision::HeartbeatDenied,
            _ => Decision::Denied,
        };
        Assignment {
            device,
            request,
            decision,
            denial: Some(reason),
            grant_id: None,
            channels: BTreeSet::new(),
            expire_time: None,
            heartbeat_interval: None,
            authorized_until: None,
            fee_charged: TokenAmount::ZERO,
            preempted: BTreeSet::new(),
        }
    }

    pub fn is_success(&self) -> bool {
        matches!(
            self.decision,
            Decision::Granted | Decision::HeartbeatOk | Decision::Relinquished
        )
    }
}

/// Snapshot of who holds what, used by dumps and safety checks.
pub type OccupancyMap = BTreeMap<u16, BTreeSet<DeviceId>>;
