//! Transaction payload bodies for both chains.
//!
//! Five families, one per traffic class:
//!
//! - `RTxPayload`: regulator-issued rules on the G-Chain
//! - `STxPayload`: cross-layer sync records on the G-Chain
//! - `CTxPayload`: channel/parameter updates on an L-Chain, from SAS servers
//! - `DTxPayload`: device registration records on an L-Chain
//! - `AccessRequest`: spectrum access traffic (grant, heartbeat, relinquish)
//!
//! The payload types carry no signatures of their own except S-Tx
//! attestations; authentication happens on the enclosing transaction.

use std::collections::BTreeSet;

use crate::codec::{CodecError, Decode, Encode, Reader};
use crate::crypto::{Digest, Signature};
use crate::id::{DeviceId, NodeId, ZoneId};
use crate::impl_codec_struct;
use crate::time::SimDuration;
use crate::tokens::TokenAmount;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FrequencyRange {
    pub low_mhz: f64,
    pub high_mhz: f64,
}

impl_codec_struct!(FrequencyRange { low_mhz, high_mhz });

impl FrequencyRange {
    pub fn new(low_mhz: f64, high_mhz: f64) -> Self {
        FrequencyRange { low_mhz, high_mhz }
    }
}

/// CBRS incumbent-aware priority class. PAL holders may preempt GAA users
/// on the channels their license reserves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Category {
    Pal,
    Gaa,
}

impl Encode for Category {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(match self {
            Category::Pal => 0,
            Category::Gaa => 1,
        });
    }
    fn encoded_len(&self) -> usize {
        1
    }
}

impl Decode for Category {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(match r.byte()? {
            0 => Category::Pal,
            1 => Category::Gaa,
            tag => return Err(CodecError::BadTag { ty: "Category", tag }),
        })
    }
}

/// Registered CBSD description. `neighbors` is the set of devices whose
/// coverage overlaps this one; co-channel assignment to a neighbor pair is
/// the interference condition the allocator must avoid.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClientRecord {
    pub device: DeviceId,
    pub category: Category,
    pub max_eirp_dbm: f64,
    pub neighbors: BTreeSet<DeviceId>,
    pub witness_eligible: bool,
}

impl_codec_struct!(ClientRecord {
    device,
    category,
    max_eirp_dbm,
    neighbors,
    witness_eligible
});

/// Contract parameters. A single record under its own state key; parameter
/// updates replace the record wholesale.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ContractParams {
    pub heartbeat_interval: SimDuration,
    pub grant_lifetime: SimDuration,
    pub channels_per_grant: u16,
    pub grant_fee: TokenAmount,
    /// Matching endorsements required for a transaction to commit as valid.
    pub endorse_k: u16,
    /// How long a witness-eligibility change waits for witness votes.
    pub witness_vote_timeout: SimDuration,
    /// Channel indices reserved for PAL licensees.
    pub pal_reserved: BTreeSet<u16>,
}

impl_codec_struct!(ContractParams {
    heartbeat_interval,
    grant_lifetime,
    channels_per_grant,
    grant_fee,
    endorse_k,
    witness_vote_timeout,
    pal_reserved
});

impl Default for ContractParams {
    fn default() -> Self {
        ContractParams {
            heartbeat_interval: SimDuration::from_secs(30),
            grant_lifetime: SimDuration::from_secs(300),
            channels_per_grant: 1,
            grant_fee: TokenAmount::from_tokens(10),
            endorse_k: 3,
            witness_vote_timeout: SimDuration::from_secs(60),
            pal_reserved: (0..10).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum AvailabilityReason {
    Open,
    IncumbentProtected,
    RegulatoryClosed,
}

impl Encode for AvailabilityReason {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(match self {
            AvailabilityReason::Open => 0,
            AvailabilityReason::IncumbentProtected => 1,
            AvailabilityReason::RegulatoryClosed => 2,
        });
    }
    fn encoded_len(&self) -> usize {
        1
    }
}

impl Decode for AvailabilityReason {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(match r.byte()? {
            0 => AvailabilityReason::Open,
            1 => AvailabilityReason::IncumbentProtected,
            2 => AvailabilityReason::RegulatoryClosed,
            tag => return Err(CodecError::BadTag { ty: "AvailabilityReason", tag }),
        })
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChannelUpdate {
    pub channels: Vec<u16>,
    pub available: bool,
    pub reason: AvailabilityReason,
}

impl_codec_struct!(ChannelUpdate { channels, available, reason });

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum RuleScope {
    Global,
    Zone(ZoneId),
}

impl Encode for RuleScope {
    fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            RuleScope::Global => out.push(0),
            RuleScope::Zone(z) => {
                out.push(1);
                z.encode_into(out);
            }
        }
    }
}

impl Decode for RuleScope {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(match r.byte()? {
            0 => RuleScope::Global,
            1 => RuleScope::Zone(ZoneId::decode_from(r)?),
            tag => return Err(CodecError::BadTag { ty: "RuleScope", tag }),
        })
    }
}

/// What a regulatory transaction changes.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum RegulatoryRule {
    /// Open or close channels, e.g. an incumbent protection event from an
    /// environmental sensing report.
    ChannelAvailability(ChannelUpdate),
    /// Replace the PAL license registry for the scoped zone.
    PalRegistry { devices: BTreeSet<DeviceId> },
    /// Replace the access-contract parameter record.
    Params(ContractParams),
}

impl Encode for RegulatoryRule {
    fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            RegulatoryRule::ChannelAvailability(u) => {
                out.push(0);
                u.encode_into(out);
            }
            RegulatoryRule::PalRegistry { devices } => {
                out.push(1);
                devices.encode_into(out);
            }
            RegulatoryRule::Params(p) => {
                out.push(2);
                p.encode_into(out);
            }
        }
    }
}

impl Decode for RegulatoryRule {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(match r.byte()? {
            0 => RegulatoryRule::ChannelAvailability(ChannelUpdate::decode_from(r)?),
            1 => RegulatoryRule::PalRegistry { devices: BTreeSet::decode_from(r)? },
            2 => RegulatoryRule::Params(ContractParams::decode_from(r)?),
            tag => return Err(CodecError::BadTag { ty: "RegulatoryRule", tag }),
        })
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RTxPayload {
    pub scope: RuleScope,
    pub rule: RegulatoryRule,
    /// First coordination-chain height at which the rule applies. Servers
    /// bridge the rule to affected zones once a block at or past this
    /// height finalizes the transaction. Zero means immediately.
    pub effective_height: u64,
}

impl_codec_struct!(RTxPayload { scope, rule, effective_height });

/// A co-serving SAS server's endorsement of a sync record it recognizes
/// from its own zone view. Signed over `STxPayload::attested_bytes`.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Attestation {
    pub server: NodeId,
    pub signature: Signature,
}

impl_codec_struct!(Attestation { server, signature });

/// One grant's fee split, claimed once the serving committee clears it.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FeeClaim {
    pub grant_id: Digest,
    pub splits: Vec<(NodeId, TokenAmount)>,
}

impl_codec_struct!(FeeClaim { grant_id, splits });

impl FeeClaim {
    pub fn total(&self) -> TokenAmount {
        self.splits.iter().fold(TokenAmount::ZERO, |acc, (_, a)| acc + *a)
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum SyncBody {
    /// Mirror of a device registration committed on the zone's L-Chain.
    Registration { record: ClientRecord, lchain_height: u64 },
    /// A server's shuffle entry for the committee lottery.
    VrfSubmission { round: u64, output: Digest, proof: Vec<u8> },
    /// The committee selected for `round`, recomputable from the
    /// submissions committed in that round's window.
    CommitteeOutcome { round: u64, committee: Vec<NodeId> },
    /// Cleared grant fees, crediting committee members on the G-Chain.
    FeeClearing { claims: Vec<FeeClaim>, lchain_height: u64 },
}

impl Encode for SyncBody {
    fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            SyncBody::Registration { record, lchain_height } => {
                out.push(0);
                record.encode_into(out);
                lchain_height.encode_into(out);
            }
            SyncBody::VrfSubmission { round, output, proof } => {
                out.push(1);
                round.encode_into(out);
                output.encode_into(out);
                proof.encode_into(out);
            }
            SyncBody::CommitteeOutcome { round, committee } => {
                out.push(2);
                round.encode_into(out);
                committee.encode_into(out);
            }
            SyncBody::FeeClearing { claims, lchain_height } => {
                out.push(3);
                claims.encode_into(out);
                lchain_height.encode_into(out);
            }
        }
    }
}

impl Decode for SyncBody {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(match r.byte()? {
            0 => SyncBody::Registration {
                record: ClientRecord::decode_from(r)?,
                lchain_height: u64::decode_from(r)?,
            },
            1 => SyncBody::VrfSubmission {
                round: u64::decode_from(r)?,
                output: Digest::decode_from(r)?,
                proof: Vec::decode_from(r)?,
            },
            2 => SyncBody::CommitteeOutcome {
                round: u64::decode_from(r)?,
                committee: Vec::decode_from(r)?,
            },
            3 => SyncBody::FeeClearing {
                claims: Vec::decode_from(r)?,
                lchain_height: u64::decode_from(r)?,
            },
            tag => return Err(CodecError::BadTag { ty: "SyncBody", tag }),
        })
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct STxPayload {
    pub zone: ZoneId,
    pub body: SyncBody,
    /// Signatures from co-serving servers over `attested_bytes`. Collected
    /// by the proposer before signing, so they are part of the tx digest.
    pub attestations: Vec<Attestation>,
}

impl_codec_struct!(STxPayload { zone, body, attestations });

impl STxPayload {
    /// Message a co-serving server signs to attest the record.
    pub fn attested_bytes(zone: &ZoneId, body: &SyncBody) -> Vec<u8> {
        let mut out = Vec::from(&b"bdsas-attest"[..]);
        zone.encode_into(&mut out);
        body.encode_into(&mut out);
        out
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum CTxPayload {
    /// Channel availability change for the zone.
    Channels(ChannelUpdate),
    /// Committee handoff after a reshuffle round.
    CommitteeUpdate { round: u64, committee: Vec<NodeId> },
    /// Marks grant fees as settled on the G-Chain, closing their escrow.
    FeeCleared { grant_ids: Vec<Digest>, gchain_height: u64 },
    /// Mirror of a PAL registry rule.
    PalRegistry { devices: BTreeSet<DeviceId> },
    /// Mirror of a parameter rule.
    Params(ContractParams),
}

impl Encode for CTxPayload {
    fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            CTxPayload::Channels(u) => {
                out.push(0);
                u.encode_into(out);
            }
            CTxPayload::CommitteeUpdate { round, committee } => {
                out.push(1);
                round.encode_into(out);
                committee.encode_into(out);
            }
            CTxPayload::FeeCleared { grant_ids, gchain_height } => {
                out.push(2);
                grant_ids.encode_into(out);
                gchain_height.encode_into(out);
            }
            CTxPayload::PalRegistry { devices } => {
                out.push(3);
                devices.encode_into(out);
            }
            CTxPayload::Params(p) => {
                out.push(4);
                p.encode_into(out);
            }
        }
    }
}

impl Decode for CTxPayload {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(match r.byte()? {
            0 => CTxPayload::Channels(ChannelUpdate::decode_from(r)?),
            1 => CTxPayload::CommitteeUpdate {
                round: u64::decode_from(r)?,
                committee: Vec::decode_from(r)?,
            },
            2 => CTxPayload::FeeCleared {
                grant_ids: Vec::decode_from(r)?,
                gchain_height: u64::decode_from(r)?,
            },
            3 => CTxPayload::PalRegistry { devices: BTreeSet::decode_from(r)? },
            4 => CTxPayload::Params(ContractParams::decode_from(r)?),
            tag => return Err(CodecError::BadTag { ty: "CTxPayload", tag }),
        })
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum DTxPayload {
    /// First registration of a device.
    Register(ClientRecord),
    /// Replaces an existing registration record.
    Update(ClientRecord),
    /// Proposes flipping a device's witness eligibility; takes effect only
    /// after a majority of current witnesses vote to approve.
    WitnessFlag { device: DeviceId, eligible: bool },
    /// A witness's vote on the pending flag change for `device`.
    WitnessVote { device: DeviceId, approve: bool },
}

impl Encode for DTxPayload {
    fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            DTxPayload::Register(rec) => {
                out.push(0);
                rec.encode_into(out);
            }
            DTxPayload::Update(rec) => {
                out.push(1);
                rec.encode_into(out);
            }
            DTxPayload::WitnessFlag { device, eligible } => {
                out.push(2);
                device.encode_into(out);
                eligible.encode_into(out);
            }
            DTxPayload::WitnessVote { device, approve } => {
                out.push(3);
                device.encode_into(out);
                approve.encode_into(out);
            }
        }
    }
}

impl Decode for DTxPayload {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(match r.byte()? {
            0 => DTxPayload::Register(ClientRecord::decode_from(r)?),
            1 => DTxPayload::Update(ClientRecord::decode_from(r)?),
            2 => DTxPayload::WitnessFlag {
                device: DeviceId::decode_from(r)?,
                eligible: bool::decode_from(r)?,
            },
            3 => DTxPayload::WitnessVote {
                device: DeviceId::decode_from(r)?,
                approve: bool::decode_from(r)?,
            },
            tag => return Err(CodecError::BadTag { ty: "DTxPayload", tag }),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum RequestType {
    Grant,
    Heartbeat,
    Relinquish,
}

impl Encode for RequestType {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(match self {
            RequestType::Grant => 0,
            RequestType::Heartbeat => 1,
            RequestType::Relinquish => 2,
        });
    }
    fn encoded_len(&self) -> usize {
        1
    }
}

impl Decode for RequestType {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(match r.byte()? {
            0 => RequestType::Grant,
            1 => RequestType::Heartbeat,
            2 => RequestType::Relinquish,
            tag => return Err(CodecError::BadTag { ty: "RequestType", tag }),
        })
    }
}

/// Spectrum access traffic: the A-Tx body.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AccessRequest {
    pub device: DeviceId,
    pub request: RequestType,
    /// Frequency window the device can use. `None` means any channel.
    /// Grant requests only.
    pub desired: Option<FrequencyRange>,
    pub eirp_dbm: f64,
    /// Raw sensing report bytes; opaque to the contract, carried for audit.
    pub measurement: Vec<u8>,
    /// Tokens the device commits for the grant fee. Grant requests only.
    pub fee_deposit: TokenAmount,
    /// Heartbeat and relinquish requests name their grant.
    pub grant_id: Option<Digest>,
}

impl_codec_struct!(AccessRequest {
    device,
    request,
    desired,
    eirp_dbm,
    measurement,
    fee_deposit,
    grant_id
});

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum TxPayload {
    Regulatory(RTxPayload),
    Sync(STxPayload),
    Channel(CTxPayload),
    Device(DTxPayload),
    Access(AccessRequest),
}

impl Encode for TxPayload {
    fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            TxPayload::Regulatory(p) => {
                out.push(0);
                p.encode_into(out);
            }
            TxPayload::Sync(p) => {
                out.push(1);
                p.encode_into(out);
            }
            TxPayload::Channel(p) => {
                out.push(2);
                p.encode_into(out);
            }
            TxPayload::Device(p) => {
                out.push(3);
                p.encode_into(out);
            }
            TxPayload::Access(p) => {
                out.push(4);
                p.encode_into(out);
            }
        }
    }
}

impl Decode for TxPayload {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(match r.byte()? {
            0 => TxPayload::Regulatory(RTxPayload::decode_from(r)?),
            1 => TxPayload::Sync(STxPayload::decode_from(r)?),
            2 => TxPayload::Channel(CTxPayload::decode_from(r)?),
            3 => TxPayload::Device(DTxPayload::decode_from(r)?),
            4 => TxPayload::Access(AccessRequest::decode_from(r)?),
            tag => return Err(CodecError::BadTag { ty: "TxPayload", tag }),
        })
    }
}
