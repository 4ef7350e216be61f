//! Votes, quorum arithmetic and the voting rules.
//!
//! A block commits when more than two thirds of the curators sign it in the
//! same round. With n >= 3f+1 curators, two such certificates for different
//! blocks at one height would need at least f+1 curators to sign both, so
//! up to f equivocators cannot split the chain as long as correct curators
//! follow [`accepts_proposal`] and only co-sign after seeing a prevote
//! supermajority. Those rules live here as plain functions so the
//! exhaustive adversary search exercises the exact code the nodes run.

use bdsas_core::codec::{CodecError, Decode, Encode, Reader};
use bdsas_core::{Block, Digest, NodeId, PublicKey, SecretKey, Signature, Transaction};

/// Signatures required for a certificate: strictly more than 2n/3.
pub fn quorum(n: usize) -> usize {
    2 * n / 3 + 1
}

/// Messages from curators at rounds above the current one that force a
/// round skip: one more than the curators a certificate can spare.
pub fn skip_threshold(n: usize) -> usize {
    (n - 1) / 3 + 1
}

/// Proposer rotation: the height picks the first proposer, each timed-out
/// round moves to the next curator. The fallback on a crashed or silent
/// proposer is therefore deterministic.
pub fn proposer(curators: &[NodeId], height: u64, round: u32) -> &NodeId {
    &curators[((height + round as u64) % curators.len() as u64) as usize]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    Prevote,
    Precommit,
}

impl Encode for Phase {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(match self {
            Phase::Prevote => 0,
            Phase::Precommit => 1,
        });
    }
    fn encoded_len(&self) -> usize {
        1
    }
}

impl Decode for Phase {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(match r.byte()? {
            0 => Phase::Prevote,
            1 => Phase::Precommit,
            tag => return Err(CodecError::BadTag { ty: "Phase", tag }),
        })
    }
}

pub fn vote_bytes(height: u64, round: u32, phase: Phase, vote: Option<Digest>) -> Vec<u8> {
    let mut out = Vec::from(&b"bdsas-gvote"[..]);
    height.encode_into(&mut out);
    round.encode_into(&mut out);
    phase.encode_into(&mut out);
    vote.encode_into(&mut out);
    out
}

pub fn proposal_bytes(height: u64, round: u32, block_hash: Digest, valid_round: Option<u32>) -> Vec<u8> {
    let mut out = Vec::from(&b"bdsas-gprop"[..]);
    height.encode_into(&mut out);
    round.encode_into(&mut out);
    block_hash.encode_into(&mut out);
    valid_round.encode_into(&mut out);
    out
}

/// One curator's signed vote. `vote` of None is the explicit "nothing this
/// round" vote; it counts toward timeouts, never toward a certificate.
#[derive(Clone, Debug, PartialEq)]
pub struct SignedVote {
    pub voter: NodeId,
    pub height: u64,
    pub round: u32,
    pub phase: Phase,
    pub vote: Option<Digest>,
    pub signature: Signature,
}

bdsas_core::impl_codec_struct!(SignedVote { voter, height, round, phase, vote, signature });

impl SignedVote {
    pub fn verify(&self, pk: &PublicKey) -> bool {
        bdsas_core::verify_cached(
            pk,
            &vote_bytes(self.height, self.round, self.phase, self.vote),
            &self.signature,
        )
    }
}

pub fn make_vote(
    key: &SecretKey,
    voter: &NodeId,
    height: u64,
    round: u32,
    phase: Phase,
    vote: Option<Digest>,
) -> SignedVote {
    let signature = key.sign(&vote_bytes(height, round, phase, vote));
    SignedVote { voter: voter.clone(), height, round, phase, vote, signature }
}

/// Whether a correct curator prevotes for a proposal, given its lock.
///
/// A fresh proposal (no `valid_round`) is acceptable only to curators not
/// locked on a different block. A re-proposal claiming a prevote
/// supermajority at `valid_round` is acceptable when the curator itself
/// saw that supermajority and its own lock is not newer. Everything else
/// draws a nil prevote. This is the rule that keeps a certified block from
/// being abandoned: once a block gathers a certificate, every later
/// supermajority the adversary can exhibit is for that same block.
pub fn accepts_proposal(
    locked: Option<(Digest, u32)>,
    proposal: Digest,
    valid_round: Option<u32>,
    round: u32,
    saw_polka: impl Fn(&Digest, u32) -> bool,
) -> bool {
    match valid_round {
        None => locked.is_none_or(|(d, _)| d == proposal),
        Some(vr) => {
            vr < round
                && saw_polka(&proposal, vr)
                && locked.is_none_or(|(d, lr)| lr <= vr || d == proposal)
        }
    }
}

/// Wire format between curators.
#[derive(Clone, Debug, PartialEq)]
pub enum ConsMsg {
    Proposal {
        height: u64,
        round: u32,
        block: Block<Transaction>,
        /// Round whose prevote supermajority justifies re-proposing this
        /// block; None marks a fresh block.
        valid_round: Option<u32>,
        signature: Signature,
    },
    Vote(SignedVote),
    /// A committed block plus the precommit certificate that seals it, for
    /// curators that missed the votes.
    Decided {
        block: Block<Transaction>,
        round: u32,
        qc: Vec<SignedVote>,
    },
    /// Periodic height beacon; a peer that is ahead answers with Decided.
    Status { height: u64 },
}

impl Encode for ConsMsg {
    fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            ConsMsg::Proposal { height, round, block, valid_round, signature } => {
                out.push(0);
                height.encode_into(out);
                round.encode_into(out);
                encode_block(block, out);
                valid_round.encode_into(out);
                signature.encode_into(out);
            }
            ConsMsg::Vote(v) => {
                out.push(1);
                v.encode_into(out);
            }
            ConsMsg::Decided { block, round, qc } => {
                out.push(2);
                encode_block(block, out);
                round.encode_into(out);
                qc.encode_into(out);
            }
            ConsMsg::Status { height } => {
                out.push(3);
                height.encode_into(out);
            }
        }
    }
}

impl Decode for ConsMsg {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(match r.byte()? {
            0 => ConsMsg::Proposal {
                height: u64::decode_from(r)?,
                round: u32::decode_from(r)?,
                block: decode_block(r)?,
                valid_round: Option::decode_from(r)?,
                signature: Signature::decode_from(r)?,
            },
            1 => ConsMsg::Vote(SignedVote::decode_from(r)?),
            2 => ConsMsg::Decided {
                block: decode_block(r)?,
                round: u32::decode_from(r)?,
                qc: Vec::decode_from(r)?,
            },
            3 => ConsMsg::Status { height: u64::decode_from(r)? },
            tag => return Err(CodecError::BadTag { ty: "ConsMsg", tag }),
        })
    }
}

// Block<T> is generic and keeps its codec out of the core crate; encode the
// fields directly here. Validation flags travel too: they are recomputed by
// every committing curator, but keeping them makes Decided self-describing.
fn encode_block(b: &Block<Transaction>, out: &mut Vec<u8>) {
    b.height.encode_into(out);
    b.prev_hash.encode_into(out);
    b.cut_time.encode_into(out);
    b.txs.encode_into(out);
    b.validation_flags.encode_into(out);
}

fn decode_block(r: &mut Reader<'_>) -> Result<Block<Transaction>, CodecError> {
    Ok(Block {
        height: u64::decode_from(r)?,
        prev_hash: Digest::decode_from(r)?,
        cut_time: bdsas_core::SimTime::decode_from(r)?,
        txs: Vec::decode_from(r)?,
        validation_flags: Vec::decode_from(r)?,
    })
}

/// Checks a precommit certificate: `need` distinct known curators, each
/// with a valid signature for the same (height, round, digest).
pub fn verify_qc(
    qc: &[SignedVote],
    height: u64,
    round: u32,
    digest: Digest,
    curators: &[NodeId],
    key_of: impl Fn(&NodeId) -> Option<PublicKey>,
    need: usize,
) -> bool {
    let mut seen = std::collections::BTreeSet::new();
    for v in qc {
        if v.height != height
            || v.round != round
            || v.phase != Phase::Precommit
            || v.vote != Some(digest)
            || !curators.contains(&v.voter)
        {
            continue;
        }
        let Some(pk) = key_of(&v.voter) else { continue };
        if v.verify(&pk) {
            seen.insert(v.voter.clone());
        }
    }
    seen.len() >= need
}
