//! Per-height consensus instance.
//!
//! One [`HeightInstance`] drives agreement on the block at a single height
//! and is discarded once that block commits. Within a height the curators
//! run numbered rounds. Each round has a fixed proposer, a prevote phase
//! and a precommit phase; a certificate of `quorum(n)` precommits for the
//! same block in the same round commits it. Locks carry across rounds:
//! once a curator precommits a block it refuses conflicting proposals
//! until shown a prevote supermajority from a later round, which is what
//! keeps two certificates for different blocks from ever forming.
//!
//! The instance is deliberately free of networking and storage concerns:
//! callers feed it messages and wakeups, it answers with [`Act`]s. The
//! node layer broadcasts them and loops its own messages back in, so a
//! curator's votes take the same path as everyone else's.

use std::collections::{BTreeMap, BTreeSet};

use bdsas_core::{
    Block, Digest, IdentityRegistry, NodeId, SecretKey, SimDuration, SimTime, Transaction,
};

use crate::vote::{
    accepts_proposal, make_vote, proposal_bytes, proposer, quorum, skip_threshold, ConsMsg, Phase,
    SignedVote,
};

/// Proposer grace per round before prevoting nil.
pub const T_PROPOSE: SimDuration = SimDuration::from_millis(400);
/// Prevote-collection grace per round before precommitting nil.
pub const T_POLKA: SimDuration = SimDuration::from_millis(800);
/// Whole-round deadline before moving to the next proposer.
pub const T_ROUND: SimDuration = SimDuration::from_millis(1200);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Step {
    Propose,
    Prevote,
    Precommit,
}

/// What the instance wants done. Broadcasts go to every other curator and
/// back into the instance itself.
#[derive(Debug)]
pub enum Act {
    Broadcast(ConsMsg),
    Commit {
        block: Block<Transaction>,
        round: u32,
        qc: Vec<SignedVote>,
    },
}

/// Per-call view of the node the instance runs in. `fresh` is the block
/// the node would mint from its mempool if asked to propose from scratch;
/// None when there is nothing to propose.
pub struct InstCtx<'a> {
    pub id: &'a NodeId,
    pub key: &'a SecretKey,
    pub curators: &'a [NodeId],
    pub registry: &'a IdentityRegistry,
    pub tip: Digest,
    pub fresh: Option<Block<Transaction>>,
}

pub struct HeightInstance {
    height: u64,
    round: u32,
    step: Step,
    quorum_size: usize,
    /// Block this curator has precommitted, with the round it did so.
    locked: Option<(Digest, u32)>,
    /// Most recent block known to have a prevote supermajority; what the
    /// curator re-proposes when its turn comes.
    valid: Option<(Digest, u32)>,
    blocks: BTreeMap<Digest, Block<Transaction>>,
    /// First legitimate proposal seen per round; later conflicting ones
    /// from the same proposer are discarded.
    proposals: BTreeMap<u32, (Digest, Option<u32>)>,
    prevotes: BTreeMap<u32, BTreeMap<NodeId, SignedVote>>,
    precommits: BTreeMap<u32, BTreeMap<NodeId, SignedVote>>,
    /// Rounds in which a prevote supermajority was observed, and for what.
    polkas_seen: BTreeMap<u32, Digest>,
    /// Distinct curators heard from per round, for the skip rule.
    voters_by_round: BTreeMap<u32, BTreeSet<NodeId>>,
    d_propose: Option<SimTime>,
    d_polka: Option<SimTime>,
    d_round: Option<SimTime>,
    committed: bool,
}

impl HeightInstance {
    pub fn new(ctx: &InstCtx<'_>, height: u64, now: SimTime, out: &mut Vec<Act>) -> Self {
        let mut inst = HeightInstance {
            height,
            round: 0,
            step: Step::Propose,
            quorum_size: quorum(ctx.curators.len()),
            locked: None,
            valid: None,
            blocks: BTreeMap::new(),
            proposals: BTreeMap::new(),
            prevotes: BTreeMap::new(),
            precommits: BTreeMap::new(),
            polkas_seen: BTreeMap::new(),
            voters_by_round: BTreeMap::new(),
            d_propose: None,
            d_polka: None,
            d_round: None,
            committed: false,
        };
        inst.enter_round(ctx, 0, now, out);
        inst
    }

    pub fn height(&self) -> u64 {
        self.height
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn is_committed(&self) -> bool {
        self.committed
    }

    pub fn next_deadline(&self) -> Option<SimTime> {
        if self.committed {
            return None;
        }
        [self.d_propose, self.d_polka, self.d_round]
            .into_iter()
            .flatten()
            .min()
    }

    /// After a restart: votes, locks and the round survive (forgetting a
    /// precommit would let the curator co-sign a conflicting block), only
    /// the timers are re-anchored to the present.
    pub fn re_anchor(&mut self, now: SimTime) {
        let scale = self.round as u64 + 1;
        self.d_round = Some(now + T_ROUND.mul(scale));
        match self.step {
            Step::Propose => {
                self.d_propose = Some(now + T_PROPOSE.mul(scale));
                self.d_polka = Some(now + T_POLKA.mul(scale));
            }
            Step::Prevote => {
                self.d_propose = None;
                self.d_polka = Some(now + T_POLKA.mul(scale));
            }
            Step::Precommit => {
                self.d_propose = None;
                self.d_polka = None;
            }
        }
    }

    fn enter_round(&mut self, ctx: &InstCtx<'_>, round: u32, now: SimTime, out: &mut Vec<Act>) {
        self.round = round;
        self.step = Step::Propose;
        let scale = round as u64 + 1;
        self.d_propose = Some(now + T_PROPOSE.mul(scale));
        self.d_polka = Some(now + T_POLKA.mul(scale));
        self.d_round = Some(now + T_ROUND.mul(scale));

        if proposer(ctx.curators, self.height, round) == ctx.id {
            // Re-propose the newest block with a known prevote
            // supermajority, otherwise mint a fresh one.
            let choice = match self.valid {
                Some((d, vr)) => self.blocks.get(&d).map(|b| (b.clone(), Some(vr))),
                None => ctx.fresh.clone().map(|b| (b, None)),
            };
            if let Some((block, valid_round)) = choice {
                let signature = ctx
                    .key
                    .sign(&proposal_bytes(self.height, round, block.hash(), valid_round));
                out.push(Act::Broadcast(ConsMsg::Proposal {
                    height: self.height,
                    round,
                    block,
                    valid_round,
                    signature,
                }));
            }
        } else if self.proposals.contains_key(&round) {
            // The proposal outran our round change.
            self.maybe_prevote(ctx, out);
        }
    }

    pub fn handle_proposal(
        &mut self,
        ctx: &InstCtx<'_>,
        round: u32,
        block: Block<Transaction>,
        valid_round: Option<u32>,
        signature: &bdsas_core::Signature,
        out: &mut Vec<Act>,
    ) {
        if self.committed || block.height != self.height {
            return;
        }
        let digest = block.hash();
        let legit = proposer(ctx.curators, self.height, round);
        let Some(pk) = ctx.registry.public_key(legit) else { return };
        if !bdsas_core::verify_cached(
            pk,
            &proposal_bytes(self.height, round, digest, valid_round),
            signature,
        ) {
            return;
        }
        if self.proposals.contains_key(&round) {
            // A second proposal for the round is either a duplicate or
            // equivocation; only the first one heard counts.
            return;
        }
        self.proposals.insert(round, (digest, valid_round));
        self.blocks.insert(digest, block);

        if round == self.round && self.step == Step::Propose {
            self.maybe_prevote(ctx, out);
        }
        // The block may be the missing piece of an already-observed
        // prevote supermajority or precommit certificate.
        if self.polkas_seen.get(&round) == Some(&digest) {
            self.note_valid(digest, round);
            if round == self.round && self.step == Step::Prevote {
                self.lock_and_precommit(ctx, digest, out);
            }
        }
        self.try_commit(round, digest, out);
    }

    fn maybe_prevote(&mut self, ctx: &InstCtx<'_>, out: &mut Vec<Act>) {
        let Some(&(digest, valid_round)) = self.proposals.get(&self.round) else { return };
        let block = &self.blocks[&digest];
        let linked = block.prev_hash == ctx.tip && block.height == self.height;
        let polkas = &self.polkas_seen;
        let acceptable = accepts_proposal(self.locked, digest, valid_round, self.round, |d, vr| {
            polkas.get(&vr) == Some(d)
        });
        let vote = if linked && acceptable { Some(digest) } else { None };
        self.step = Step::Prevote;
        self.d_propose = None;
        out.push(Act::Broadcast(ConsMsg::Vote(make_vote(
            ctx.key,
            ctx.id,
            self.height,
            self.round,
            Phase::Prevote,
            vote,
        ))));
        // A prevote supermajority may have formed before we reached this
        // round; honor it now that we have prevoted ourselves.
        if self.polkas_seen.get(&self.round) == Some(&digest) {
            self.note_valid(digest, self.round);
            self.lock_and_precommit(ctx, digest, out);
        }
    }

    fn note_valid(&mut self, digest: Digest, round: u32) {
        if self.valid.is_none_or(|(_, vr)| vr < round) {
            self.valid = Some((digest, round));
        }
    }

    fn lock_and_precommit(&mut self, ctx: &InstCtx<'_>, digest: Digest, out: &mut Vec<Act>) {
        self.locked = Some((digest, self.round));
        self.step = Step::Precommit;
        self.d_polka = None;
        out.push(Act::Broadcast(ConsMsg::Vote(make_vote(
            ctx.key,
            ctx.id,
            self.height,
            self.round,
            Phase::Precommit,
            Some(digest),
        ))));
    }

    pub fn handle_vote(
        &mut self,
        ctx: &InstCtx<'_>,
        v: SignedVote,
        now: SimTime,
        out: &mut Vec<Act>,
    ) {
        if self.committed || v.height != self.height || !ctx.curators.contains(&v.voter) {
            return;
        }
        let Some(pk) = ctx.registry.public_key(&v.voter) else { return };
        if !v.verify(pk) {
            return;
        }
        let table = match v.phase {
            Phase::Prevote => &mut self.prevotes,
            Phase::Precommit => &mut self.precommits,
        };
        let slot = table.entry(v.round).or_default();
        if slot.contains_key(&v.voter) {
            // One vote per curator per round and phase; equivocating
            // duplicates are dropped.
            return;
        }
        let round = v.round;
        let phase = v.phase;
        let vote = v.vote;
        slot.insert(v.voter.clone(), v.clone());
        self.voters_by_round.entry(round).or_default().insert(v.voter);

        match (phase, vote) {
            (Phase::Prevote, Some(d)) => {
                let support = self.prevotes[&round]
                    .values()
                    .filter(|sv| sv.vote == Some(d))
                    .count();
                if support >= self.quorum_size && !self.polkas_seen.contains_key(&round) {
                    self.polkas_seen.insert(round, d);
                    if self.proposals.get(&round).map(|p| p.0) == Some(d)
                        && self.blocks.contains_key(&d)
                    {
                        self.note_valid(d, round);
                        if round == self.round && self.step == Step::Prevote {
                            self.lock_and_precommit(ctx, d, out);
                        }
                    }
                }
            }
            (Phase::Precommit, Some(d)) => {
                self.try_commit(round, d, out);
            }
            _ => {}
        }

        if round > self.round && !self.committed {
            let heard = self.voters_by_round[&round].len();
            if heard >= skip_threshold(ctx.curators.len()) {
                // Enough curators are already past us; jump to their round.
                self.enter_round(ctx, round, now, out);
            }
        }
    }

    fn try_commit(&mut self, round: u32, digest: Digest, out: &mut Vec<Act>) {
        if self.committed || !self.blocks.contains_key(&digest) {
            return;
        }
        let Some(slot) = self.precommits.get(&round) else { return };
        let qc: Vec<SignedVote> = slot
            .values()
            .filter(|sv| sv.vote == Some(digest))
            .cloned()
            .collect();
        if qc.len() >= self.quorum_size {
            self.committed = true;
            self.d_propose = None;
            self.d_polka = None;
            self.d_round = None;
            out.push(Act::Commit {
                block: self.blocks[&digest].clone(),
                round,
                qc,
            });
        }
    }

    pub fn on_wake(&mut self, ctx: &InstCtx<'_>, now: SimTime, out: &mut Vec<Act>) {
        if self.committed {
            return;
        }
        if self.d_round.is_some_and(|d| now >= d) {
            self.enter_round(ctx, self.round + 1, now, out);
            return;
        }
        if self.step == Step::Propose && self.d_propose.is_some_and(|d| now >= d) {
            // No usable proposal in time: prevote nil so the round can
            // still conclude.
            self.step = Step::Prevote;
            self.d_propose = None;
            out.push(Act::Broadcast(ConsMsg::Vote(make_vote(
                ctx.key,
                ctx.id,
                self.height,
                self.round,
                Phase::Prevote,
                None,
            ))));
        }
        if self.step == Step::Prevote && self.d_polka.is_some_and(|d| now >= d) {
            // No prevote supermajority in time: precommit nil. The lock,
            // if any, is untouched.
            self.step = Step::Precommit;
            self.d_polka = None;
            out.push(Act::Broadcast(ConsMsg::Vote(make_vote(
                ctx.key,
                ctx.id,
                self.height,
                self.round,
                Phase::Precommit,
                None,
            ))));
        }
    }
}
