//! A coordination-chain participant as a simulated-network node.
//!
//! Each node carries the transaction gossip layer, the per-height
//! consensus instance (curators only), the replicated [`ChainState`] and
//! the block ledger. Consensus work is lazy: while the mempool is empty
//! and no consensus traffic arrives, the node sleeps and a quiet network
//! stays quiet.
//!
//! Catch-up is pull-based. A node that suspects it is behind (right after
//! a restart, or while a height is taking long) broadcasts its height;
//! any peer that is ahead answers with the next block and the precommit
//! certificate that sealed it, which the receiver verifies before
//! committing. One block per beacon keeps the laggard pulling at its own
//! pace.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use bdsas_core::codec::{CodecError, Decode, Encode, Reader};
use bdsas_core::{
    sha256, Block, Digest, FeeClaim, IdentityRegistry, Ledger, NodeId, Role, STxPayload,
    SecretKey, SimDuration, SimTime, SyncBody, TokenAmount, Transaction, TxPayload,
    UnsignedTransaction, ZoneId,
};
use bdsas_reshuffle::vrf_evaluate;
use bdsas_simnet::{ByzantineBehavior, Node, Outbox};

use crate::consensus::{Act, HeightInstance, InstCtx};
use crate::gossip::{GossipMsg, GossipState};
use crate::state::{ChainState, GEvent};
use crate::vote::{quorum, verify_qc, ConsMsg, SignedVote};

/// Height beacon period while a node has reason to advertise itself.
pub const STATUS_INTERVAL: SimDuration = SimDuration::from_secs(2);
/// Beacons sent after a restart before going quiet again.
pub const STATUS_BURST: u32 = 3;
/// How long servers wait after a draw opens before the outcome is
/// proposed, leaving room for beacon entries to gossip and commit.
pub const OUTCOME_WINDOW: SimDuration = SimDuration::from_secs(5);
/// Mempool transactions packed into one proposed block at most.
pub const MAX_BLOCK_TXS: usize = 500;

#[derive(Clone, Debug)]
pub enum GMsg {
    Gossip(GossipMsg),
    Cons(ConsMsg),
}

impl Encode for GMsg {
    fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            GMsg::Gossip(m) => {
                out.push(0);
                m.encode_into(out);
            }
            GMsg::Cons(m) => {
                out.push(1);
                m.encode_into(out);
            }
        }
    }
}

impl Decode for GMsg {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(match r.byte()? {
            0 => GMsg::Gossip(GossipMsg::decode_from(r)?),
            1 => GMsg::Cons(ConsMsg::decode_from(r)?),
            tag => return Err(CodecError::BadTag { ty: "GMsg", tag }),
        })
    }
}

/// The message that hands a transaction to any node's gossip layer; used
/// by clients and tests to submit work.
pub fn submit_msg(tx: Transaction) -> GMsg {
    GMsg::Gossip(GossipMsg::Data(vec![tx]))
}

pub struct GchainConfig {
    pub id: NodeId,
    pub key: SecretKey,
    pub registry: IdentityRegistry,
    /// Consensus membership, identical on every node. Order is
    /// canonicalized internally so spelling differences cannot skew the
    /// proposer rotation.
    pub curators: Vec<NodeId>,
    /// Gossip fan-out targets; need not equal the curator set.
    pub gossip_peers: Vec<NodeId>,
    pub group_size: usize,
    /// Blocks between reshuffle draws.
    pub round_interval: u64,
    pub genesis_time: SimTime,
}

pub struct GchainNode {
    id: NodeId,
    key: SecretKey,
    curators: Vec<NodeId>,
    registry: IdentityRegistry,
    gossip: GossipState,
    chain: ChainState,
    ledger: Ledger<Transaction>,
    /// Round and certificate per committed height, replayed to laggards.
    qcs: BTreeMap<u64, (u32, Vec<SignedVote>)>,
    inst: Option<HeightInstance>,
    mempool: Vec<Transaction>,
    mempool_set: BTreeSet<Digest>,
    next_nonce: u64,
    status_at: SimTime,
    status_burst: u32,
    /// Reshuffle rounds whose outcome this node may still have to propose.
    outcome_due: Vec<(u64, SimTime)>,
    byz: Option<ByzantineBehavior>,
    byz_forge_at: Option<SimTime>,
    /// Original and substitute block digests per (height, round), kept by
    /// an equivocating proposer so its votes stay consistent with whichever
    /// proposal each peer received.
    byz_alt: BTreeMap<(u64, u32), (Digest, Digest)>,
    events: Vec<GEvent>,
}

impl GchainNode {
    pub fn new(config: GchainConfig) -> Self {
        let GchainConfig {
            id,
            key,
            registry,
            mut curators,
            gossip_peers,
            group_size,
            round_interval,
            genesis_time,
        } = config;
        curators.sort();
        curators.dedup();
        let chain = ChainState::new(registry.clone(), group_size, round_interval);
        let ledger = Ledger::new("g", Block::genesis(genesis_time), chain.digest())
            .expect("genesis block is well-formed");
        GchainNode {
            id,
            key,
            curators,
            registry,
            gossip: GossipState::new(gossip_peers),
            chain,
            ledger,
            qcs: BTreeMap::new(),
            inst: None,
            mempool: Vec::new(),
            mempool_set: BTreeSet::new(),
            next_nonce: 0,
            status_at: genesis_time,
            status_burst: 0,
            outcome_due: Vec::new(),
            byz: None,
            byz_forge_at: None,
            byz_alt: BTreeMap::new(),
            events: Vec::new(),
        }
    }

    pub fn id(&self) -> &NodeId {
        &self.id
    }

    pub fn ledger(&self) -> &Ledger<Transaction> {
        &self.ledger
    }

    pub fn chain(&self) -> &ChainState {
        &self.chain
    }

    pub fn gossip(&self) -> &GossipState {
        &self.gossip
    }

    pub fn height(&self) -> u64 {
        self.ledger.height()
    }

    pub fn take_events(&mut self) -> Vec<GEvent> {
        std::mem::take(&mut self.events)
    }

    fn is_curator(&self) -> bool {
        self.curators.contains(&self.id)
    }

    fn build_fresh(&self, now: SimTime) -> Option<Block<Transaction>> {
        if self.mempool.is_empty() {
            return None;
        }
        let txs: Vec<Transaction> = self.mempool.iter().take(MAX_BLOCK_TXS).cloned().collect();
        Some(Block::new(self.ledger.height() + 1, self.ledger.tip_hash(), now, txs))
    }

    /// Feeds one instance call and drives the resulting actions to the
    /// network and back into the instance.
    fn with_instance(
        &mut self,
        now: SimTime,
        out: &mut Outbox<GMsg>,
        call: impl FnOnce(&mut HeightInstance, &InstCtx<'_>, &mut Vec<Act>),
    ) {
        let tip = self.ledger.tip_hash();
        let fresh = self.build_fresh(now);
        let mut acts = Vec::new();
        {
            let ctx = InstCtx {
                id: &self.id,
                key: &self.key,
                curators: &self.curators,
                registry: &self.registry,
                tip,
                fresh,
            };
            if let Some(inst) = self.inst.as_mut() {
                call(inst, &ctx, &mut acts);
            }
        }
        self.drive(acts, now, out);
    }

    fn activate(&mut self, now: SimTime, out: &mut Outbox<GMsg>) {
        if self.inst.is_some() || !self.is_curator() {
            return;
        }
        let height = self.ledger.height() + 1;
        let tip = self.ledger.tip_hash();
        let fresh = self.build_fresh(now);
        let mut acts = Vec::new();
        let inst = {
            let ctx = InstCtx {
                id: &self.id,
                key: &self.key,
                curators: &self.curators,
                registry: &self.registry,
                tip,
                fresh,
            };
            HeightInstance::new(&ctx, height, now, &mut acts)
        };
        self.inst = Some(inst);
        self.drive(acts, now, out);
    }

    fn drive(&mut self, acts: Vec<Act>, now: SimTime, out: &mut Outbox<GMsg>) {
        let mut queue: VecDeque<Act> = acts.into();
        while let Some(act) = queue.pop_front() {
            match act {
                Act::Broadcast(msg) => {
                    let echo = self.broadcast_cons(msg, out);
                    if let Some(m) = echo {
                        let mut more = Vec::new();
                        self.route_local(m, now, &mut more);
                        queue.extend(more);
                    }
                }
                Act::Commit { block, round, qc } => {
                    let more = self.commit_block(block, round, qc, now, out);
                    queue.extend(more);
                }
            }
        }
    }

    /// Sends a consensus message to every other curator, applying the
    /// scripted equivocation if one is active. Returns the variant this
    /// node treats as its own.
    fn broadcast_cons(&mut self, msg: ConsMsg, out: &mut Outbox<GMsg>) -> Option<ConsMsg> {
        if self.byz == Some(ByzantineBehavior::EquivocateProposal) {
            if let Some(echo) = self.broadcast_equivocating(&msg, out) {
                return Some(echo);
            }
        }
        for c in &self.curators {
            if c != &self.id {
                out.send(c, GMsg::Cons(msg.clone()));
            }
        }
        Some(msg)
    }

    /// Splits the curator set: half receive the real message, half a
    /// conflicting substitute signed just as carefully. Returns the
    /// message the node itself adopts, or None when the message is not
    /// one this script rewrites.
    fn broadcast_equivocating(
        &mut self,
        msg: &ConsMsg,
        out: &mut Outbox<GMsg>,
    ) -> Option<ConsMsg> {
        match msg {
            ConsMsg::Proposal { height, round, block, valid_round, .. } => {
                let mut alt_block = block.clone();
                if alt_block.txs.len() >= 2 {
                    alt_block.txs.reverse();
                } else {
                    alt_block.cut_time = alt_block.cut_time + SimDuration::from_nanos(1);
                }
                let alt_sig = self.key.sign(&crate::vote::proposal_bytes(
                    *height,
                    *round,
                    alt_block.hash(),
                    *valid_round,
                ));
                let alt = ConsMsg::Proposal {
                    height: *height,
                    round: *round,
                    block: alt_block.clone(),
                    valid_round: *valid_round,
                    signature: alt_sig,
                };
                self.byz_alt
                    .insert((*height, *round), (block.hash(), alt_block.hash()));
                let mut flip = false;
                for c in &self.curators {
                    if c == &self.id {
                        continue;
                    }
                    out.send(c, GMsg::Cons(if flip { alt.clone() } else { msg.clone() }));
                    flip = !flip;
                }
                Some(msg.clone())
            }
            ConsMsg::Vote(v) => {
                let d = v.vote?;
                let (orig, alt) = *self.byz_alt.get(&(v.height, v.round))?;
                if d != orig {
                    return None;
                }
                let alt_vote = crate::vote::make_vote(
                    &self.key,
                    &self.id,
                    v.height,
                    v.round,
                    v.phase,
                    Some(alt),
                );
                let mut flip = false;
                for c in &self.curators {
                    if c == &self.id {
                        continue;
                    }
                    let m = if flip {
                        ConsMsg::Vote(alt_vote.clone())
                    } else {
                        msg.clone()
                    };
                    out.send(c, GMsg::Cons(m));
                    flip = !flip;
                }
                Some(msg.clone())
            }
            _ => None,
        }
    }

    fn route_local(&mut self, msg: ConsMsg, now: SimTime, acts: &mut Vec<Act>) {
        let tip = self.ledger.tip_hash();
        let fresh = self.build_fresh(now);
        let ctx = InstCtx {
            id: &self.id,
            key: &self.key,
            curators: &self.curators,
            registry: &self.registry,
            tip,
            fresh,
        };
        let Some(inst) = self.inst.as_mut() else { return };
        match msg {
            ConsMsg::Proposal { round, block, valid_round, signature, .. } => {
                inst.handle_proposal(&ctx, round, block, valid_round, &signature, acts);
            }
            ConsMsg::Vote(v) => inst.handle_vote(&ctx, v, now, acts),
            _ => {}
        }
    }

    fn commit_block(
        &mut self,
        mut block: Block<Transaction>,
        round: u32,
        qc: Vec<SignedVote>,
        now: SimTime,
        out: &mut Outbox<GMsg>,
    ) -> Vec<Act> {
        debug_assert_eq!(block.height, self.ledger.height() + 1);
        let (flags, evs) = self.chain.apply_block(&block);
        block.validation_flags = flags;
        let height = block.height;
        self.ledger
            .append(block, self.chain.digest())
            .expect("instance and catch-up both check linkage");
        self.qcs.insert(height, (round, qc));
        let chain = &self.chain;
        self.mempool.retain(|tx| !chain.is_committed(&tx.digest()));
        self.mempool_set = self.mempool.iter().map(|tx| tx.digest()).collect();
        self.inst = None;

        for ev in &evs {
            if let GEvent::ReshuffleDue { round, seed } = ev {
                self.join_draw(*round, *seed, now, out);
            }
        }
        self.events.extend(evs);

        // More work waiting: open the next height right away.
        let mut acts = Vec::new();
        if !self.mempool.is_empty() && self.is_curator() {
            let tip = self.ledger.tip_hash();
            let fresh = self.build_fresh(now);
            let ctx = InstCtx {
                id: &self.id,
                key: &self.key,
                curators: &self.curators,
                registry: &self.registry,
                tip,
                fresh,
            };
            self.inst = Some(HeightInstance::new(&ctx, height + 1, now, &mut acts));
        }
        acts
    }

    /// A draw opened: publish this server's beacon entry for each of its
    /// zones, and note when the outcome should be proposed.
    fn join_draw(&mut self, round: u64, seed: Digest, now: SimTime, out: &mut Outbox<GMsg>) {
        if self.registry.role(&self.id) != Some(Role::SasServer) {
            return;
        }
        let zones: Vec<ZoneId> = self
            .registry
            .get(&self.id)
            .map(|ident| ident.zones.iter().cloned().collect())
            .unwrap_or_default();
        for zone in zones {
            let vrf = vrf_evaluate(&self.key, &seed, &zone);
            let body = SyncBody::VrfSubmission {
                round,
                output: vrf.output,
                proof: vrf.proof.to_bytes().to_vec(),
            };
            if let Some(tx) = self.make_stx(zone, body) {
                self.submit_local(tx, now, out);
            }
        }
        self.outcome_due.push((round, now + OUTCOME_WINDOW));
    }

    /// Once the submission window closes, the smallest member of the
    /// recomputed committee publishes the outcome for its zone. Everyone
    /// recomputes the same draw, so at most that one node speaks per zone.
    fn propose_outcomes(&mut self, round: u64, now: SimTime, out: &mut Outbox<GMsg>) {
        if self.registry.role(&self.id) != Some(Role::SasServer) {
            return;
        }
        let mut zones: BTreeSet<ZoneId> = BTreeSet::new();
        for ident in self.registry.iter() {
            zones.extend(ident.zones.iter().cloned());
        }
        for zone in zones {
            let Some(committee) = self.chain.recompute_committee(round, &zone) else {
                continue;
            };
            if committee.first() != Some(&self.id) {
                continue;
            }
            let body = SyncBody::CommitteeOutcome { round, committee };
            if let Some(tx) = self.make_stx(zone, body) {
                self.submit_local(tx, now, out);
            }
        }
    }

    fn make_stx(&mut self, zone: ZoneId, body: SyncBody) -> Option<Transaction> {
        let ident = self.registry.get(&self.id)?.clone();
        self.next_nonce += 1;
        let unsigned = UnsignedTransaction {
            proposer: self.id.clone(),
            nonce: self.next_nonce,
            payload: TxPayload::Sync(STxPayload {
                zone,
                body,
                attestations: Vec::new(),
            }),
        };
        unsigned.sign(&self.key, &ident).ok()
    }

    /// Injects a locally-originated transaction: into gossip so the rest
    /// of the network fetches it, and into the mempool for block building.
    pub fn submit_local(&mut self, tx: Transaction, now: SimTime, out: &mut Outbox<GMsg>) {
        let mut gout = Vec::new();
        self.gossip.insert_local(tx.clone(), &mut gout);
        for (to, m) in gout {
            out.send(&to, GMsg::Gossip(m));
        }
        self.admit(tx, now, out);
    }

    fn admit(&mut self, tx: Transaction, now: SimTime, out: &mut Outbox<GMsg>) {
        let digest = tx.digest();
        if self.chain.is_committed(&digest) || !self.mempool_set.insert(digest) {
            return;
        }
        self.mempool.push(tx);
        self.activate(now, out);
    }

    fn beacon_armed(&self) -> bool {
        self.is_curator() && (self.status_burst > 0 || self.inst.is_some())
    }

    fn send_status(&mut self, now: SimTime, out: &mut Outbox<GMsg>) {
        let msg = ConsMsg::Status { height: self.ledger.height() };
        for c in &self.curators {
            if c != &self.id {
                out.send(c, GMsg::Cons(msg.clone()));
            }
        }
        self.status_at = now + STATUS_INTERVAL;
        self.status_burst = self.status_burst.saturating_sub(1);
    }

    fn forge_stx(&mut self, now: SimTime, out: &mut Outbox<GMsg>) {
        // A fee claim for a grant that never existed, with no co-signer
        // willing to attest: the chain must finalize it invalid.
        let zone = self
            .registry
            .get(&self.id)
            .and_then(|ident| ident.zones.iter().next().cloned())
            .unwrap_or_else(|| ZoneId::new("zone-0"));
        let body = SyncBody::FeeClearing {
            claims: vec![FeeClaim {
                grant_id: sha256(b"no such grant"),
                splits: vec![(self.id.clone(), TokenAmount::from_tokens(1_000))],
            }],
            lchain_height: 0,
        };
        if let Some(tx) = self.make_stx(zone, body) {
            self.submit_local(tx, now, out);
        }
    }
}

impl Node for GchainNode {
    type Msg = GMsg;

    fn on_message(&mut self, from: &NodeId, msg: GMsg, now: SimTime, out: &mut Outbox<GMsg>) {
        match msg {
            GMsg::Gossip(g) => {
                let mut gout = Vec::new();
                let registry = &self.registry;
                let fresh = self.gossip.on_message(
                    from,
                    g,
                    now,
                    |tx| {
                        registry
                            .public_key(&tx.proposer)
                            .is_some_and(|pk| tx.verify_signature(pk))
                    },
                    &mut gout,
                );
                for (to, m) in gout {
                    out.send(&to, GMsg::Gossip(m));
                }
                for tx in fresh {
                    self.admit(tx, now, out);
                }
            }
            GMsg::Cons(ConsMsg::Status { height }) => {
                if self.ledger.height() > height {
                    let h = height + 1;
                    if let (Some(block), Some((round, qc))) =
                        (self.ledger.block(h), self.qcs.get(&h))
                    {
                        out.send(
                            from,
                            GMsg::Cons(ConsMsg::Decided {
                                block: block.clone(),
                                round: *round,
                                qc: qc.clone(),
                            }),
                        );
                    }
                }
            }
            GMsg::Cons(ConsMsg::Decided { block, round, qc }) => {
                if block.height != self.ledger.height() + 1
                    || block.prev_hash != self.ledger.tip_hash()
                {
                    return;
                }
                let ok = verify_qc(
                    &qc,
                    block.height,
                    round,
                    block.hash(),
                    &self.curators,
                    |id| self.registry.public_key(id).copied(),
                    quorum(self.curators.len()),
                );
                if !ok {
                    return;
                }
                let mut block = block;
                block.validation_flags.clear();
                let acts = self.commit_block(block, round, qc, now, out);
                self.drive(acts, now, out);
                // Pull the next block if the peer has more.
                out.send(
                    from,
                    GMsg::Cons(ConsMsg::Status { height: self.ledger.height() }),
                );
            }
            GMsg::Cons(m) => {
                if !self.is_curator() {
                    return;
                }
                let h = match &m {
                    ConsMsg::Proposal { height, .. } => *height,
                    ConsMsg::Vote(v) => v.height,
                    _ => unreachable!("status and decided handled above"),
                };
                if h != self.ledger.height() + 1 {
                    // Stale rounds are history; future heights arrive via
                    // catch-up once the gap closes.
                    return;
                }
                self.activate(now, out);
                let mut acts = Vec::new();
                self.route_local(m, now, &mut acts);
                self.drive(acts, now, out);
            }
        }
    }

    fn on_wake(&mut self, now: SimTime, out: &mut Outbox<GMsg>) {
        let mut gout = Vec::new();
        self.gossip.poll(now, &mut gout);
        for (to, m) in gout {
            out.send(&to, GMsg::Gossip(m));
        }

        if self.byz == Some(ByzantineBehavior::FabricateSTx)
            && self.byz_forge_at.is_some_and(|t| now >= t)
        {
            self.byz_forge_at = None;
            self.forge_stx(now, out);
        }

        let due: Vec<u64> = self
            .outcome_due
            .iter()
            .filter(|(_, t)| now >= *t)
            .map(|(r, _)| *r)
            .collect();
        self.outcome_due.retain(|(_, t)| now < *t);
        for round in due {
            self.propose_outcomes(round, now, out);
        }

        if self.inst.as_ref().and_then(|i| i.next_deadline()).is_some_and(|d| now >= d) {
            self.with_instance(now, out, |inst, ctx, acts| inst.on_wake(ctx, now, acts));
        }

        if self.beacon_armed() && now >= self.status_at {
            self.send_status(now, out);
        }
    }

    fn next_wake(&self) -> Option<SimTime> {
        let mut next = self.gossip.next_deadline();
        let mut fold = |t: Option<SimTime>| {
            next = match (next, t) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            };
        };
        fold(self.inst.as_ref().and_then(|i| i.next_deadline()));
        fold(self.outcome_due.iter().map(|(_, t)| *t).min());
        if self.beacon_armed() {
            fold(Some(self.status_at));
        }
        if self.byz == Some(ByzantineBehavior::FabricateSTx) {
            fold(self.byz_forge_at);
        }
        next
    }

    fn on_restart(&mut self, now: SimTime, out: &mut Outbox<GMsg>) {
        // Chain, votes and locks are durable; only timers need new
        // anchors. Forgetting a precommit here could co-sign a fork later.
        if let Some(inst) = self.inst.as_mut() {
            inst.re_anchor(now);
        }
        self.status_burst = STATUS_BURST;
        self.send_status(now, out);
    }

    fn on_byzantine(&mut self, behavior: ByzantineBehavior) {
        self.byz = Some(behavior);
        if behavior == ByzantineBehavior::FabricateSTx {
            self.byz_forge_at = Some(SimTime::ZERO);
        }
    }
}
