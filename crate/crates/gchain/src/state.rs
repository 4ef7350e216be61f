//! Replicated state of the coordination chain.
//!
//! Every curator applies committed blocks through [`ChainState::apply_block`]
//! and gets the same per-transaction validity verdicts and the same token
//! balances, because every rule here reads only the chain prefix: committed
//! sync records are judged by counting attestations from the zone's serving
//! set, committee selections by re-running the draw against the recorded
//! beacon entries, fee credits by replaying the splits. Nothing depends on
//! who is applying the block or when.

use std::collections::{BTreeMap, BTreeSet};

use bdsas_core::{
    sha256, Block, Digest, IdentityRegistry, NodeId, PublicKey, RTxPayload, Role, Signature,
    SyncBody, TokenAmount, Transaction, TxPayload, ZoneId,
};
use bdsas_reshuffle::{vrf_verify, ReshuffleRound, VrfOutput, ROUND_INTERVAL_BLOCKS};

/// Token balances of the spectrum servers. Credits come only from cleared
/// access fees, so the sum of balances always equals the sum of cleared
/// escrows.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TokenLedger {
    balances: BTreeMap<NodeId, TokenAmount>,
}

impl TokenLedger {
    pub fn new() -> Self {
        TokenLedger::default()
    }

    pub fn credit(&mut self, who: &NodeId, amount: TokenAmount) {
        let slot = self.balances.entry(who.clone()).or_insert(TokenAmount::ZERO);
        *slot = TokenAmount(slot.0 + amount.0);
    }

    pub fn balance(&self, who: &NodeId) -> TokenAmount {
        self.balances.get(who).copied().unwrap_or(TokenAmount::ZERO)
    }

    pub fn total(&self) -> TokenAmount {
        TokenAmount(self.balances.values().map(|a| a.0).sum())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, TokenAmount)> {
        self.balances.iter().map(|(k, v)| (k, *v))
    }
}

/// A reshuffle round opened by the chain itself: the trigger block's hash
/// is the beacon seed, and the draw entries are the submissions committed
/// afterwards.
#[derive(Clone, Debug)]
pub struct RoundCtx {
    pub seed: Digest,
    pub submissions: BTreeMap<ZoneId, BTreeMap<NodeId, VrfOutput>>,
}

/// Everything that happened in a block, for the layers above.
#[derive(Clone, Debug)]
pub enum GEvent {
    Committed {
        height: u64,
        hash: Digest,
        txs: usize,
    },
    Finalized {
        height: u64,
        tx: Transaction,
        valid: bool,
    },
    /// A new draw opened; servers should publish their beacon entries.
    ReshuffleDue { round: u64, seed: Digest },
    /// A committee outcome finalized valid: this zone is now served by
    /// `members` until the next outcome.
    CommitteeSelected {
        zone: ZoneId,
        round: u64,
        members: Vec<NodeId>,
    },
    FeesCleared {
        zone: ZoneId,
        grant_ids: Vec<Digest>,
        total: TokenAmount,
    },
}

pub struct ChainState {
    registry: IdentityRegistry,
    group_size: usize,
    round_interval: u64,
    /// Current serving committee per zone; falls back to the registry's
    /// zone membership until a first selection lands.
    serving: BTreeMap<ZoneId, BTreeSet<NodeId>>,
    /// Digests of every committed transaction, valid or not.
    committed: BTreeSet<Digest>,
    /// Grant ids whose fees have been cleared; a second claim is invalid.
    cleared: BTreeSet<Digest>,
    tokens: TokenLedger,
    rounds: BTreeMap<u64, RoundCtx>,
}

impl ChainState {
    pub fn new(registry: IdentityRegistry, group_size: usize, round_interval: u64) -> Self {
        assert!(round_interval > 0, "round interval must be positive");
        ChainState {
            registry,
            group_size,
            round_interval,
            serving: BTreeMap::new(),
            committed: BTreeSet::new(),
            cleared: BTreeSet::new(),
            tokens: TokenLedger::new(),
            rounds: BTreeMap::new(),
        }
    }

    pub fn default_interval(registry: IdentityRegistry, group_size: usize) -> Self {
        ChainState::new(registry, group_size, ROUND_INTERVAL_BLOCKS)
    }

    pub fn tokens(&self) -> &TokenLedger {
        &self.tokens
    }

    pub fn registry(&self) -> &IdentityRegistry {
        &self.registry
    }

    pub fn round(&self, round: u64) -> Option<&RoundCtx> {
        self.rounds.get(&round)
    }

    pub fn is_committed(&self, digest: &Digest) -> bool {
        self.committed.contains(digest)
    }

    pub fn fees_cleared(&self, grant_id: &Digest) -> bool {
        self.cleared.contains(grant_id)
    }

    /// The servers whose attestations currently speak for a zone.
    pub fn serving_of(&self, zone: &ZoneId) -> BTreeSet<NodeId> {
        match self.serving.get(zone) {
            Some(set) => set.clone(),
            None => self.registry.zone_servers(zone).into_iter().collect(),
        }
    }

    /// Applies one committed block: returns the validity flag per
    /// transaction plus the events it produced. Must be called in height
    /// order with the exact committed blocks.
    pub fn apply_block(&mut self, block: &Block<Transaction>) -> (Vec<bool>, Vec<GEvent>) {
        let mut flags = Vec::with_capacity(block.txs.len());
        let mut events = Vec::new();
        for tx in &block.txs {
            let valid = self.apply_tx(tx, &mut events);
            flags.push(valid);
            events.push(GEvent::Finalized {
                height: block.height,
                tx: tx.clone(),
                valid,
            });
            self.committed.insert(tx.digest());
        }
        // The block that closes an interval opens a reshuffle draw, seeded
        // by its own hash: nobody can know the seed before this block is
        // fixed, so beacon entries for the round are unforgeable ahead of
        // time.
        if block.height > 0 && block.height % self.round_interval == 0 {
            let round = block.height / self.round_interval;
            let seed = block.hash();
            self.rounds.insert(
                round,
                RoundCtx { seed, submissions: BTreeMap::new() },
            );
            events.push(GEvent::ReshuffleDue { round, seed });
        }
        events.insert(
            0,
            GEvent::Committed {
                height: block.height,
                hash: block.hash(),
                txs: block.txs.len(),
            },
        );
        (flags, events)
    }

    fn apply_tx(&mut self, tx: &Transaction, events: &mut Vec<GEvent>) -> bool {
        let Some(pk) = self.registry.public_key(&tx.proposer) else {
            return false;
        };
        if !tx.verify_signature(pk) {
            return false;
        }
        if self.committed.contains(&tx.digest()) {
            // Replays carry no new information and must not double-apply.
            return false;
        }
        match &tx.payload {
            TxPayload::Regulatory(r) => self.apply_regulatory(&tx.proposer, r),
            TxPayload::Sync(s) => self.apply_sync(tx, &s.zone, &s.body, events),
            // Channel, device and access traffic belongs to the zone
            // chains; it never finalizes here.
            _ => false,
        }
    }

    fn apply_regulatory(&mut self, proposer: &NodeId, _r: &RTxPayload) -> bool {
        // Rule content is interpreted by the zone chains once their
        // servers bridge it over; the coordination chain only checks the
        // authority behind it.
        self.registry.role(proposer) == Some(Role::Regulator)
    }

    fn apply_sync(
        &mut self,
        tx: &Transaction,
        zone: &ZoneId,
        body: &SyncBody,
        events: &mut Vec<GEvent>,
    ) -> bool {
        if self.registry.role(&tx.proposer) != Some(Role::SasServer) {
            return false;
        }
        match body {
            SyncBody::VrfSubmission { round, output, proof } => {
                let Some(seed) = self.rounds.get(round).map(|c| c.seed) else {
                    return false;
                };
                let Ok(sig_bytes) = <[u8; 64]>::try_from(proof.as_slice()) else {
                    return false;
                };
                let vrf = VrfOutput {
                    output: *output,
                    proof: Signature::from_bytes(&sig_bytes),
                };
                let Some(pk) = self.registry.public_key(&tx.proposer) else {
                    return false;
                };
                if !vrf_verify(pk, &seed, zone, &vrf) {
                    return false;
                }
                self.rounds
                    .get_mut(round)
                    .expect("round checked above")
                    .submissions
                    .entry(zone.clone())
                    .or_default()
                    .insert(tx.proposer.clone(), vrf);
                true
            }
            SyncBody::CommitteeOutcome { round, committee } => {
                let Some(expect) = self.recompute_committee(*round, zone) else {
                    return false;
                };
                if &expect != committee {
                    return false;
                }
                self.serving
                    .insert(zone.clone(), committee.iter().cloned().collect());
                events.push(GEvent::CommitteeSelected {
                    zone: zone.clone(),
                    round: *round,
                    members: committee.clone(),
                });
                true
            }
            SyncBody::Registration { .. } => self.attested(tx, zone),
            SyncBody::FeeClearing { claims, .. } => {
                if !self.attested(tx, zone) {
                    return false;
                }
                if claims.is_empty() {
                    return false;
                }
                let mut ids = BTreeSet::new();
                for claim in claims {
                    // Each grant's escrow clears exactly once, ever.
                    if self.cleared.contains(&claim.grant_id) || !ids.insert(claim.grant_id) {
                        return false;
                    }
                }
                let mut total = TokenAmount::ZERO;
                let mut grant_ids = Vec::new();
                for claim in claims {
                    self.cleared.insert(claim.grant_id);
                    grant_ids.push(claim.grant_id);
                    for (server, amount) in &claim.splits {
                        self.tokens.credit(server, *amount);
                        total = TokenAmount(total.0 + amount.0);
                    }
                }
                events.push(GEvent::FeesCleared {
                    zone: zone.clone(),
                    grant_ids,
                    total,
                });
                true
            }
        }
    }

    /// A sync record is valid when a strict majority of the zone's serving
    /// servers attested to its body. The proposer's envelope signature is
    /// its own attestation if it serves the zone.
    fn attested(&self, tx: &Transaction, zone: &ZoneId) -> bool {
        let TxPayload::Sync(payload) = &tx.payload else { return false };
        let serving = self.serving_of(zone);
        if serving.is_empty() {
            return false;
        }
        let message = bdsas_core::STxPayload::attested_bytes(zone, &payload.body);
        let mut who = BTreeSet::new();
        if serving.contains(&tx.proposer) {
            who.insert(tx.proposer.clone());
        }
        for att in &payload.attestations {
            if !serving.contains(&att.server) {
                continue;
            }
            let Some(pk) = self.registry.public_key(&att.server) else {
                continue;
            };
            if bdsas_core::verify_cached(pk, &message, &att.signature) {
                who.insert(att.server.clone());
            }
        }
        who.len() >= serving.len() / 2 + 1
    }

    /// Re-runs the committee draw for a zone from the recorded beacon
    /// entries. Any party holding the chain prefix gets the same answer.
    pub fn recompute_committee(&self, round: u64, zone: &ZoneId) -> Option<Vec<NodeId>> {
        let ctx = self.rounds.get(&round)?;
        let mut draw = ReshuffleRound::new(round, ctx.seed, self.group_size);
        let keys: BTreeMap<NodeId, PublicKey> = self
            .registry
            .with_role(Role::SasServer)
            .map(|ident| (ident.id.clone(), ident.public_key))
            .collect();
        if let Some(subs) = ctx.submissions.get(zone) {
            for (server, vrf) in subs {
                draw.submit(zone.clone(), server.clone(), *vrf);
            }
        }
        let selection = draw.select(zone, &keys);
        Some(selection.servers.into_iter().collect())
    }

    /// Digest over the replicated state, recorded next to each block so
    /// divergence between curators is caught at the ledger level.
    pub fn digest(&self) -> Digest {
        let mut bytes = Vec::new();
        for (id, amount) in self.tokens.iter() {
            bdsas_core::codec::Encode::encode_into(id, &mut bytes);
            bdsas_core::codec::Encode::encode_into(&amount.0, &mut bytes);
        }
        for grant in &self.cleared {
            bdsas_core::codec::Encode::encode_into(grant, &mut bytes);
        }
        for (zone, set) in &self.serving {
            bdsas_core::codec::Encode::encode_into(zone, &mut bytes);
            for id in set {
                bdsas_core::codec::Encode::encode_into(id, &mut bytes);
            }
        }
        for round in self.rounds.keys() {
            bdsas_core::codec::Encode::encode_into(round, &mut bytes);
        }
        sha256(&bytes)
    }
}
