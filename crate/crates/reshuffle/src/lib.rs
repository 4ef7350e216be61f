//! Periodic reassignment of servers to zone committees.
//!
//! Every [`ROUND_INTERVAL_BLOCKS`] blocks on the global chain, each server
//! evaluates a verifiable random function over the round seed and zone,
//! publishes the output with its proof, and the lowest-ranked outputs win
//! the zone's seats. Anyone can re-derive every committee from the published
//! submissions alone: the selection is a pure function of on-chain data.

use std::collections::{BTreeMap, BTreeSet};

use bdsas_core::codec::{CodecError, Decode, Encode, Reader};
use bdsas_core::{sha256, verify_cached, Digest, NodeId, PublicKey, SecretKey, Signature, ZoneId};

/// A committee round is triggered every this many global-chain blocks.
pub const ROUND_INTERVAL_BLOCKS: u64 = 50;

/// One server's verifiable randomness for one (round, zone).
///
/// The proof is a deterministic signature over the domain-separated
/// `seed || zone` message; the output is the hash of the proof bytes.
/// Determinism of the signature scheme makes the output unique per
/// (key, seed, zone), and unforgeability makes it unpredictable to anyone
/// without the secret key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct VrfOutput {
    pub output: Digest,
    pub proof: Signature,
}

fn vrf_message(seed: &Digest, zone: &ZoneId) -> Vec<u8> {
    let mut m = Vec::with_capacity(9 + 32 + zone.as_str().len());
    m.extend_from_slice(b"bdsas-vrf");
    m.extend_from_slice(seed.as_bytes());
    m.extend_from_slice(zone.as_str().as_bytes());
    m
}

pub fn vrf_evaluate(sk: &SecretKey, seed: &Digest, zone: &ZoneId) -> VrfOutput {
    let proof = sk.sign(&vrf_message(seed, zone));
    VrfOutput { output: sha256(&proof.to_bytes()), proof }
}

pub fn vrf_verify(pk: &PublicKey, seed: &Digest, zone: &ZoneId, vrf: &VrfOutput) -> bool {
    vrf.output == sha256(&vrf.proof.to_bytes())
        && verify_cached(pk, &vrf_message(seed, zone), &vrf.proof)
}

impl Encode for VrfOutput {
    fn encode_into(&self, out: &mut Vec<u8>) {
        self.output.encode_into(out);
        self.proof.encode_into(out);
    }
}

impl Decode for VrfOutput {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(VrfOutput { output: Digest::decode_from(r)?, proof: Signature::decode_from(r)? })
    }
}

/// A zone's selected servers, with the degraded-round flag set when fewer
/// than `group_size` valid submissions arrived and every submitter won a
/// seat by default.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Selection {
    pub servers: BTreeSet<NodeId>,
    pub degraded: bool,
}

/// One reshuffle round: seed, submissions as published on the global
/// chain, and the finalized per-zone outcome.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ReshuffleRound {
    pub round: u64,
    /// Digest of the global-chain block hash at the trigger height: public
    /// randomness nobody chose.
    pub seed: Digest,
    pub group_size: usize,
    pub submissions: BTreeMap<ZoneId, BTreeMap<NodeId, VrfOutput>>,
    pub outcome: BTreeMap<ZoneId, Selection>,
}

impl ReshuffleRound {
    pub fn new(round: u64, seed: Digest, group_size: usize) -> Self {
        assert!(group_size > 0, "a committee needs at least one seat");
        ReshuffleRound {
            round,
            seed,
            group_size,
            submissions: BTreeMap::new(),
            outcome: BTreeMap::new(),
        }
    }

    /// Records a submission. Verification happens at selection time so the
    /// audit trail keeps invalid submissions visible.
    pub fn submit(&mut self, zone: ZoneId, server: NodeId, vrf: VrfOutput) {
        self.submissions.entry(zone).or_default().insert(server, vrf);
    }

    /// Submissions for a zone that rank: the submitter is a registered
    /// server and the proof verifies against its key and this round's seed.
    pub fn verified(
        &self,
        zone: &ZoneId,
        registry: &BTreeMap<NodeId, PublicKey>,
    ) -> Vec<(NodeId, VrfOutput)> {
        let Some(subs) = self.submissions.get(zone) else { return Vec::new() };
        subs.iter()
            .filter(|(server, vrf)| {
                registry
                    .get(*server)
                    .is_some_and(|pk| vrf_verify(pk, &self.seed, zone, vrf))
            })
            .map(|(server, vrf)| (server.clone(), *vrf))
            .collect()
    }

    /// The `group_size` servers with the byte-lexicographically smallest
    /// outputs, ties broken by server id. Short rounds select everyone who
    /// verifiably submitted.
    pub fn select(&self, zone: &ZoneId, registry: &BTreeMap<NodeId, PublicKey>) -> Selection {
        let mut ranked = self.verified(zone, registry);
        ranked.sort_by(|a, b| (a.1.output, &a.0).cmp(&(b.1.output, &b.0)));
        let degraded = ranked.len() < self.group_size;
        Selection {
            servers: ranked
                .into_iter()
                .take(self.group_size)
                .map(|(server, _)| server)
                .collect(),
            degraded,
        }
    }

    /// Fixes the outcome for every zone with submissions. Selection is a
    /// pure function of (seed, submissions, registry), so any third party
    /// recomputes the identical committees from chain data.
    pub fn finalize(&mut self, registry: &BTreeMap<NodeId, PublicKey>) {
        let zones: Vec<ZoneId> = self.submissions.keys().cloned().collect();
        self.outcome = zones
            .into_iter()
            .map(|z| {
                let sel = self.select(&z, registry);
                (z, sel)
            })
            .collect();
    }

    /// The audit record: everything a verifier needs, as one JSON document.
    pub fn audit_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("round serializes")
    }
}
