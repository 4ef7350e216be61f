//! Two-phase transaction propagation: advertise the digest, fetch the body.
//!
//! A node that stores a new transaction advertises its digest to every
//! gossip neighbor. A neighbor that does not hold the digest requests the
//! body from the first advertiser and remembers later advertisers as
//! fallbacks; duplicate advertisements never trigger a second fetch. On a
//! connected graph every node therefore stores the transaction after
//! exactly one fetch per non-originating node, and a stalled fetch (the
//! advertiser crashed, or answered not-found) retries against the next
//! known holder.

use std::collections::BTreeMap;

use bdsas_core::codec::{CodecError, Decode, Encode, Reader};
use bdsas_core::{Digest, NodeId, SimDuration, SimTime, Transaction};

/// How long a fetch may stay unanswered before it is re-sent.
pub const FETCH_RETRY: SimDuration = SimDuration::from_secs(1);

#[derive(Clone, Debug, PartialEq)]
pub enum GossipMsg {
    /// Digests the sender holds and the receiver may fetch.
    Advertise(Vec<Digest>),
    /// Digests the receiver wants the bodies of.
    Request(Vec<Digest>),
    /// Full bodies, answering a request or seeding a transaction.
    Data(Vec<Transaction>),
    /// Requested digests the sender turned out not to hold.
    NotFound(Vec<Digest>),
}

impl Encode for GossipMsg {
    fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            GossipMsg::Advertise(d) => {
                out.push(0);
                d.encode_into(out);
            }
            GossipMsg::Request(d) => {
                out.push(1);
                d.encode_into(out);
            }
            GossipMsg::Data(txs) => {
                out.push(2);
                txs.encode_into(out);
            }
            GossipMsg::NotFound(d) => {
                out.push(3);
                d.encode_into(out);
            }
        }
    }
}

impl Decode for GossipMsg {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(match r.byte()? {
            0 => GossipMsg::Advertise(Vec::decode_from(r)?),
            1 => GossipMsg::Request(Vec::decode_from(r)?),
            2 => GossipMsg::Data(Vec::decode_from(r)?),
            3 => GossipMsg::NotFound(Vec::decode_from(r)?),
            tag => return Err(CodecError::BadTag { ty: "GossipMsg", tag }),
        })
    }
}

struct Pending {
    asked: NodeId,
    deadline: SimTime,
    /// Other peers that advertised the digest, in arrival order.
    alternates: Vec<NodeId>,
}

/// Per-node gossip state. Owns the transaction store; the enclosing node
/// decides what "valid" means via the verify callback.
pub struct GossipState {
    neighbors: Vec<NodeId>,
    store: BTreeMap<Digest, Transaction>,
    pending: BTreeMap<Digest, Pending>,
    /// Digests requested, counted once per (digest, request message). The
    /// propagation cost a scenario audits.
    pub requests_sent: u64,
}

impl GossipState {
    pub fn new(neighbors: Vec<NodeId>) -> Self {
        GossipState {
            neighbors,
            store: BTreeMap::new(),
            pending: BTreeMap::new(),
            requests_sent: 0,
        }
    }

    pub fn has(&self, digest: &Digest) -> bool {
        self.store.contains_key(digest)
    }

    pub fn get(&self, digest: &Digest) -> Option<&Transaction> {
        self.store.get(digest)
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }

    /// Stores a locally originated transaction and advertises it to every
    /// neighbor. Returns false if the digest was already stored.
    pub fn insert_local(&mut self, tx: Transaction, out: &mut Vec<(NodeId, GossipMsg)>) -> bool {
        let digest = tx.digest();
        if self.store.contains_key(&digest) {
            return false;
        }
        self.pending.remove(&digest);
        self.store.insert(digest, tx);
        for peer in &self.neighbors {
            out.push((peer.clone(), GossipMsg::Advertise(vec![digest])));
        }
        true
    }

    /// Handles one gossip message. Returns the transactions newly stored by
    /// this call, in arrival order; invalid bodies are dropped silently.
    pub fn on_message(
        &mut self,
        from: &NodeId,
        msg: GossipMsg,
        now: SimTime,
        verify: impl Fn(&Transaction) -> bool,
        out: &mut Vec<(NodeId, GossipMsg)>,
    ) -> Vec<Transaction> {
        let mut stored = Vec::new();
        match msg {
            GossipMsg::Advertise(digests) => {
                let mut wants = Vec::new();
                for d in digests {
                    if self.store.contains_key(&d) {
                        continue;
                    }
                    match self.pending.get_mut(&d) {
                        Some(p) => {
                            // Already fetching: remember the peer as a
                            // fallback, never fetch twice.
                            if p.asked != *from && !p.alternates.contains(from) {
                                p.alternates.push(from.clone());
                            }
                        }
                        None => {
                            self.pending.insert(
                                d,
                                Pending {
                                    asked: from.clone(),
                                    deadline: now + FETCH_RETRY,
                                    alternates: Vec::new(),
                                },
                            );
                            wants.push(d);
                        }
                    }
                }
                if !wants.is_empty() {
                    self.requests_sent += wants.len() as u64;
                    out.push((from.clone(), GossipMsg::Request(wants)));
                }
            }
            GossipMsg::Request(digests) => {
                let mut bodies = Vec::new();
                let mut missing = Vec::new();
                for d in digests {
                    match self.store.get(&d) {
                        Some(tx) => bodies.push(tx.clone()),
                        None => missing.push(d),
                    }
                }
                if !bodies.is_empty() {
                    out.push((from.clone(), GossipMsg::Data(bodies)));
                }
                if !missing.is_empty() {
                    out.push((from.clone(), GossipMsg::NotFound(missing)));
                }
            }
            GossipMsg::Data(txs) => {
                let mut adverts: BTreeMap<NodeId, Vec<Digest>> = BTreeMap::new();
                for tx in txs {
                    let d = tx.digest();
                    if self.store.contains_key(&d) || !verify(&tx) {
                        continue;
                    }
                    let knowers = match self.pending.remove(&d) {
                        Some(p) => {
                            let mut k = p.alternates;
                            k.push(p.asked);
                            k
                        }
                        None => Vec::new(),
                    };
                    self.store.insert(d, tx.clone());
                    stored.push(tx);
                    for peer in &self.neighbors {
                        if peer != from && !knowers.contains(peer) {
                            adverts.entry(peer.clone()).or_default().push(d);
                        }
                    }
                }
                for (peer, ds) in adverts {
                    out.push((peer, GossipMsg::Advertise(ds)));
                }
            }
            GossipMsg::NotFound(digests) => {
                for d in digests {
                    let Some(p) = self.pending.get_mut(&d) else { continue };
                    if p.asked != *from {
                        continue;
                    }
                    if p.alternates.is_empty() {
                        // Nobody else claims to hold it; a fresh advertise
                        // will restart the fetch.
                        self.pending.remove(&d);
                    } else {
                        p.asked = p.alternates.remove(0);
                        p.deadline = now + FETCH_RETRY;
                        self.requests_sent += 1;
                        out.push((p.asked.clone(), GossipMsg::Request(vec![d])));
                    }
                }
            }
        }
        stored
    }

    /// Retries fetches whose deadline has passed, rotating through the
    /// known advertisers.
    pub fn poll(&mut self, now: SimTime, out: &mut Vec<(NodeId, GossipMsg)>) {
        for (d, p) in self.pending.iter_mut() {
            if p.deadline > now {
                continue;
            }
            if !p.alternates.is_empty() {
                let next = p.alternates.remove(0);
                p.alternates.push(std::mem::replace(&mut p.asked, next));
            }
            p.deadline = now + FETCH_RETRY;
            self.requests_sent += 1;
            out.push((p.asked.clone(), GossipMsg::Request(vec![*d])));
        }
    }

    pub fn next_deadline(&self) -> Option<SimTime> {
        self.pending.values().map(|p| p.deadline).min()
    }
}
