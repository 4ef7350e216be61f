//! A miniature deterministic cluster for exercising the ordering service:
//! one event queue, fixed 10ms ticks, uniform message delays, optional drops
//! and crash/restart control. Safety checks (one leader per term, one block
//! hash per height) run on every observed event, so any violation pinpoints
//! the step that caused it.
#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use bdsas_core::codec::Encode;
use bdsas_core::{sha256_parts, Block, Digest, NodeId, SimDuration, SimTime};
use bdsas_ordering::{Input, Orderable, RaftEvent, RaftMsg, RaftNode, Role};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TICK: SimDuration = SimDuration::from_millis(10);

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TestTx {
    pub src: u32,
    pub n: u32,
    pub pad: Vec<u8>,
}

impl TestTx {
    pub fn new(src: u32, n: u32) -> Self {
        TestTx { src, n, pad: Vec::new() }
    }

    pub fn sized(src: u32, n: u32, bytes: usize) -> Self {
        TestTx { src, n, pad: vec![0u8; bytes] }
    }

    pub fn key(src: u32, n: u32) -> (Digest, u32) {
        (sha256_parts(&[&src.to_le_bytes(), &n.to_le_bytes()]), 0)
    }
}

impl Encode for TestTx {
    fn encode_into(&self, out: &mut Vec<u8>) {
        self.src.encode_into(out);
        self.n.encode_into(out);
        self.pad.encode_into(out);
    }
}

impl Orderable for TestTx {
    fn dedup_key(&self) -> (Digest, u32) {
        TestTx::key(self.src, self.n)
    }
}

struct Ev {
    at: SimTime,
    seq: u64,
    to: NodeId,
    input: Input<TestTx>,
}

impl PartialEq for Ev {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}
impl Eq for Ev {}
impl PartialOrd for Ev {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ev {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

pub struct Cluster {
    pub ids: Vec<NodeId>,
    pub nodes: BTreeMap<NodeId, RaftNode<TestTx>>,
    pub up: BTreeMap<NodeId, bool>,
    pub now: SimTime,
    /// Committed blocks per node, in delivery order.
    pub delivered: BTreeMap<NodeId, Vec<Block<TestTx>>>,
    /// Every `BecameLeader` observation, for timing assertions.
    pub elections: Vec<(SimTime, NodeId, u64)>,
    pub base_delay: SimDuration,
    pub jitter: SimDuration,
    pub drop_p: f64,
    queue: BinaryHeap<Reverse<Ev>>,
    seq: u64,
    rng: ChaCha8Rng,
    leaders_by_term: BTreeMap<u64, NodeId>,
    height_hash: BTreeMap<u64, Digest>,
}

impl Cluster {
    pub fn new(n: usize, seed: u64) -> Self {
        let ids: Vec<NodeId> = (0..n).map(|i| NodeId::new(format!("wit-{i}"))).collect();
        let witness_set: BTreeSet<NodeId> = ids.iter().cloned().collect();
        let genesis_hash = Block::<TestTx>::genesis(SimTime::ZERO).hash();
        let nodes = ids
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let node = RaftNode::new(
                    id.clone(),
                    &witness_set,
                    genesis_hash,
                    seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64),
                    SimTime::ZERO,
                );
                (id.clone(), node)
            })
            .collect();
        Cluster {
            up: ids.iter().map(|id| (id.clone(), true)).collect(),
            delivered: ids.iter().map(|id| (id.clone(), Vec::new())).collect(),
            ids,
            nodes,
            now: SimTime::ZERO,
            elections: Vec::new(),
            base_delay: SimDuration::from_millis(10),
            jitter: SimDuration::from_millis(1),
            drop_p: 0.0,
            queue: BinaryHeap::new(),
            seq: 0,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed),
            leaders_by_term: BTreeMap::new(),
            height_hash: BTreeMap::new(),
        }
    }

    fn enqueue(&mut self, at: SimTime, to: NodeId, input: Input<TestTx>) {
        self.seq += 1;
        self.queue.push(Reverse(Ev { at, seq: self.seq, to, input }));
    }

    /// Client-side handoff: reaches the node unless it is down.
    pub fn submit_to(&mut self, to: &NodeId, tx: TestTx) {
        self.enqueue(self.now, to.clone(), Input::Submit(tx));
    }

    pub fn submit_to_live(&mut self, tx: TestTx) {
        for id in self.ids.clone() {
            if self.up[&id] {
                self.submit_to(&id, tx.clone());
            }
        }
    }

    pub fn crash(&mut self, id: &NodeId) {
        self.up.insert(id.clone(), false);
    }

    pub fn restart(&mut self, id: &NodeId) {
        self.up.insert(id.clone(), true);
        let now = self.now;
        self.nodes.get_mut(id).unwrap().restart(now);
    }

    pub fn live_leader(&self) -> Option<NodeId> {
        self.ids
            .iter()
            .filter(|id| self.up[*id] && self.nodes[*id].role() == Role::Leader)
            .max_by_key(|id| self.nodes[*id].term())
            .cloned()
    }

    pub fn run_for(&mut self, d: SimDuration) {
        let t = self.now + d;
        self.run_until(t);
    }

    pub fn run_until(&mut self, t_end: SimTime) {
        while self.now < t_end {
            let next_tick = SimTime((self.now.0 / TICK.0 + 1) * TICK.0).min(t_end);
            while let Some(Reverse(head)) = self.queue.peek() {
                if head.at > next_tick {
                    break;
                }
                let ev = self.queue.pop().unwrap().0;
                self.now = self.now.max(ev.at);
                if self.up[&ev.to] {
                    self.step(ev.to, ev.input);
                }
            }
            self.now = next_tick;
            for id in self.ids.clone() {
                if self.up[&id] {
                    self.step(id, Input::Tick);
                }
            }
        }
    }

    fn step(&mut self, id: NodeId, input: Input<TestTx>) {
        let out = self.nodes.get_mut(&id).unwrap().step(input, self.now);
        for ev in out.events {
            match ev {
                RaftEvent::TermStarted { .. } => {}
                RaftEvent::BecameLeader { term } => {
                    if let Some(prev) = self.leaders_by_term.get(&term) {
                        assert_eq!(
                            prev, &id,
                            "two leaders elected in term {term}: {prev} and {id}"
                        );
                    }
                    self.leaders_by_term.insert(term, id.clone());
                    self.elections.push((self.now, id.clone(), term));
                }
                RaftEvent::Committed { height, hash } => {
                    let seen = self.height_hash.entry(height).or_insert(hash);
                    assert_eq!(
                        *seen, hash,
                        "{id} committed a different block at height {height}"
                    );
                }
            }
        }
        self.delivered.get_mut(&id).unwrap().extend(out.committed);
        for (to, msg) in out.send {
            if self.drop_p > 0.0 && self.rng.random_bool(self.drop_p) {
                continue;
            }
            let extra = SimDuration(self.rng.random_range(0..=self.jitter.0));
            let at = self.now + self.base_delay + extra;
            self.enqueue(at, to, Input::Msg { from: id.clone(), msg });
        }
    }

    /// Flattened dedup keys of every transaction a node has delivered.
    pub fn delivered_keys(&self, id: &NodeId) -> Vec<(Digest, u32)> {
        self.delivered[id]
            .iter()
            .flat_map(|b| b.txs.iter().map(Orderable::dedup_key))
            .collect()
    }

    /// Every node's delivered sequence is a prefix of the longest one, and
    /// heights are contiguous from 1.
    pub fn assert_prefix_consistent(&self) {
        let longest = self
            .ids
            .iter()
            .max_by_key(|id| self.delivered[*id].len())
            .unwrap();
        let reference = &self.delivered[longest];
        for (k, b) in reference.iter().enumerate() {
            assert_eq!(b.height, k as u64 + 1, "gap in committed heights");
        }
        for id in &self.ids {
            for (k, b) in self.delivered[id].iter().enumerate() {
                assert_eq!(
                    b.hash(),
                    reference[k].hash(),
                    "{id} diverges from {longest} at height {}",
                    k + 1
                );
            }
        }
    }

    /// No dedup key appears twice in the committed sequence.
    pub fn assert_no_duplicates(&self) {
        for id in &self.ids {
            let keys = self.delivered_keys(id);
            let uniq: BTreeSet<_> = keys.iter().cloned().collect();
            assert_eq!(uniq.len(), keys.len(), "{id} delivered a transaction twice");
        }
    }

    /// Runs until every live node has delivered all `expected` transactions.
    /// Panics if that takes longer than `patience`.
    pub fn drain(&mut self, expected: &BTreeSet<(Digest, u32)>, patience: SimDuration) {
        let deadline = self.now + patience;
        loop {
            let missing = self.ids.iter().any(|id| {
                self.up[id] && {
                    let have: BTreeSet<_> = self.delivered_keys(id).into_iter().collect();
                    !expected.is_subset(&have)
                }
            });
            if !missing {
                return;
            }
            assert!(
                self.now < deadline,
                "cluster failed to deliver all transactions within {patience}"
            );
            self.run_for(SimDuration::from_millis(100));
        }
    }
}
