//! Crash-fault-tolerant block ordering for a witness set.
//!
//! One log entry is one block; the elected leader batches submissions
//! through a [`BlockCutter`] and replicates the cut blocks. Entries commit
//! on majority match, and a committed prefix is never rewritten.
//!
//! The node is host-free: it consumes [`Input`]s (messages, submissions,
//! timer ticks) and returns an [`Output`] of messages to send and blocks
//! newly committed, never touching a clock or a socket itself. Determinism
//! comes from the caller's event order and the seed that randomizes election
//! timeouts.
//!
//! Submission plane: clients submit to every witness. Non-leaders hold
//! transactions in a buffer and forward them to whoever they believe leads;
//! the buffer drains only when the transaction is seen committed, and it is
//! re-forwarded on leader changes and periodically while pending, so a
//! transaction survives any minority of crashes. Leaders deduplicate against
//! everything already logged, which makes inclusion exactly-once per
//! (digest, attempt) key.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use bdsas_core::codec::Encode;
use bdsas_core::{Block, Digest, NodeId, SimDuration, SimTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cutter::BlockCutter;

/// Anything the ordering service can sequence.
pub trait Orderable: Clone + Encode {
    /// Identity for exactly-once inclusion. Retries of the same request
    /// reuse the digest with a bumped attempt counter, so they count as
    /// distinct submissions.
    fn dedup_key(&self) -> (Digest, u32);
}

pub const ELECTION_TIMEOUT_MIN: SimDuration = SimDuration::from_millis(150);
pub const ELECTION_TIMEOUT_MAX: SimDuration = SimDuration::from_millis(300);
pub const HEARTBEAT_INTERVAL: SimDuration = SimDuration::from_millis(50);
/// How long a non-leader waits before re-forwarding its pending buffer.
pub const FORWARD_RETRY: SimDuration = SimDuration::from_millis(500);
pub const MAX_BLOCK_BYTES: usize = 1_000_000;
pub const BLOCK_INTERVAL: SimDuration = SimDuration::from_secs(1);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Follower,
    Candidate,
    Leader,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogEntry<T> {
    pub term: u64,
    pub block: Block<T>,
}

#[derive(Clone, Debug)]
pub enum RaftMsg<T> {
    RequestVote { term: u64, last_log_index: u64, last_log_term: u64 },
    VoteReply { term: u64, granted: bool },
    AppendEntries {
        term: u64,
        prev_index: u64,
        prev_term: u64,
        entries: Vec<LogEntry<T>>,
        leader_commit: u64,
    },
    AppendReply { term: u64, success: bool, match_index: u64 },
    /// A transaction forwarded toward the presumed leader.
    Submit(T),
}

#[derive(Clone, Debug)]
pub enum Input<T> {
    Msg { from: NodeId, msg: RaftMsg<T> },
    /// A client hands a transaction to this witness.
    Submit(T),
    /// The simulated clock reached this node's next deadline.
    Tick,
}

/// Observable consensus events, for the trace log and the safety checkers.
#[derive(Clone, Debug, PartialEq)]
pub enum RaftEvent {
    TermStarted { term: u64 },
    BecameLeader { term: u64 },
    Committed { height: u64, hash: Digest },
}

#[derive(Debug, Default)]
pub struct Output<T> {
    pub send: Vec<(NodeId, RaftMsg<T>)>,
    /// Blocks that became final during this step, in log order.
    pub committed: Vec<Block<T>>,
    pub events: Vec<RaftEvent>,
}

impl<T> Output<T> {
    fn new() -> Self {
        Output { send: Vec::new(), committed: Vec::new(), events: Vec::new() }
    }
}

pub struct RaftNode<T: Orderable> {
    id: NodeId,
    peers: Vec<NodeId>,
    genesis_hash: Digest,

    // Persistent state: survives a crash/restart.
    term: u64,
    voted_for: Option<NodeId>,
    log: Vec<LogEntry<T>>,
    /// Delivery cursor; also persisted so a restart never re-delivers.
    delivered: u64,

    // Volatile state.
    role: Role,
    commit_index: u64,
    leader_hint: Option<NodeId>,
    votes: BTreeSet<NodeId>,
    next_index: BTreeMap<NodeId, u64>,
    match_index: BTreeMap<NodeId, u64>,

    // Submission plane.
    buffer: VecDeque<T>,
    buffered: HashSet<(Digest, u32)>,
    delivered_keys: HashSet<(Digest, u32)>,
    /// Leader-only: keys in the log or the cutter.
    seen: HashSet<(Digest, u32)>,
    cutter: BlockCutter<T>,

    election_deadline: SimTime,
    heartbeat_deadline: SimTime,
    last_forward: SimTime,
    rng: ChaCha8Rng,
}

impl<T: Orderable> RaftNode<T> {
    pub fn new(
        id: NodeId,
        witnesses: &BTreeSet<NodeId>,
        genesis_hash: Digest,
        seed: u64,
        now: SimTime,
    ) -> Self {
        assert!(witnesses.contains(&id), "a witness orders only its own set");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let election_deadline = now + Self::election_jitter(&mut rng);
        RaftNode {
            id,
            peers: witnesses.iter().cloned().collect(),
            genesis_hash,
            term: 0,
            voted_for: None,
            log: Vec::new(),
            delivered: 0,
            role: Role::Follower,
            commit_index: 0,
            leader_hint: None,
            votes: BTreeSet::new(),
            next_index: BTreeMap::new(),
            match_index: BTreeMap::new(),
            buffer: VecDeque::new(),
            buffered: HashSet::new(),
            delivered_keys: HashSet::new(),
            seen: HashSet::new(),
            cutter: BlockCutter::new(MAX_BLOCK_BYTES, BLOCK_INTERVAL, now),
            election_deadline,
            heartbeat_deadline: now,
            last_forward: now,
            rng,
        }
    }

    fn election_jitter(rng: &mut ChaCha8Rng) -> SimDuration {
        SimDuration(rng.random_range(ELECTION_TIMEOUT_MIN.0..=ELECTION_TIMEOUT_MAX.0))
    }

    pub fn id(&self) -> &NodeId {
        &self.id
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn term(&self) -> u64 {
        self.term
    }

    pub fn commit_index(&self) -> u64 {
        self.commit_index
    }

    pub fn log(&self) -> &[LogEntry<T>] {
        &self.log
    }

    /// Earliest instant at which this node wants a `Tick`.
    pub fn next_wake(&self) -> SimTime {
        let mut wake = match self.role {
            Role::Leader => self.heartbeat_deadline,
            _ => self.election_deadline,
        };
        if self.role == Role::Leader {
            if let Some(d) = self.cutter.next_deadline() {
                wake = wake.min(d);
            }
        } else if !self.buffer.is_empty() {
            wake = wake.min(self.last_forward + FORWARD_RETRY);
        }
        wake
    }

    /// Loses all volatile state, keeps the durable log and identity. The
    /// election clock restarts from `now`.
    pub fn restart(&mut self, now: SimTime) {
        self.role = Role::Follower;
        self.commit_index = self.delivered;
        self.leader_hint = None;
        self.votes.clear();
        self.next_index.clear();
        self.match_index.clear();
        self.buffer.clear();
        self.buffered.clear();
        self.seen.clear();
        self.delivered_keys = self
            .log
            .iter()
            .take(self.delivered as usize)
            .flat_map(|e| e.block.txs.iter().map(Orderable::dedup_key))
            .collect();
        self.cutter = BlockCutter::new(MAX_BLOCK_BYTES, BLOCK_INTERVAL, now);
        self.election_deadline = now + Self::election_jitter(&mut self.rng);
        self.heartbeat_deadline = now;
        self.last_forward = now;
    }

    pub fn step(&mut self, input: Input<T>, now: SimTime) -> Output<T> {
        let mut out = Output::new();
        match input {
            Input::Tick => self.on_tick(now, &mut out),
            Input::Submit(tx) => self.on_submit(tx, now, &mut out),
            Input::Msg { from, msg } => match msg {
                RaftMsg::RequestVote { term, last_log_index, last_log_term } => {
                    self.on_request_vote(from, term, last_log_index, last_log_term, now, &mut out)
                }
                RaftMsg::VoteReply { term, granted } => {
                    self.on_vote_reply(from, term, granted, now, &mut out)
                }
                RaftMsg::AppendEntries { term, prev_index, prev_term, entries, leader_commit } => {
                    self.on_append_entries(
                        from, term, prev_index, prev_term, entries, leader_commit, now, &mut out,
                    )
                }
                RaftMsg::AppendReply { term, success, match_index } => {
                    self.on_append_reply(from, term, success, match_index, now, &mut out)
                }
                RaftMsg::Submit(tx) => self.on_submit(tx, now, &mut out),
            },
        }
        out
    }

    fn majority(&self) -> usize {
        self.peers.len() / 2 + 1
    }

    fn last_log_index(&self) -> u64 {
        self.log.len() as u64
    }

    fn term_at(&self, index: u64) -> u64 {
        if index == 0 {
            0
        } else {
            self.log[index as usize - 1].term
        }
    }

    fn on_tick(&mut self, now: SimTime, out: &mut Output<T>) {
        match self.role {
            Role::Leader => {
                while let Some(batch) = self.cutter.poll(now) {
                    self.append_block(batch, now, out);
                }
                if now >= self.heartbeat_deadline {
                    self.heartbeat_deadline = now + HEARTBEAT_INTERVAL;
                    self.broadcast_append(out);
                }
                self.advance_commit(out);
            }
            Role::Follower | Role::Candidate => {
                if now >= self.election_deadline {
                    self.start_election(now, out);
                } else if !self.buffer.is_empty()
                    && now >= self.last_forward + FORWARD_RETRY
                {
                    self.forward_buffer(now, out);
                }
            }
        }
    }

    fn start_election(&mut self, now: SimTime, out: &mut Output<T>) {
        self.term += 1;
        self.role = Role::Candidate;
        self.voted_for = Some(self.id.clone());
        self.votes = [self.id.clone()].into();
        self.leader_hint = None;
        self.election_deadline = now + Self::election_jitter(&mut self.rng);
        out.events.push(RaftEvent::TermStarted { term: self.term });
        let msg = RaftMsg::RequestVote {
            term: self.term,
            last_log_index: self.last_log_index(),
            last_log_term: self.term_at(self.last_log_index()),
        };
        for p in self.peers.clone() {
            if p != self.id {
                out.send.push((p, msg.clone()));
            }
        }
        if self.votes.len() >= self.majority() {
            self.become_leader(now, out);
        }
    }

    fn adopt_term(&mut self, term: u64, now: SimTime) {
        if self.role == Role::Leader {
            // Whatever was mid-batch never reached the log; keep it around
            // as an ordinary pending submission.
            for tx in self.cutter.reset(now) {
                let key = tx.dedup_key();
                if !self.delivered_keys.contains(&key) && self.buffered.insert(key) {
                    self.buffer.push_back(tx);
                }
            }
        }
        // One vote per term: the ballot clears only when the term advances.
        if term > self.term {
            self.voted_for = None;
        }
        self.term = term;
        self.role = Role::Follower;
        self.votes.clear();
        self.election_deadline = now + Self::election_jitter(&mut self.rng);
    }

    fn on_request_vote(
        &mut self,
        from: NodeId,
        term: u64,
        last_log_index: u64,
        last_log_term: u64,
        now: SimTime,
        out: &mut Output<T>,
    ) {
        if term > self.term {
            self.adopt_term(term, now);
        }
        let up_to_date = (last_log_term, last_log_index)
            >= (self.term_at(self.last_log_index()), self.last_log_index());
        let granted = term == self.term
            && up_to_date
            && self.voted_for.as_ref().is_none_or(|v| *v == from);
        if granted {
            self.voted_for = Some(from.clone());
            self.election_deadline = now + Self::election_jitter(&mut self.rng);
        }
        out.send.push((from, RaftMsg::VoteReply { term: self.term, granted }));
    }

    fn on_vote_reply(
        &mut self,
        from: NodeId,
        term: u64,
        granted: bool,
        now: SimTime,
        out: &mut Output<T>,
    ) {
        if term > self.term {
            self.adopt_term(term, now);
            return;
        }
        if self.role != Role::Candidate || term != self.term || !granted {
            return;
        }
        self.votes.insert(from);
        if self.votes.len() >= self.majority() {
            self.become_leader(now, out);
        }
    }

    fn become_leader(&mut self, now: SimTime, out: &mut Output<T>) {
        self.role = Role::Leader;
        self.leader_hint = Some(self.id.clone());
        self.heartbeat_deadline = now + HEARTBEAT_INTERVAL;
        out.events.push(RaftEvent::BecameLeader { term: self.term });

        let next = self.last_log_index() + 1;
        self.next_index = self.peers.iter().cloned().map(|p| (p, next)).collect();
        self.match_index = self.peers.iter().cloned().map(|p| (p, 0)).collect();

        // Everything already logged counts as seen; buffered leftovers from
        // follower days go through the cutter like fresh submissions.
        self.seen = self
            .log
            .iter()
            .flat_map(|e| e.block.txs.iter().map(Orderable::dedup_key))
            .collect();
        self.cutter = BlockCutter::new(MAX_BLOCK_BYTES, BLOCK_INTERVAL, now);
        let backlog: Vec<T> = self.buffer.drain(..).collect();
        self.buffered.clear();
        let mut forced = Vec::new();
        for tx in backlog {
            let key = tx.dedup_key();
            if self.delivered_keys.contains(&key) || !self.seen.insert(key) {
                continue;
            }
            forced.extend(self.cutter.push(tx, now));
        }

        // A term-opening empty block: commits of older entries may only ride
        // on an entry from the current term, so propose one immediately.
        self.append_block(Vec::new(), now, out);
        for batch in forced {
            self.append_block(batch, now, out);
        }
    }

    fn append_block(&mut self, txs: Vec<T>, now: SimTime, out: &mut Output<T>) {
        let height = self.last_log_index() + 1;
        let prev_hash = if height == 1 {
            self.genesis_hash
        } else {
            self.log[height as usize - 2].block.hash()
        };
        let block = Block::new(height, prev_hash, now, txs);
        self.log.push(LogEntry { term: self.term, block });
        self.broadcast_append(out);
        self.advance_commit(out);
    }

    fn broadcast_append(&mut self, out: &mut Output<T>) {
        for p in self.peers.clone() {
            if p != self.id {
                self.send_append(&p, out);
            }
        }
    }

    fn send_append(&mut self, peer: &NodeId, out: &mut Output<T>) {
        let next = self.next_index[peer];
        let prev_index = next - 1;
        // Cap the batch so a far-behind peer catches up over several round
        // trips instead of receiving the whole log in every heartbeat.
        let end = (prev_index as usize + 64).min(self.log.len());
        let entries: Vec<LogEntry<T>> = self.log[prev_index as usize..end].to_vec();
        out.send.push((
            peer.clone(),
            RaftMsg::AppendEntries {
                term: self.term,
                prev_index,
                prev_term: self.term_at(prev_index),
                entries,
                leader_commit: self.commit_index,
            },
        ));
    }

    #[allow(clippy::too_many_arguments)]
    fn on_append_entries(
        &mut self,
        from: NodeId,
        term: u64,
        prev_index: u64,
        prev_term: u64,
        entries: Vec<LogEntry<T>>,
        leader_commit: u64,
        now: SimTime,
        out: &mut Output<T>,
    ) {
        if term < self.term {
            out.send.push((
                from,
                RaftMsg::AppendReply { term: self.term, success: false, match_index: 0 },
            ));
            return;
        }
        if term > self.term || self.role != Role::Follower {
            self.adopt_term(term, now);
        }
        self.election_deadline = now + Self::election_jitter(&mut self.rng);
        if self.leader_hint.as_ref() != Some(&from) {
            self.leader_hint = Some(from.clone());
            self.forward_buffer(now, out);
        }

        // Consistency check against our log.
        let have_prev = prev_index <= self.last_log_index()
            && self.term_at(prev_index) == prev_term;
        if !have_prev {
            out.send.push((
                from,
                RaftMsg::AppendReply { term: self.term, success: false, match_index: 0 },
            ));
            return;
        }

        let n_entries = entries.len() as u64;
        for (k, e) in entries.into_iter().enumerate() {
            let idx = prev_index + 1 + k as u64;
            if idx <= self.last_log_index() {
                if self.log[idx as usize - 1].term == e.term {
                    continue; // already have it
                }
                // Conflicting suffix: discard ours from here on. A committed
                // entry can never conflict; leaders carry the whole
                // committed prefix.
                assert!(
                    idx > self.commit_index,
                    "ordering safety violated: asked to truncate committed entry {idx}"
                );
                self.log.truncate(idx as usize - 1);
            }
            self.log.push(e);
        }

        let new_commit = leader_commit.min(prev_index + n_entries).max(self.commit_index);
        self.commit_index = new_commit;
        self.deliver_committed(out);

        out.send.push((
            from,
            RaftMsg::AppendReply {
                term: self.term,
                success: true,
                match_index: prev_index + n_entries,
            },
        ));
    }

    fn on_append_reply(
        &mut self,
        from: NodeId,
        term: u64,
        success: bool,
        match_index: u64,
        now: SimTime,
        out: &mut Output<T>,
    ) {
        if term > self.term {
            self.adopt_term(term, now);
            return;
        }
        if self.role != Role::Leader || term != self.term {
            return;
        }
        if success {
            let m = self.match_index.get_mut(&from).expect("reply from a known witness");
            *m = (*m).max(match_index);
            let m = *m;
            self.next_index.insert(from.clone(), m + 1);
            self.advance_commit(out);
            if m < self.last_log_index() {
                // Keep a catching-up peer streaming instead of waiting for
                // the next heartbeat.
                self.send_append(&from, out);
            }
        } else {
            let n = self.next_index.get_mut(&from).expect("reply from a known witness");
            *n = (*n - 1).max(1);
            self.send_append(&from.clone(), out);
        }
    }

    fn advance_commit(&mut self, out: &mut Output<T>) {
        if self.role != Role::Leader {
            return;
        }
        for n in ((self.commit_index + 1)..=self.last_log_index()).rev() {
            // Only entries of the current term commit by counting; older
            // ones ride along via the prefix rule.
            if self.term_at(n) != self.term {
                continue;
            }
            let replicas = 1 + self
                .peers
                .iter()
                .filter(|p| **p != self.id && self.match_index.get(*p).copied().unwrap_or(0) >= n)
                .count();
            if replicas >= self.majority() {
                self.commit_index = n;
                break;
            }
        }
        self.deliver_committed(out);
    }

    fn deliver_committed(&mut self, out: &mut Output<T>) {
        while self.delivered < self.commit_index {
            let entry = &self.log[self.delivered as usize];
            self.delivered += 1;
            for tx in &entry.block.txs {
                let key = tx.dedup_key();
                self.delivered_keys.insert(key);
                self.buffered.remove(&key);
            }
            if !self.buffer.is_empty() {
                let buffered = &self.buffered;
                self.buffer.retain(|t| buffered.contains(&t.dedup_key()));
            }
            out.events.push(RaftEvent::Committed {
                height: entry.block.height,
                hash: entry.block.hash(),
            });
            out.committed.push(entry.block.clone());
        }
    }

    fn on_submit(&mut self, tx: T, now: SimTime, out: &mut Output<T>) {
        let key = tx.dedup_key();
        if self.delivered_keys.contains(&key) {
            return;
        }
        if self.role == Role::Leader {
            if !self.seen.insert(key) {
                return;
            }
            for batch in self.cutter.push(tx, now) {
                self.append_block(batch, now, out);
            }
        } else {
            if !self.buffered.insert(key) {
                return;
            }
            self.buffer.push_back(tx.clone());
            if let Some(leader) = self.leader_hint.clone() {
                if leader != self.id {
                    out.send.push((leader, RaftMsg::Submit(tx)));
                    self.last_forward = now;
                }
            }
        }
    }

    fn forward_buffer(&mut self, now: SimTime, out: &mut Output<T>) {
        let Some(leader) = self.leader_hint.clone() else { return };
        if leader == self.id || self.buffer.is_empty() {
            return;
        }
        for tx in &self.buffer {
            out.send.push((leader.clone(), RaftMsg::Submit(tx.clone())));
        }
        self.last_forward = now;
    }
}
