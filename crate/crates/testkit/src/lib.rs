//! Test instruments for the spectrum contract: a single-replica [`World`]
//! that runs the full endorse/sweep/validate/commit cycle per transaction,
//! an independent brute-force assignment oracle, and a randomized scenario
//! driver ([`scenario`]) that checks every committed step against global
//! safety invariants.
//!
//! Nothing here is part of the protocol. It exists so that integration and
//! acceptance tests across the workspace share one set of oracles instead of
//! each growing their own.

pub mod scenario;

use std::collections::{BTreeMap, BTreeSet};

use bdsas_core::{
    derive_key, AccessRequest, Category, ClientRecord, ContractParams, DeviceId, FrequencyRange,
    NodeId, NodeIdentity, RequestType, Role, SecretKey, SimTime, TokenAmount, Transaction,
    TxPayload, UnsignedTransaction,
};
use bdsas_contract::{
    execute, expire_sweep, genesis_state, mvcc_check, version_at, ChannelTable, CommittedState,
    ExecError, ExecOutcome, ExecView, GenesisConfig, StateKey, StateValue, SweepOutcome,
};

pub const FEE: TokenAmount = TokenAmount::from_tokens(10);

/// What one full propose/endorse/order/validate/commit cycle produced.
pub struct Committed {
    pub result: Result<ExecOutcome, ExecError>,
    /// False when first-committer-wins validation rejected the write set.
    pub valid: bool,
    pub sweep: SweepOutcome,
}

pub struct World {
    pub state: CommittedState,
    pub height: u64,
    pub now: SimTime,
    keys: BTreeMap<NodeId, SecretKey>,
    nonces: BTreeMap<NodeId, u64>,
}

impl World {
    pub fn new(genesis: GenesisConfig) -> Self {
        let mut keys = BTreeMap::new();
        for n in genesis.committee.iter().chain(genesis.witnesses.iter()) {
            keys.insert(n.clone(), derive_key(7, n.as_str()));
        }
        for c in &genesis.clients {
            let n = c.device.node_id();
            keys.insert(n.clone(), derive_key(7, n.as_str()));
        }
        World {
            state: genesis_state(&genesis, SimTime::ZERO),
            height: 0,
            now: SimTime::ZERO,
            keys,
            nonces: BTreeMap::new(),
        }
    }

    /// Registers a key for a node created after genesis.
    pub fn add_key(&mut self, node: &NodeId) {
        self.keys.entry(node.clone()).or_insert_with(|| derive_key(7, node.as_str()));
    }

    pub fn advance(&mut self, to: SimTime) {
        assert!(to >= self.now, "time goes forward");
        self.now = to;
    }

    pub fn sign(&mut self, proposer: &NodeId, payload: TxPayload) -> Transaction {
        self.add_key(proposer);
        let nonce = self.nonces.entry(proposer.clone()).or_insert(0);
        *nonce += 1;
        let key = &self.keys[proposer];
        let unsigned = UnsignedTransaction {
            proposer: proposer.clone(),
            nonce: *nonce,
            payload,
        };
        let identity = NodeIdentity {
            id: proposer.clone(),
            role: Role::Client,
            public_key: key.public(),
            zones: BTreeSet::new(),
        };
        unsigned.sign(key, &identity).expect("test key matches proposer")
    }

    /// Runs the whole cycle for one transaction: endorse against the current
    /// state, then commit a single-transaction block cut at `self.now`.
    pub fn submit(&mut self, proposer: &NodeId, payload: TxPayload) -> Committed {
        let tx = self.sign(proposer, payload);
        let digest = tx.digest();
        let mut view = ExecView::new(&self.state);
        let result = execute(&mut view, &tx, digest);
        let (reads, writes) = view.into_rw_sets();

        self.height += 1;
        let sweep = expire_sweep(&mut self.state, self.now, self.height);
        let valid = result.is_ok() && mvcc_check(&self.state, &reads).is_ok();
        if valid {
            self.state.apply_write_set(&writes, version_at(self.height, 1));
        }
        self.state.set_state_time(self.now);
        Committed { result, valid, sweep }
    }

    /// Commits an empty block at `self.now`: sweep only.
    pub fn tick(&mut self) -> SweepOutcome {
        self.height += 1;
        let sweep = expire_sweep(&mut self.state, self.now, self.height);
        self.state.set_state_time(self.now);
        sweep
    }

    pub fn grant_req(
        &mut self,
        device: &DeviceId,
        desired: Option<FrequencyRange>,
        deposit: TokenAmount,
    ) -> Committed {
        let payload = TxPayload::Access(AccessRequest {
            device: device.clone(),
            request: RequestType::Grant,
            desired,
            eirp_dbm: 24.0,
            measurement: Vec::new(),
            fee_deposit: deposit,
            grant_id: None,
        });
        self.submit(&device.node_id(), payload)
    }

    pub fn heartbeat(&mut self, device: &DeviceId, grant_id: Option<bdsas_core::Digest>) -> Committed {
        let payload = TxPayload::Access(AccessRequest {
            device: device.clone(),
            request: RequestType::Heartbeat,
            desired: None,
            eirp_dbm: 24.0,
            measurement: Vec::new(),
            fee_deposit: TokenAmount::ZERO,
            grant_id,
        });
        self.submit(&device.node_id(), payload)
    }

    pub fn relinquish(&mut self, device: &DeviceId, grant_id: Option<bdsas_core::Digest>) -> Committed {
        let payload = TxPayload::Access(AccessRequest {
            device: device.clone(),
            request: RequestType::Relinquish,
            desired: None,
            eirp_dbm: 24.0,
            measurement: Vec::new(),
            fee_deposit: TokenAmount::ZERO,
            grant_id,
        });
        self.submit(&device.node_id(), payload)
    }

    pub fn grant_of(&self, device: &DeviceId) -> Option<bdsas_contract::Grant> {
        match self.state.get(&StateKey::Grant(device.clone())) {
            Some(StateValue::Grant(g)) => Some(g.clone()),
            _ => None,
        }
    }

    pub fn account(&self, device: &DeviceId) -> TokenAmount {
        match self.state.get(&StateKey::Account(device.clone())) {
            Some(StateValue::Account(a)) => *a,
            _ => TokenAmount::ZERO,
        }
    }

    pub fn occupancy(&self, ch: u16) -> BTreeSet<DeviceId> {
        match self.state.get(&StateKey::ChannelOcc(ch)) {
            Some(StateValue::Occupancy(o)) => o.clone(),
            _ => BTreeSet::new(),
        }
    }

    pub fn channels(&self) -> ChannelTable {
        match self.state.get(&StateKey::Channels) {
            Some(StateValue::Channels(t)) => t.clone(),
            _ => panic!("genesis always writes the channel table"),
        }
    }

    pub fn client(&self, device: &DeviceId) -> Option<ClientRecord> {
        match self.state.get(&StateKey::Client(device.clone())) {
            Some(StateValue::Client(c)) => Some(c.clone()),
            _ => None,
        }
    }
}

impl World {
    /// Plants an active grant directly into state, bypassing the executor.
    /// Lets tests cover occupancy configurations the normal path would have
    /// refused to create.
    pub fn inject_grant(&mut self, device: &DeviceId, channels: &BTreeSet<u16>) {
        self.height += 1;
        let v = version_at(self.height, 1);
        let grant = bdsas_contract::Grant {
            id: bdsas_core::sha256(device.as_str().as_bytes()),
            device: device.clone(),
            channels: channels.clone(),
            eirp_dbm: 24.0,
            granted_at: self.now,
            expire_time: self.now + bdsas_core::SimDuration::from_secs(300),
            heartbeat_interval: bdsas_core::SimDuration::from_secs(30),
            last_heartbeat: None,
            state: bdsas_contract::GrantState::Granted,
        };
        self.state.apply_one(
            StateKey::Grant(device.clone()),
            Some(StateValue::Grant(grant)),
            v,
        );
        for &ch in channels {
            let mut occ = self.occupancy(ch);
            occ.insert(device.clone());
            self.state.apply_one(
                StateKey::ChannelOcc(ch),
                Some(StateValue::Occupancy(occ)),
                v,
            );
        }
    }
}

pub fn dev(name: &str) -> DeviceId {
    DeviceId::from(name)
}

pub fn node(name: &str) -> NodeId {
    NodeId::from(name)
}

/// A genesis with `n_servers` committee servers, `n_witnesses` witnesses,
/// a uniform channel table, and the given clients all funded with 100 tokens.
pub fn world_with(
    channels: u16,
    channels_per_grant: u16,
    clients: Vec<ClientRecord>,
    pal_registry: BTreeSet<DeviceId>,
    reserved: BTreeSet<u16>,
) -> World {
    let committee: BTreeSet<NodeId> =
        (0..4).map(|i| node(&format!("sas-{i}"))).collect();
    let witnesses: BTreeSet<NodeId> =
        (0..5).map(|i| node(&format!("wit-{i}"))).collect();
    let params = ContractParams {
        channels_per_grant,
        grant_fee: FEE,
        pal_reserved: reserved,
        ..ContractParams::default()
    };
    let accounts = clients
        .iter()
        .map(|c| (c.device.clone(), TokenAmount::from_tokens(100)))
        .collect();
    World::new(GenesisConfig {
        channels: ChannelTable::uniform(channels),
        params,
        committee,
        witnesses,
        pal_registry,
        clients,
        accounts,
    })
}

pub fn record(name: &str, category: Category, neighbors: &[&str]) -> ClientRecord {
    ClientRecord {
        device: dev(name),
        category,
        max_eirp_dbm: 30.0,
        neighbors: neighbors.iter().map(|n| dev(n)).collect(),
        witness_eligible: false,
    }
}

/// Mutually-neighboring client set: everyone hears everyone.
pub fn clique(names: &[&str], category: Category) -> Vec<ClientRecord> {
    names
        .iter()
        .map(|n| {
            let others: Vec<&str> = names.iter().copied().filter(|m| m != n).collect();
            record(n, category, &others)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Brute-force assignment oracle.
//
// Enumerates every subset of channel indices and keeps the feasible ones:
// right size, contiguous, available, inside the desired range, and free of
// neighbor conflicts except general-tier neighbors on reserved channels when
// the requester holds priority standing. Returns the lexicographically
// smallest feasible set. Deliberately exponential and structure-free so it
// shares no code path with the windowed search under test.
// ---------------------------------------------------------------------------

pub struct OracleWorld {
    /// index -> available
    pub table: Vec<bool>,
    /// device -> channels held under an active (spectrum-occupying) grant
    pub active: BTreeMap<DeviceId, BTreeSet<u16>>,
    /// device -> (category, neighbors)
    pub clients: BTreeMap<DeviceId, (Category, BTreeSet<DeviceId>)>,
    pub registry: BTreeSet<DeviceId>,
    pub reserved: BTreeSet<u16>,
}

impl OracleWorld {
    /// Snapshot the oracle's inputs straight out of committed state.
    pub fn from_state(state: &CommittedState) -> Self {
        let table = match state.get(&StateKey::Channels) {
            Some(StateValue::Channels(t)) => {
                (0..t.len()).map(|i| t.get(i as u16).unwrap().available).collect()
            }
            _ => Vec::new(),
        };
        let mut active = BTreeMap::new();
        for g in state.grants() {
            if g.state.occupies() {
                active.insert(g.device.clone(), g.channels.clone());
            }
        }
        let mut clients = BTreeMap::new();
        let mut registry = BTreeSet::new();
        let mut reserved = BTreeSet::new();
        for (k, v, _) in state.iter() {
            match (k, v) {
                (StateKey::Client(d), StateValue::Client(c)) => {
                    clients.insert(d.clone(), (c.category, c.neighbors.clone()));
                }
                (StateKey::PalRegistry, StateValue::PalRegistry(r)) => {
                    registry = r.clone();
                }
                (StateKey::Params, StateValue::Params(p)) => {
                    reserved = p.pal_reserved.clone();
                }
                _ => {}
            }
        }
        OracleWorld { table, active, clients, registry, reserved }
    }

    fn priority_standing(&self, device: &DeviceId) -> bool {
        matches!(self.clients.get(device), Some((Category::Pal, _)))
            && self.registry.contains(device)
    }

    /// All feasible assignments for `device`, unindex-ordered; each with the
    /// set of neighbors that would be preempted.
    fn feasible_sets(
        &self,
        device: &DeviceId,
        count: usize,
        in_range: &BTreeSet<u16>,
    ) -> Vec<(Vec<u16>, BTreeSet<DeviceId>)> {
        let n = self.table.len();
        let Some((_, neighbors)) = self.clients.get(device) else {
            return Vec::new();
        };
        let priority = self.priority_standing(device);
        let mut found = Vec::new();
        // Every subset of the index space, by bitmask.
        for mask in 1u32..(1 << n) {
            let set: Vec<u16> =
                (0..n as u16).filter(|i| mask & (1 << i) != 0).collect();
            if set.len() != count {
                continue;
            }
            let contiguous = set[set.len() - 1] - set[0] + 1 == count as u16;
            if !contiguous {
                continue;
            }
            if !set.iter().all(|i| self.table[*i as usize] && in_range.contains(i)) {
                continue;
            }
            let mut preempted = BTreeSet::new();
            let mut ok = true;
            'chans: for &ch in &set {
                for (holder, held) in &self.active {
                    if holder == device || !held.contains(&ch) || !neighbors.contains(holder) {
                        continue;
                    }
                    let holder_general = match self.clients.get(holder) {
                        Some((cat, _)) => {
                            *cat == Category::Gaa || !self.registry.contains(holder)
                        }
                        None => false,
                    };
                    if priority && self.reserved.contains(&ch) && holder_general {
                        preempted.insert(holder.clone());
                    } else {
                        ok = false;
                        break 'chans;
                    }
                }
            }
            if ok {
                found.push((set, preempted));
            }
        }
        found
    }

    /// The assignment the contract must produce: lexicographic minimum of
    /// all feasible sets, or None.
    pub fn expect_assignment(
        &self,
        device: &DeviceId,
        count: usize,
        in_range: &BTreeSet<u16>,
    ) -> Option<(BTreeSet<u16>, BTreeSet<DeviceId>)> {
        let mut all = self.feasible_sets(device, count, in_range);
        all.sort_by(|a, b| a.0.cmp(&b.0));
        all.into_iter().next().map(|(s, p)| (s.into_iter().collect(), p))
    }
}
