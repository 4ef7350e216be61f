//! Randomized whole-contract scenario driver.
//!
//! Each seed builds a small world (up to six devices, up to six channels,
//! random interference graph, tiers, priority standing, reservations, and
//! balances) and drives it through a random operation sequence: grants with
//! assorted deposits and frequency windows, heartbeats with real and bogus
//! ids, relinquishes, channel closures and reopenings, and time jumps that
//! trip the expiry sweep.
//!
//! After every committed block the full safety-invariant suite runs, and
//! every access decision is compared against an independent prediction:
//! denials against the pinned check order, assignments against the
//! exponential brute-force oracle. Any disagreement panics with the seed and
//! step baked into the message.

use std::collections::{BTreeMap, BTreeSet};

use bdsas_contract::{
    Assignment, ChannelTable, Decision, DenialReason, ExecOutcome, GenesisConfig, Grant,
    GrantState, StateKey, StateValue,
};
use bdsas_core::{
    sha256, AvailabilityReason, CTxPayload, Category, ChannelUpdate, ClientRecord,
    ContractParams, DeviceId, Digest, FrequencyRange, SimDuration, TokenAmount, TxPayload,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{dev, node, Committed, OracleWorld, World, FEE};

/// Tally of what a scenario (or a batch of them) actually exercised. Tests
/// assert on these so a silent generator regression cannot hollow out the
/// suite.
#[derive(Debug, Default, Clone)]
pub struct ScenarioStats {
    pub granted: u64,
    pub denied_unregistered: u64,
    pub denied_already_granted: u64,
    pub denied_fee: u64,
    pub denied_no_spectrum: u64,
    /// Devices preempted by priority assignments, summed.
    pub preemptions: u64,
    pub heartbeats_ok: u64,
    /// Heartbeats acknowledged with the empty channel set.
    pub heartbeats_while_suspended: u64,
    pub heartbeats_denied: u64,
    pub relinquished: u64,
    pub relinquish_denied: u64,
    pub swept_expired: u64,
    pub swept_suspended: u64,
    pub swept_demoted: u64,
    pub channel_closes: u64,
    pub channel_opens: u64,
    pub steps: u64,
}

impl ScenarioStats {
    pub fn absorb(&mut self, o: &ScenarioStats) {
        self.granted += o.granted;
        self.denied_unregistered += o.denied_unregistered;
        self.denied_already_granted += o.denied_already_granted;
        self.denied_fee += o.denied_fee;
        self.denied_no_spectrum += o.denied_no_spectrum;
        self.preemptions += o.preemptions;
        self.heartbeats_ok += o.heartbeats_ok;
        self.heartbeats_while_suspended += o.heartbeats_while_suspended;
        self.heartbeats_denied += o.heartbeats_denied;
        self.relinquished += o.relinquished;
        self.relinquish_denied += o.relinquish_denied;
        self.swept_expired += o.swept_expired;
        self.swept_suspended += o.swept_suspended;
        self.swept_demoted += o.swept_demoted;
        self.channel_closes += o.channel_closes;
        self.channel_opens += o.channel_opens;
        self.steps += o.steps;
    }
}

/// Runs one seeded scenario for `steps` operations, panicking on the first
/// invariant violation or oracle mismatch.
pub fn run_seed(seed: u64, steps: usize) -> ScenarioStats {
    let mut d = Driver::build(seed);
    for step in 0..steps {
        d.step(seed, step);
    }
    d.stats
}

struct Driver {
    rng: ChaCha8Rng,
    w: World,
    n_channels: u16,
    per_grant: u16,
    devices: Vec<DeviceId>,
    ghost: DeviceId,
    initial_total: TokenAmount,
    /// grant id -> deposit escrowed when it was won.
    charged: BTreeMap<Digest, TokenAmount>,
    stats: ScenarioStats,
}

impl Driver {
    fn build(seed: u64) -> Driver {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_channels = rng.random_range(2..=6u16);
        let per_grant = if n_channels >= 3 && rng.random_bool(0.3) { 2 } else { 1 };
        let n_dev = rng.random_range(2..=6usize);
        let names: Vec<String> = (0..n_dev).map(|i| format!("cbsd-{i}")).collect();

        // Symmetric interference graph.
        let mut neighbors: Vec<BTreeSet<DeviceId>> = vec![BTreeSet::new(); n_dev];
        for i in 0..n_dev {
            for j in (i + 1)..n_dev {
                if rng.random_bool(0.55) {
                    neighbors[i].insert(dev(&names[j]));
                    neighbors[j].insert(dev(&names[i]));
                }
            }
        }

        let mut clients = Vec::new();
        let mut registry = BTreeSet::new();
        for i in 0..n_dev {
            let category = if rng.random_bool(0.4) { Category::Pal } else { Category::Gaa };
            if category == Category::Pal && rng.random_bool(0.7) {
                registry.insert(dev(&names[i]));
            }
            clients.push(ClientRecord {
                device: dev(&names[i]),
                category,
                max_eirp_dbm: 30.0,
                neighbors: neighbors[i].clone(),
                witness_eligible: false,
            });
        }

        let reserved: BTreeSet<u16> =
            (0..n_channels).filter(|_| rng.random_bool(0.5)).collect();
        let funding = [0u64, 12, 25, 47, 100];
        let accounts: Vec<(DeviceId, TokenAmount)> = names
            .iter()
            .map(|n| {
                let pick = funding[rng.random_range(0..funding.len())];
                (dev(n), TokenAmount::from_tokens(pick))
            })
            .collect();
        let initial_total = accounts
            .iter()
            .fold(TokenAmount::ZERO, |acc, (_, a)| acc + *a);

        let params = ContractParams {
            channels_per_grant: per_grant,
            grant_fee: FEE,
            pal_reserved: reserved,
            ..ContractParams::default()
        };
        let w = World::new(GenesisConfig {
            channels: ChannelTable::uniform(n_channels),
            params,
            committee: (0..4).map(|i| node(&format!("sas-{i}"))).collect(),
            witnesses: (0..5).map(|i| node(&format!("wit-{i}"))).collect(),
            pal_registry: registry,
            clients,
            accounts,
        });

        Driver {
            rng,
            w,
            n_channels,
            per_grant,
            devices: names.iter().map(|n| dev(n)).collect(),
            ghost: dev("cbsd-ghost"),
            initial_total,
            charged: BTreeMap::new(),
            stats: ScenarioStats::default(),
        }
    }

    fn pick_device(&mut self) -> DeviceId {
        if self.rng.random_bool(0.08) {
            self.ghost.clone()
        } else {
            self.devices[self.rng.random_range(0..self.devices.len())].clone()
        }
    }

    fn step(&mut self, seed: u64, step: usize) {
        self.stats.steps += 1;
        let roll = self.rng.random_range(0..100);
        if roll < 35 {
            self.op_grant(seed, step);
        } else if roll < 60 {
            self.op_heartbeat(seed, step);
        } else if roll < 72 {
            self.op_relinquish(seed, step);
        } else if roll < 88 {
            self.op_advance();
        } else {
            self.op_toggle_channel(seed, step);
        }
        self.check_invariants(seed, step);
    }

    fn op_grant(&mut self, seed: u64, step: usize) {
        let device = self.pick_device();
        let desired = if self.rng.random_bool(0.5) {
            None
        } else {
            let lo = self.rng.random_range(0..self.n_channels);
            let hi = if lo > 0 && self.rng.random_bool(0.15) {
                // Inverted window: no channel fits, allocator must refuse.
                self.rng.random_range(0..lo)
            } else {
                self.rng.random_range(lo..self.n_channels)
            };
            Some(FrequencyRange {
                low_mhz: 3550.0 + 10.0 * lo as f64,
                high_mhz: 3560.0 + 10.0 * hi as f64,
            })
        };
        let deposit = match self.rng.random_range(0..10) {
            0 => TokenAmount(FEE.millis() - 1),
            1 => TokenAmount::from_tokens(150),
            2 | 3 => FEE + TokenAmount(self.rng.random_range(0..2500)),
            _ => FEE,
        };

        let expected = self.predict_grant(&device, desired.as_ref(), deposit);
        let pre_balance = self.w.account(&device);
        let a = assignment(self.w.grant_req(&device, desired, deposit), seed, step);

        match expected {
            Expect::Deny(reason) => {
                assert_eq!(
                    a.decision,
                    Decision::Denied,
                    "seed {seed} step {step}: predicted denial {reason:?}, got {a:?}"
                );
                assert_eq!(
                    a.denial,
                    Some(reason),
                    "seed {seed} step {step}: wrong denial reason"
                );
                assert_eq!(a.fee_charged, TokenAmount::ZERO);
                assert_eq!(
                    self.w.account(&device),
                    pre_balance,
                    "seed {seed} step {step}: denials must charge nothing"
                );
                match reason {
                    DenialReason::Unregistered => self.stats.denied_unregistered += 1,
                    DenialReason::AlreadyGranted => self.stats.denied_already_granted += 1,
                    DenialReason::InsufficientFee => self.stats.denied_fee += 1,
                    DenialReason::NoSpectrum => self.stats.denied_no_spectrum += 1,
                    other => panic!("seed {seed} step {step}: unexpected grant denial {other:?}"),
                }
            }
            Expect::Grant(channels, victims) => {
                assert_eq!(
                    a.decision,
                    Decision::Granted,
                    "seed {seed} step {step}: oracle found {channels:?}, contract denied: {a:?}"
                );
                assert_eq!(
                    a.channels, channels,
                    "seed {seed} step {step}: assignment differs from oracle"
                );
                assert_eq!(
                    a.preempted, victims,
                    "seed {seed} step {step}: preemption set differs from oracle"
                );
                assert_eq!(a.fee_charged, deposit);
                assert_eq!(
                    self.w.account(&device),
                    pre_balance - deposit,
                    "seed {seed} step {step}: full deposit must leave the account"
                );
                let gid = a.grant_id.expect("granted assignments carry an id");
                match self.w.state.get(&StateKey::Fee(gid)) {
                    Some(StateValue::Fee(f)) => {
                        assert_eq!(f.total(), deposit, "seed {seed} step {step}: escrow total");
                        assert_eq!(f.payer, device);
                        assert!(!f.cleared);
                    }
                    other => panic!("seed {seed} step {step}: missing fee record: {other:?}"),
                }
                for v in &a.preempted {
                    let g = self.w.grant_of(v).expect("victim grant exists");
                    assert_eq!(
                        g.state,
                        GrantState::Suspended,
                        "seed {seed} step {step}: preemption suspends the victim"
                    );
                    assert!(g.channels.is_empty());
                }
                self.stats.preemptions += a.preempted.len() as u64;
                self.stats.granted += 1;
                self.charged.insert(gid, deposit);
            }
        }
    }

    fn predict_grant(
        &self,
        device: &DeviceId,
        desired: Option<&FrequencyRange>,
        deposit: TokenAmount,
    ) -> Expect {
        if self.w.client(device).is_none() {
            return Expect::Deny(DenialReason::Unregistered);
        }
        if let Some(g) = self.w.grant_of(device) {
            if !g.state.is_terminal() {
                return Expect::Deny(DenialReason::AlreadyGranted);
            }
        }
        if deposit < FEE || self.w.account(device) < deposit {
            return Expect::Deny(DenialReason::InsufficientFee);
        }
        let table = self.w.channels();
        let in_range: BTreeSet<u16> = match desired {
            Some(r) => table.indices_within(r).into_iter().collect(),
            None => (0..table.len()).collect(),
        };
        let oracle = OracleWorld::from_state(&self.w.state);
        match oracle.expect_assignment(device, self.per_grant as usize, &in_range) {
            None => Expect::Deny(DenialReason::NoSpectrum),
            Some((channels, victims)) => Expect::Grant(channels, victims),
        }
    }

    fn op_heartbeat(&mut self, seed: u64, step: usize) {
        let device = self.pick_device();
        let held = self.w.grant_of(&device);
        let sent_id = if self.rng.random_bool(0.12) {
            Some(sha256(b"bogus-grant-id"))
        } else {
            held.as_ref().map(|g| g.id)
        };
        let now = self.w.state.state_time();

        enum Hb {
            Deny(DenialReason),
            Ok { channels: BTreeSet<u16>, suspended: bool },
        }
        let expected = if self.w.client(&device).is_none() {
            Hb::Deny(DenialReason::Unregistered)
        } else {
            match &held {
                None => Hb::Deny(DenialReason::UnknownGrant),
                Some(g) if sent_id != Some(g.id) => Hb::Deny(DenialReason::UnknownGrant),
                Some(g) if g.state.is_terminal() || g.expire_time <= now => {
                    Hb::Deny(DenialReason::GrantNotActive)
                }
                Some(g) => Hb::Ok {
                    channels: g.channels.clone(),
                    suspended: g.state == GrantState::Suspended,
                },
            }
        };

        let a = assignment(self.w.heartbeat(&device, sent_id), seed, step);
        match expected {
            Hb::Deny(reason) => {
                assert_eq!(
                    a.decision,
                    Decision::HeartbeatDenied,
                    "seed {seed} step {step}: expected heartbeat denial, got {a:?}"
                );
                assert_eq!(a.denial, Some(reason), "seed {seed} step {step}");
                self.stats.heartbeats_denied += 1;
            }
            Hb::Ok { channels, suspended } => {
                assert_eq!(a.decision, Decision::HeartbeatOk, "seed {seed} step {step}");
                assert_eq!(a.channels, channels, "seed {seed} step {step}");
                let g = self.w.grant_of(&device).expect("grant survives a heartbeat");
                assert_eq!(g.last_heartbeat, Some(now), "seed {seed} step {step}");
                if suspended {
                    assert_eq!(g.state, GrantState::Suspended, "seed {seed} step {step}");
                    assert_eq!(a.authorized_until, None);
                    assert!(a.channels.is_empty(), "seed {seed} step {step}");
                    self.stats.heartbeats_while_suspended += 1;
                } else {
                    assert_eq!(g.state, GrantState::Authorized, "seed {seed} step {step}");
                    assert_eq!(a.authorized_until, Some(now + g.heartbeat_interval));
                    self.stats.heartbeats_ok += 1;
                }
            }
        }
    }

    fn op_relinquish(&mut self, seed: u64, step: usize) {
        let device = self.pick_device();
        let held = self.w.grant_of(&device);
        let sent_id = if self.rng.random_bool(0.12) {
            Some(sha256(b"bogus-grant-id"))
        } else {
            held.as_ref().map(|g| g.id)
        };

        let expected = if self.w.client(&device).is_none() {
            Err(DenialReason::Unregistered)
        } else {
            match &held {
                None => Err(DenialReason::UnknownGrant),
                Some(g) if sent_id != Some(g.id) => Err(DenialReason::UnknownGrant),
                Some(g) if g.state.is_terminal() => Err(DenialReason::GrantNotActive),
                Some(g) => Ok(g.channels.clone()),
            }
        };

        let a = assignment(self.w.relinquish(&device, sent_id), seed, step);
        match expected {
            Err(reason) => {
                assert_eq!(a.decision, Decision::Denied, "seed {seed} step {step}: {a:?}");
                assert_eq!(a.denial, Some(reason), "seed {seed} step {step}");
                self.stats.relinquish_denied += 1;
            }
            Ok(freed) => {
                assert_eq!(a.decision, Decision::Relinquished, "seed {seed} step {step}");
                let g = self.w.grant_of(&device).expect("record survives relinquish");
                assert_eq!(g.state, GrantState::Relinquished, "seed {seed} step {step}");
                assert!(g.channels.is_empty());
                for ch in freed {
                    assert!(
                        !self.w.occupancy(ch).contains(&device),
                        "seed {seed} step {step}: relinquish must free channel {ch}"
                    );
                }
                self.stats.relinquished += 1;
            }
        }
    }

    fn op_advance(&mut self) {
        let delta_ms = if self.rng.random_bool(0.125) {
            // Occasionally jump far enough to cross grant expiry.
            self.rng.random_range(150_000..400_000)
        } else {
            self.rng.random_range(1_000..90_000)
        };
        let to = self.w.now + SimDuration::from_millis(delta_ms);
        self.w.advance(to);
        let sweep = self.w.tick();
        self.stats.swept_expired += sweep.expired.len() as u64;
        self.stats.swept_suspended += sweep.suspended.len() as u64;
        self.stats.swept_demoted += sweep.demoted.len() as u64;
    }

    fn op_toggle_channel(&mut self, seed: u64, step: usize) {
        let ch = self.rng.random_range(0..self.n_channels);
        let close = self.rng.random_bool(0.6);
        let c = self.w.submit(
            &node("sas-0"),
            TxPayload::Channel(CTxPayload::Channels(ChannelUpdate {
                channels: vec![ch],
                available: !close,
                reason: if close {
                    AvailabilityReason::IncumbentProtected
                } else {
                    AvailabilityReason::Open
                },
            })),
        );
        assert!(
            c.valid && c.result.is_ok(),
            "seed {seed} step {step}: channel update failed: {:?}",
            c.result
        );
        if close {
            self.stats.channel_closes += 1;
        } else {
            self.stats.channel_opens += 1;
        }
    }

    /// Global safety checks, run after every committed block.
    fn check_invariants(&self, seed: u64, step: usize) {
        let w = &self.w;
        let table = w.channels();
        let st = w.state.state_time();

        // Escrow records correspond one-to-one with deposits taken.
        let mut fee_total = TokenAmount::ZERO;
        let mut fee_keys: BTreeSet<Digest> = BTreeSet::new();
        for (k, v, _) in w.state.iter() {
            if let (StateKey::Fee(gid), StateValue::Fee(f)) = (k, v) {
                fee_total += f.total();
                fee_keys.insert(*gid);
                assert_eq!(
                    self.charged.get(gid),
                    Some(&f.total()),
                    "seed {seed} step {step}: escrow drifted from the deposit"
                );
            }
        }
        assert_eq!(
            fee_keys,
            self.charged.keys().copied().collect::<BTreeSet<_>>(),
            "seed {seed} step {step}: fee records came or went unexpectedly"
        );

        // Tokens move between accounts and escrow, never appear or vanish.
        let mut balances = TokenAmount::ZERO;
        for (k, v, _) in w.state.iter() {
            if let (StateKey::Account(_), StateValue::Account(a)) = (k, v) {
                balances += *a;
            }
        }
        assert_eq!(
            balances + fee_total,
            self.initial_total,
            "seed {seed} step {step}: token conservation broken"
        );

        let grants: Vec<Grant> = w.state.grants().cloned().collect();
        let mut expected_occ: BTreeMap<u16, BTreeSet<DeviceId>> = BTreeMap::new();
        for g in &grants {
            match g.state {
                GrantState::Granted | GrantState::Authorized => {
                    assert!(
                        !g.channels.is_empty(),
                        "seed {seed} step {step}: active grant without spectrum"
                    );
                    assert!(
                        g.expire_time > st,
                        "seed {seed} step {step}: {} occupies past expiry",
                        g.device.as_str()
                    );
                    for &ch in &g.channels {
                        assert!(
                            table.get(ch).is_some_and(|d| d.available),
                            "seed {seed} step {step}: {} transmits on closed channel {ch}",
                            g.device.as_str()
                        );
                        expected_occ.entry(ch).or_default().insert(g.device.clone());
                    }
                    if g.state == GrantState::Authorized {
                        let hb_ref = g.last_heartbeat.unwrap_or(g.granted_at);
                        assert!(
                            st <= hb_ref + g.heartbeat_interval,
                            "seed {seed} step {step}: stale authorization survived the sweep"
                        );
                    }
                }
                GrantState::Suspended => {
                    assert!(
                        g.channels.is_empty(),
                        "seed {seed} step {step}: suspension must strip spectrum"
                    );
                }
                GrantState::Relinquished | GrantState::Expired => {}
            }
        }

        // Interference safety: no two neighboring active grants share any
        // channel, in either direction of the (symmetric) graph.
        for a in &grants {
            if !a.state.occupies() {
                continue;
            }
            let na = w.client(&a.device).expect("granted devices are registered").neighbors;
            for b in &grants {
                if b.device == a.device || !b.state.occupies() || !na.contains(&b.device) {
                    continue;
                }
                assert!(
                    a.channels.is_disjoint(&b.channels),
                    "seed {seed} step {step}: neighbors {} and {} share spectrum",
                    a.device.as_str(),
                    b.device.as_str()
                );
            }
        }

        // The occupancy index mirrors the grants exactly.
        for ch in 0..self.n_channels {
            assert_eq!(
                w.occupancy(ch),
                expected_occ.remove(&ch).unwrap_or_default(),
                "seed {seed} step {step}: occupancy index out of sync on channel {ch}"
            );
        }
    }
}

enum Expect {
    Deny(DenialReason),
    Grant(BTreeSet<u16>, BTreeSet<DeviceId>),
}

fn assignment(c: Committed, seed: u64, step: usize) -> Assignment {
    assert!(
        c.valid,
        "seed {seed} step {step}: single-writer commit invalidated: {:?}",
        c.result
    );
    match c.result {
        Ok(ExecOutcome::Assignment(a)) => a,
        other => panic!("seed {seed} step {step}: expected an assignment, got {other:?}"),
    }
}
