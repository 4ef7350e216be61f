//! Heartbeat-staleness sweep against an event-replay oracle.
//!
//! The oracle replays a randomized schedule of heartbeats and block cuts over
//! one device, tracking the grant state it expects from three rules:
//!
//!   1. absolute expiry: `expire_time <= cut` makes the grant Expired;
//!   2. reclamation: an occupying grant with no heartbeat for a full interval
//!      plus the 60 s grace is Suspended, spectrum freed;
//!   3. demotion: an Authorized grant with a merely overdue heartbeat drops
//!      back to Granted but keeps its spectrum.
//!
//! The replay also models the ordering pipeline's two clocks: a transaction
//! executes against the previous cut time, and a sweep that touches the same
//! grant in the committing block invalidates it (first committer wins).

mod common;

use std::collections::BTreeSet;

use bdsas_core::{Category, SimDuration, SimTime};
use bdsas_contract::{Decision, ExecOutcome, GrantState, HEARTBEAT_GRACE};
use common::{clique, dev, FEE};
use proptest::collection::vec;
use proptest::prelude::*;

const INTERVAL: SimDuration = SimDuration::from_secs(30);
const LIFETIME: SimDuration = SimDuration::from_secs(300);

#[derive(Debug, Clone, Copy, PartialEq)]
enum Ev {
    Heartbeat,
    Cut,
}

/// Oracle-side grant ledger for one device.
#[derive(Debug, Clone, PartialEq)]
struct Model {
    state: GrantState,
    granted_at: SimTime,
    expire_time: SimTime,
    last_heartbeat: Option<SimTime>,
    has_spectrum: bool,
}

impl Model {
    fn new(granted_at: SimTime) -> Self {
        Model {
            state: GrantState::Granted,
            granted_at,
            expire_time: granted_at + LIFETIME,
            last_heartbeat: None,
            has_spectrum: true,
        }
    }

    /// Applies the three sweep rules at cut time `t`. Returns whether the
    /// grant record changed (which invalidates same-block readers).
    fn sweep(&mut self, t: SimTime) -> bool {
        if matches!(self.state, GrantState::Expired | GrantState::Relinquished) {
            return false;
        }
        if self.expire_time <= t {
            self.state = GrantState::Expired;
            self.has_spectrum = false;
            return true;
        }
        let reference = self.last_heartbeat.unwrap_or(self.granted_at);
        let occupying = matches!(self.state, GrantState::Granted | GrantState::Authorized);
        if occupying && t > reference + INTERVAL + HEARTBEAT_GRACE {
            self.state = GrantState::Suspended;
            self.has_spectrum = false;
            return true;
        }
        if self.state == GrantState::Authorized && t > reference + INTERVAL {
            self.state = GrantState::Granted;
            return true;
        }
        false
    }

    /// The decision a heartbeat executed at clock `exec_now` must get.
    fn heartbeat_decision(&self, exec_now: SimTime) -> Decision {
        if matches!(self.state, GrantState::Expired | GrantState::Relinquished)
            || self.expire_time <= exec_now
        {
            Decision::HeartbeatDenied
        } else {
            Decision::HeartbeatOk
        }
    }

    /// Applies a valid heartbeat's writes.
    fn heartbeat_commit(&mut self, exec_now: SimTime) {
        self.last_heartbeat = Some(exec_now);
        if self.state != GrantState::Suspended {
            self.state = GrantState::Authorized;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn sweep_matches_replay_oracle(
        steps in vec((1u64..40_000, prop_oneof![Just(Ev::Heartbeat), Just(Ev::Cut)]), 1..16)
    ) {
        let mut w = common::world_with(3, 1, clique(&["a"], Category::Gaa), BTreeSet::new(), BTreeSet::new());
        let device = dev("a");

        let granted = w.grant_req(&device, None, FEE);
        let ExecOutcome::Assignment(a) = granted.result.unwrap() else { unreachable!() };
        let gid = a.grant_id.unwrap();
        let mut model = Model::new(SimTime::ZERO);
        let mut prev_cut = SimTime::ZERO;

        // Monotone schedule from millisecond deltas.
        let mut t = SimTime::ZERO;
        for (delta_ms, ev) in steps {
            t = t + SimDuration::from_millis(delta_ms);
            w.advance(t);
            match ev {
                Ev::Cut => {
                    w.tick();
                    model.sweep(t);
                }
                Ev::Heartbeat => {
                    let expected_decision = model.heartbeat_decision(prev_cut);
                    let committed = w.heartbeat(&device, Some(gid));
                    let ExecOutcome::Assignment(hb) = committed.result.unwrap() else { unreachable!() };
                    prop_assert_eq!(hb.decision, expected_decision,
                        "decision at exec clock {:?}", prev_cut);

                    let sweep_touched = model.sweep(t);
                    // First committer wins: the sweep writing the grant
                    // record beats the heartbeat that read it.
                    prop_assert_eq!(committed.valid, !sweep_touched,
                        "validity at cut {:?}", t);
                    if !sweep_touched && expected_decision == Decision::HeartbeatOk {
                        model.heartbeat_commit(prev_cut);
                    }
                }
            }
            prev_cut = t;

            let actual = w.grant_of(&device).unwrap();
            prop_assert_eq!(actual.state, model.state, "state after cut {:?}", t);
            prop_assert_eq!(!actual.channels.is_empty(), model.has_spectrum);
            prop_assert_eq!(
                w.occupancy(0).contains(&device),
                model.has_spectrum,
                "occupancy mirrors spectrum"
            );
            prop_assert_eq!(actual.last_heartbeat, model.last_heartbeat);
        }
    }
}

#[test]
fn reclamation_boundary_is_strict() {
    // now == reference + interval + grace keeps the grant; one nanosecond
    // past it reclaims.
    let mut w = common::world_with(2, 1, clique(&["a"], Category::Gaa), BTreeSet::new(), BTreeSet::new());
    w.grant_req(&dev("a"), None, FEE);
    let deadline = SimTime::ZERO + INTERVAL + HEARTBEAT_GRACE;

    w.advance(deadline);
    let sweep = w.tick();
    assert!(sweep.suspended.is_empty());
    assert_eq!(w.grant_of(&dev("a")).unwrap().state, GrantState::Granted);

    w.advance(deadline + SimDuration::from_nanos(1));
    let sweep = w.tick();
    assert_eq!(sweep.suspended, vec![dev("a")]);
    assert_eq!(w.grant_of(&dev("a")).unwrap().state, GrantState::Suspended);
    assert!(w.occupancy(0).is_empty());
}

#[test]
fn expiry_boundary_is_inclusive() {
    let mut w = common::world_with(2, 1, clique(&["a"], Category::Gaa), BTreeSet::new(), BTreeSet::new());
    w.grant_req(&dev("a"), None, FEE);
    let expire = SimTime::ZERO + LIFETIME;

    w.advance(expire - SimDuration::from_nanos(1));
    assert!(w.tick().expired.is_empty());

    w.advance(expire);
    let sweep = w.tick();
    assert_eq!(sweep.expired, vec![dev("a")]);
    assert_eq!(w.grant_of(&dev("a")).unwrap().state, GrantState::Expired);
}

#[test]
fn overdue_heartbeat_demotes_before_it_suspends() {
    let mut w = common::world_with(2, 1, clique(&["a"], Category::Gaa), BTreeSet::new(), BTreeSet::new());
    let ExecOutcome::Assignment(a) = w.grant_req(&dev("a"), None, FEE).result.unwrap() else {
        unreachable!()
    };

    // Authorize at clock 10 (heartbeat executes against the 10 s cut).
    w.advance(SimTime::from_secs(10));
    w.tick();
    w.advance(SimTime::from_secs(11));
    w.heartbeat(&dev("a"), a.grant_id);
    assert_eq!(w.grant_of(&dev("a")).unwrap().state, GrantState::Authorized);

    // Past one interval: authorization lapses, spectrum stays.
    w.advance(SimTime::from_secs(10) + INTERVAL + SimDuration::from_nanos(1));
    let sweep = w.tick();
    assert_eq!(sweep.demoted, vec![dev("a")]);
    let g = w.grant_of(&dev("a")).unwrap();
    assert_eq!(g.state, GrantState::Granted);
    assert!(!g.channels.is_empty());
    assert!(w.occupancy(0).contains(&dev("a")));

    // Past interval + grace since that heartbeat: reclaimed.
    w.advance(SimTime::from_secs(10) + INTERVAL + HEARTBEAT_GRACE + SimDuration::from_nanos(1));
    let sweep = w.tick();
    assert_eq!(sweep.suspended, vec![dev("a")]);
    assert!(w.occupancy(0).is_empty());
}

#[test]
fn silent_device_loses_spectrum_within_interval_plus_grace() {
    // A device that never heartbeats holds spectrum no longer than one
    // interval plus the grace, measured from the grant.
    let mut w = common::world_with(2, 1, clique(&["a", "b"], Category::Gaa), BTreeSet::new(), BTreeSet::new());
    w.grant_req(&dev("a"), None, FEE);

    let bound = SimTime::ZERO + INTERVAL + HEARTBEAT_GRACE + SimDuration::from_millis(1);
    w.advance(bound);
    w.tick();
    assert_eq!(w.grant_of(&dev("a")).unwrap().state, GrantState::Suspended);

    // The freed channel is immediately grantable to a neighbor.
    let ExecOutcome::Assignment(b) = w.grant_req(&dev("b"), None, FEE).result.unwrap() else {
        unreachable!()
    };
    assert_eq!(b.decision, Decision::Granted);
    assert_eq!(b.channels, BTreeSet::from([0u16]));
}

#[test]
fn suspended_grants_only_leave_by_expiry_or_relinquish() {
    let mut w = common::world_with(2, 1, clique(&["a"], Category::Gaa), BTreeSet::new(), BTreeSet::new());
    let ExecOutcome::Assignment(a) = w.grant_req(&dev("a"), None, FEE).result.unwrap() else {
        unreachable!()
    };
    w.advance(SimTime::from_secs(100));
    w.tick();
    assert_eq!(w.grant_of(&dev("a")).unwrap().state, GrantState::Suspended);

    // Heartbeats keep arriving; the grant stays suspended.
    w.advance(SimTime::from_secs(120));
    let hb = w.heartbeat(&dev("a"), a.grant_id);
    assert!(hb.valid);
    assert_eq!(w.grant_of(&dev("a")).unwrap().state, GrantState::Suspended);

    // Absolute expiry still applies to suspended grants.
    w.advance(SimTime::ZERO + LIFETIME);
    let sweep = w.tick();
    assert_eq!(sweep.expired, vec![dev("a")]);
}
