//! Device radio state machine: the radio keys up only inside an acknowledged
//! authorization window and falls silent on lapse, reclaim, denial, or expiry.

mod common;

use std::collections::BTreeSet;

use bdsas_contract::{Assignment, ClientFsm, Decision, ExecOutcome, FsmAction, GrantState};
use bdsas_core::{
    Category, Digest, DeviceId, RequestType, SimDuration, SimTime, TokenAmount, TxPayload,
    CTxPayload, ChannelUpdate, AvailabilityReason,
};
use common::{dev, node, record, Committed, World, FEE};

const INTERVAL: SimDuration = SimDuration::from_secs(30);

fn secs(s: u64) -> SimTime {
    SimTime::ZERO + SimDuration::from_secs(s)
}

fn grant_id() -> Digest {
    bdsas_core::sha256(b"radio-fsm-test-grant")
}

fn granted(device: &DeviceId, at: SimTime) -> Assignment {
    Assignment {
        device: device.clone(),
        request: RequestType::Grant,
        decision: Decision::Granted,
        denial: None,
        grant_id: Some(grant_id()),
        channels: [2u16].into(),
        expire_time: Some(at + SimDuration::from_secs(300)),
        heartbeat_interval: Some(INTERVAL),
        authorized_until: None,
        fee_charged: FEE,
        preempted: BTreeSet::new(),
    }
}

fn hb_ok(device: &DeviceId, channels: &[u16], until: Option<SimTime>) -> Assignment {
    Assignment {
        device: device.clone(),
        request: RequestType::Heartbeat,
        decision: Decision::HeartbeatOk,
        denial: None,
        grant_id: Some(grant_id()),
        channels: channels.iter().copied().collect(),
        expire_time: None,
        heartbeat_interval: None,
        authorized_until: until,
        fee_charged: TokenAmount::ZERO,
        preempted: BTreeSet::new(),
    }
}

#[test]
fn winning_a_grant_does_not_key_the_radio() {
    let d = dev("cbsd-a");
    let mut fsm = ClientFsm::new(d.clone());
    assert_eq!(fsm.next_wake(), None);

    let actions = fsm.observe(&granted(&d, secs(100)), secs(100));
    assert!(actions.is_empty(), "transmission waits for an acknowledged heartbeat");
    assert!(!fsm.is_transmitting());
    // First heartbeat goes out one interval after the win.
    assert_eq!(fsm.next_wake(), Some(secs(130)));

    let actions = fsm.on_timer(secs(130));
    assert_eq!(
        actions,
        vec![FsmAction::Send(RequestType::Heartbeat, Some(grant_id()))]
    );
    assert!(!fsm.is_transmitting());
    assert_eq!(fsm.holding().unwrap().next_heartbeat, secs(160));
}

#[test]
fn acknowledged_heartbeat_opens_the_window_and_lapse_closes_it() {
    let d = dev("cbsd-a");
    let mut fsm = ClientFsm::new(d.clone());
    fsm.observe(&granted(&d, secs(100)), secs(100));
    fsm.on_timer(secs(130));

    let actions = fsm.observe(&hb_ok(&d, &[2], Some(secs(161))), secs(131));
    assert_eq!(actions, vec![FsmAction::Transmit([2u16].into())]);
    assert!(fsm.is_transmitting());

    // Second ack while already transmitting: no duplicate key-up.
    fsm.on_timer(secs(160));
    let actions = fsm.observe(&hb_ok(&d, &[2], Some(secs(191))), secs(161));
    assert!(actions.is_empty());

    // No further acks: the window lapses and only then does the radio stop.
    assert_eq!(fsm.next_wake(), Some(secs(190)));
    let actions = fsm.on_timer(secs(190));
    assert_eq!(
        actions,
        vec![FsmAction::Send(RequestType::Heartbeat, Some(grant_id()))]
    );
    assert!(fsm.is_transmitting(), "still inside the acknowledged window");

    let actions = fsm.on_timer(secs(191));
    assert_eq!(actions, vec![FsmAction::StopTransmit]);
    assert!(!fsm.is_transmitting());
    assert!(fsm.holding().is_some(), "a lapse is not a loss of the grant");

    // The next acknowledgment re-opens the window.
    let actions = fsm.observe(&hb_ok(&d, &[2], Some(secs(230))), secs(200));
    assert_eq!(actions, vec![FsmAction::Transmit([2u16].into())]);
}

#[test]
fn empty_channel_ack_means_reclaimed_so_stop_and_hand_back() {
    let d = dev("cbsd-a");
    let mut fsm = ClientFsm::new(d.clone());
    fsm.observe(&granted(&d, secs(100)), secs(100));
    fsm.on_timer(secs(130));
    fsm.observe(&hb_ok(&d, &[2], Some(secs(161))), secs(131));
    assert!(fsm.is_transmitting());

    let actions = fsm.observe(&hb_ok(&d, &[], None), secs(161));
    assert_eq!(
        actions,
        vec![
            FsmAction::StopTransmit,
            FsmAction::Send(RequestType::Relinquish, Some(grant_id())),
        ]
    );
    assert!(fsm.holding().unwrap().suspended);

    // Suspended grants do not heartbeat; only expiry remains on the clock.
    assert_eq!(fsm.next_wake(), Some(secs(400)));
    assert!(fsm.on_timer(secs(191)).is_empty());

    let mut done = granted(&d, secs(100));
    done.request = RequestType::Relinquish;
    done.decision = Decision::Relinquished;
    let actions = fsm.observe(&done, secs(162));
    assert!(actions.is_empty(), "radio is already silent");
    assert!(fsm.holding().is_none());
    assert_eq!(fsm.next_wake(), None);
}

#[test]
fn heartbeat_denial_and_expiry_both_clear_the_grant() {
    let d = dev("cbsd-a");

    // Denial: the grant no longer exists on the contract side.
    let mut fsm = ClientFsm::new(d.clone());
    fsm.observe(&granted(&d, secs(100)), secs(100));
    fsm.on_timer(secs(130));
    fsm.observe(&hb_ok(&d, &[2], Some(secs(161))), secs(131));
    let mut denied = hb_ok(&d, &[], None);
    denied.decision = Decision::HeartbeatDenied;
    let actions = fsm.observe(&denied, secs(161));
    assert_eq!(actions, vec![FsmAction::StopTransmit]);
    assert!(fsm.holding().is_none());

    // Expiry: the local clock alone must silence and clear.
    let mut fsm = ClientFsm::new(d.clone());
    fsm.observe(&granted(&d, secs(100)), secs(100));
    fsm.on_timer(secs(130));
    fsm.observe(&hb_ok(&d, &[2], Some(secs(161))), secs(131));
    let actions = fsm.on_timer(secs(400));
    assert_eq!(actions, vec![FsmAction::StopTransmit]);
    assert!(fsm.holding().is_none());
    assert_eq!(fsm.next_wake(), None);
}

#[test]
fn results_for_other_devices_or_grants_are_ignored() {
    let d = dev("cbsd-a");
    let stranger = dev("cbsd-b");
    let mut fsm = ClientFsm::new(d.clone());
    fsm.observe(&granted(&d, secs(100)), secs(100));
    fsm.on_timer(secs(130));
    fsm.observe(&hb_ok(&d, &[2], Some(secs(161))), secs(131));

    // Someone else's reclaim signal.
    assert!(fsm.observe(&hb_ok(&stranger, &[], None), secs(140)).is_empty());
    assert!(fsm.is_transmitting());

    // A result for a stale grant id of this device.
    let mut stale = hb_ok(&d, &[], None);
    stale.grant_id = Some(bdsas_core::sha256(b"some-older-grant"));
    assert!(fsm.observe(&stale, secs(141)).is_empty());
    assert!(fsm.is_transmitting());
}

#[test]
fn denied_relinquish_still_clears_the_local_grant() {
    let d = dev("cbsd-a");
    let mut fsm = ClientFsm::new(d.clone());
    fsm.observe(&granted(&d, secs(100)), secs(100));

    // The contract already considers the grant dead (say it expired before
    // the relinquish committed); the device must not keep a ghost.
    let mut gone = granted(&d, secs(100));
    gone.request = RequestType::Relinquish;
    gone.decision = Decision::Denied;
    let actions = fsm.observe(&gone, secs(150));
    assert!(actions.is_empty());
    assert!(fsm.holding().is_none());
}

/// Extracts the assignment out of a committed access transaction.
fn assignment(c: Committed) -> Assignment {
    assert!(c.valid, "commit was invalidated: {:?}", c.result);
    match c.result {
        Ok(ExecOutcome::Assignment(a)) => a,
        other => panic!("expected an assignment, got {other:?}"),
    }
}

/// Moves the world to `t` with an empty block so the next transaction
/// executes on a state cut at `t`.
fn cut_at(w: &mut World, t: SimTime) {
    w.advance(t);
    w.tick();
}

#[test]
fn closed_loop_heartbeats_keep_the_radio_keyed_until_reclaim() {
    let d = dev("cbsd-a");
    let mut w = common::world_with(
        3,
        1,
        vec![record("cbsd-a", Category::Gaa, &[])],
        BTreeSet::new(),
        BTreeSet::new(),
    );
    let mut fsm = ClientFsm::new(d.clone());

    let a = assignment(w.grant_req(&d, None, FEE));
    assert_eq!(a.decision, Decision::Granted);
    assert!(fsm.observe(&a, w.now).is_empty());
    let id = fsm.holding().unwrap().id;

    // Three heartbeat rounds; transmission starts with the first ack and
    // never outlives the window the contract granted.
    for round in 1..=3u64 {
        let t = secs(30 * round);
        cut_at(&mut w, t);
        let actions = fsm.on_timer(t);
        assert!(actions.contains(&FsmAction::Send(RequestType::Heartbeat, Some(id))));
        let a = assignment(w.heartbeat(&d, Some(id)));
        assert_eq!(a.decision, Decision::HeartbeatOk);
        fsm.observe(&a, t);
        assert!(fsm.is_transmitting());
        assert_eq!(w.grant_of(&d).unwrap().state, GrantState::Authorized);
        assert_eq!(fsm.holding().unwrap().authorized_until, Some(t + INTERVAL));
    }

    // Regulator closes the device's channel: the contract reclaims spectrum,
    // the next heartbeat carries the empty-channel signal, and the device
    // ends up silent with the grant handed back.
    let held = fsm.holding().unwrap().channels.clone();
    cut_at(&mut w, secs(100));
    let c = w.submit(
        &node("sas-0"),
        TxPayload::Channel(CTxPayload::Channels(ChannelUpdate {
            channels: held.iter().copied().collect(),
            available: false,
            reason: AvailabilityReason::IncumbentProtected,
        })),
    );
    assert!(c.valid);
    assert_eq!(w.grant_of(&d).unwrap().state, GrantState::Suspended);

    let t = secs(120);
    cut_at(&mut w, t);
    // The previous window ends exactly as this heartbeat goes out, so the
    // radio is already silent while the answer is in flight.
    let actions = fsm.on_timer(t);
    assert!(actions.contains(&FsmAction::StopTransmit));
    assert!(actions.contains(&FsmAction::Send(RequestType::Heartbeat, Some(id))));
    assert!(!fsm.is_transmitting());
    let a = assignment(w.heartbeat(&d, Some(id)));
    assert_eq!(a.decision, Decision::HeartbeatOk);
    assert!(a.channels.is_empty());

    let actions = fsm.observe(&a, t);
    assert_eq!(actions, vec![FsmAction::Send(RequestType::Relinquish, Some(id))]);

    let a = assignment(w.relinquish(&d, Some(id)));
    assert_eq!(a.decision, Decision::Relinquished);
    fsm.observe(&a, t);
    assert!(fsm.holding().is_none());
    assert!(!fsm.is_transmitting());
    assert_eq!(w.grant_of(&d).unwrap().state, GrantState::Relinquished);
    for ch in held {
        assert!(w.occupancy(ch).is_empty());
    }
}

#[test]
fn unanswered_heartbeats_silence_the_radio_within_one_interval() {
    let d = dev("cbsd-a");
    let mut w = common::world_with(
        3,
        1,
        vec![record("cbsd-a", Category::Gaa, &[])],
        BTreeSet::new(),
        BTreeSet::new(),
    );
    let mut fsm = ClientFsm::new(d.clone());

    let a = assignment(w.grant_req(&d, None, FEE));
    fsm.observe(&a, w.now);
    let id = fsm.holding().unwrap().id;

    cut_at(&mut w, secs(30));
    fsm.on_timer(secs(30));
    let a = assignment(w.heartbeat(&d, Some(id)));
    fsm.observe(&a, secs(30));
    assert!(fsm.is_transmitting());
    let last_ack = secs(30);

    // The network goes dark: heartbeats keep being sent but nothing comes
    // back. The radio must stop on its own no later than one interval after
    // the last acknowledgment.
    let mut silent_at = None;
    let mut t = secs(30);
    while silent_at.is_none() {
        t = fsm.next_wake().expect("grant still held");
        for action in fsm.on_timer(t) {
            if action == FsmAction::StopTransmit {
                silent_at = Some(t);
            }
        }
    }
    assert!(silent_at.unwrap() <= last_ack + INTERVAL);

    // Contract side converges on the same conclusion a grace period later:
    // the silent device's spectrum is reclaimed by the first sweep strictly
    // past last-heartbeat + interval + grace (30 + 30 + 60).
    cut_at(&mut w, secs(121));
    let g = w.grant_of(&d).unwrap();
    assert_eq!(g.state, GrantState::Suspended);
    assert!(w.occupancy(0).is_empty());
}
