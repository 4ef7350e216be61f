//! Run identity: the trace is a pure function of scenario and seed, the
//! clock is monotone, and node labels are decoration rather than behavior.

mod common;

use bdsas_core::{NodeId, SimDuration, SimTime};
use bdsas_simnet::{DelayMap, DelayModel, Engine, TraceEvent, TraceLine};
use common::{Echo, Pinger, Toy};

fn ping_pong(seed: u64, first: &str, second: &str) -> Engine<Toy> {
    let mut eng = Engine::new(seed, DelayMap::uniform(DelayModel::from_millis(10, 1)));
    let a = NodeId::new(first);
    let b = NodeId::new(second);
    eng.add_node(a, Toy::P(Pinger::new(b.clone(), SimDuration::from_millis(50), 40)))
        .unwrap();
    eng.add_node(b, Toy::E(Echo::new())).unwrap();
    eng
}

#[test]
fn the_same_seed_reproduces_the_trace_bytes() {
    let mut e1 = ping_pong(9, "a", "b");
    let mut e2 = ping_pong(9, "a", "b");
    e1.run_to_quiescence().unwrap();
    e2.run_to_quiescence().unwrap();
    assert_eq!(e1.trace().digest(), e2.trace().digest());
    assert_eq!(e1.trace().to_jsonl(), e2.trace().to_jsonl());

    let mut e3 = ping_pong(10, "a", "b");
    e3.run_to_quiescence().unwrap();
    assert_ne!(
        e1.trace().digest(),
        e3.trace().digest(),
        "a different seed draws different delays"
    );
}

#[test]
fn an_empty_scenario_produces_an_empty_trace() {
    let mut eng: Engine<Toy> = Engine::new(1, DelayMap::default());
    eng.run_to_quiescence().unwrap();
    assert!(eng.trace().is_empty());
    assert_eq!(eng.now(), SimTime::ZERO);
}

#[test]
fn the_clock_never_runs_backwards() {
    let mut eng = ping_pong(3, "a", "b");
    eng.run_to_quiescence().unwrap();
    let lines = eng.trace().lines();
    assert!(!lines.is_empty());
    for w in lines.windows(2) {
        assert!(w[0].at <= w[1].at, "trace times must be nondecreasing");
        if w[0].at == w[1].at {
            assert!(w[0].seq < w[1].seq, "ties break by sequence");
        }
    }
}

#[test]
fn every_delivery_was_sent_and_arrived_later() {
    let mut eng = ping_pong(4, "a", "b");
    eng.run_to_quiescence().unwrap();
    let mut in_flight = std::collections::BTreeMap::new();
    for line in eng.trace().lines() {
        match &line.event {
            TraceEvent::Send { payload, .. } => {
                in_flight.insert(*payload, line.at);
            }
            TraceEvent::Deliver { payload, .. } => {
                let sent = in_flight
                    .get(payload)
                    .unwrap_or_else(|| panic!("delivery without a matching send"));
                assert!(line.at >= *sent, "delivered before it was sent");
            }
            _ => {}
        }
    }
}

#[test]
fn relabeling_the_nodes_relabels_the_trace_and_nothing_else() {
    // Same wiring, same seed, the two labels swapped: the runs must be
    // identical up to renaming, because the engine iterates by position and
    // the toy protocol never looks at names.
    let mut fwd = ping_pong(17, "alpha", "beta");
    let mut swapped = ping_pong(17, "beta", "alpha");
    fwd.run_to_quiescence().unwrap();
    swapped.run_to_quiescence().unwrap();

    let rename = |id: &NodeId| -> NodeId {
        match id.as_str() {
            "alpha" => NodeId::new("beta"),
            "beta" => NodeId::new("alpha"),
            other => NodeId::new(other),
        }
    };
    let relabeled: Vec<TraceLine> = fwd
        .trace()
        .lines()
        .iter()
        .cloned()
        .map(|mut line| {
            line.event = match line.event {
                TraceEvent::Send { from, to, payload } => {
                    TraceEvent::Send { from: rename(&from), to: rename(&to), payload }
                }
                TraceEvent::Deliver { from, to, payload } => {
                    TraceEvent::Deliver { from: rename(&from), to: rename(&to), payload }
                }
                TraceEvent::DropCrashed { from, to, payload } => {
                    TraceEvent::DropCrashed { from: rename(&from), to: rename(&to), payload }
                }
                TraceEvent::Crash { node } => TraceEvent::Crash { node: rename(&node) },
                TraceEvent::Restart { node } => TraceEvent::Restart { node: rename(&node) },
                TraceEvent::Byzantine { node, behavior } => {
                    TraceEvent::Byzantine { node: rename(&node), behavior }
                }
            };
            line
        })
        .collect();

    assert_eq!(relabeled, swapped.trace().lines());
}

#[test]
fn run_until_stops_the_clock_exactly_at_the_bound() {
    let mut eng = ping_pong(6, "a", "b");
    eng.run_until(SimTime::from_secs(1)).unwrap();
    assert_eq!(eng.now(), SimTime::from_secs(1));
    let before = eng.trace().len();
    eng.run_until(SimTime::from_secs(1)).unwrap();
    assert_eq!(eng.trace().len(), before, "an empty interval adds nothing");
    eng.run_to_quiescence().unwrap();
    assert!(eng.trace().len() > before);
}
