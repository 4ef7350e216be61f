//! Randomized whole-contract scenarios: many seeded worlds, random operation
//! sequences, safety invariants checked after every commit and every access
//! decision checked against the brute-force oracle. The driver itself lives
//! in the testkit so the acceptance suite can run it at larger scale.

use bdsas_testkit::scenario::{run_seed, ScenarioStats};

#[test]
fn random_scenarios_uphold_every_invariant() {
    let mut total = ScenarioStats::default();
    for seed in 0..300 {
        total.absorb(&run_seed(seed, 40));
    }

    // The generator must actually reach every interesting corner; a quiet
    // distribution drift would otherwise hollow this suite out.
    assert!(total.granted > 500, "grants: {total:?}");
    assert!(total.denied_unregistered > 50, "{total:?}");
    assert!(total.denied_already_granted > 100, "{total:?}");
    assert!(total.denied_fee > 100, "{total:?}");
    assert!(total.denied_no_spectrum > 100, "{total:?}");
    assert!(total.preemptions > 20, "{total:?}");
    assert!(total.heartbeats_ok > 300, "{total:?}");
    assert!(total.heartbeats_while_suspended > 20, "{total:?}");
    assert!(total.heartbeats_denied > 100, "{total:?}");
    assert!(total.relinquished > 100, "{total:?}");
    assert!(total.relinquish_denied > 100, "{total:?}");
    assert!(total.swept_expired > 50, "{total:?}");
    assert!(total.swept_suspended > 50, "{total:?}");
    assert!(total.swept_demoted > 50, "{total:?}");
    assert!(total.channel_closes > 200, "{total:?}");
    assert!(total.channel_opens > 100, "{total:?}");
}
