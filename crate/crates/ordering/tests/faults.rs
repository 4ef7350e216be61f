//! Crash tolerance: a minority of witnesses can die (and come back) without
//! forking the chain or losing buffered submissions; a majority loss halts
//! progress instead of compromising it.

mod common;

use std::collections::BTreeSet;

use bdsas_core::{Digest, NodeId, SimDuration};
use bdsas_ordering::ELECTION_TIMEOUT_MAX;
use common::{Cluster, TestTx};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn settled_leader(c: &mut Cluster) -> NodeId {
    c.run_for(SimDuration::from_secs(2));
    c.live_leader().expect("cluster elects a leader within two seconds")
}

#[test]
fn a_new_leader_takes_over_within_two_election_timeouts() {
    for seed in 0..10u64 {
        let mut c = Cluster::new(5, seed);
        let old = settled_leader(&mut c);
        let crash_at = c.now;
        c.crash(&old);

        c.run_for(ELECTION_TIMEOUT_MAX.mul(2));
        let new = c.live_leader().unwrap_or_else(|| {
            panic!("seed {seed}: no replacement leader within two election timeouts")
        });
        assert_ne!(new, old);
        let (t, _, _) = *c
            .elections
            .iter()
            .find(|(t, id, _)| *t >= crash_at && *id == new)
            .expect("fresh election after the crash");
        assert!(t <= crash_at + ELECTION_TIMEOUT_MAX.mul(2));

        // Ordering resumes: new submissions still commit everywhere live.
        let mut expected = BTreeSet::new();
        for n in 0..20u32 {
            expected.insert(TestTx::key(1, n));
            c.submit_to_live(TestTx::new(1, n));
        }
        c.drain(&expected, SimDuration::from_secs(10));
        c.assert_prefix_consistent();
    }
}

#[test]
fn losing_a_majority_freezes_the_chain_and_recovery_thaws_it() {
    let mut c = Cluster::new(5, 77);
    let leader = settled_leader(&mut c);

    // Commit a little traffic first.
    let mut expected = BTreeSet::new();
    for n in 0..10u32 {
        expected.insert(TestTx::key(2, n));
        c.submit_to_live(TestTx::new(2, n));
    }
    c.drain(&expected, SimDuration::from_secs(10));

    // Three of five down, the leader among them: no quorum remains.
    let mut downed = vec![leader.clone()];
    for id in c.ids.clone() {
        if downed.len() < 3 && id != leader {
            downed.push(id);
        }
    }
    for id in &downed {
        c.crash(id);
    }

    let frozen_at: Vec<usize> = c.ids.iter().map(|id| c.delivered[id].len()).collect();
    for n in 10..40u32 {
        c.submit_to_live(TestTx::new(2, n));
    }
    c.run_for(SimDuration::from_secs(10));
    let after: Vec<usize> = c.ids.iter().map(|id| c.delivered[id].len()).collect();
    assert_eq!(frozen_at, after, "no block may commit without a majority");

    // One witness back makes three: the backlog clears.
    c.restart(&downed[2]);
    for n in 10..40u32 {
        expected.insert(TestTx::key(2, n));
    }
    c.drain(&expected, SimDuration::from_secs(20));
    c.assert_prefix_consistent();
    c.assert_no_duplicates();
}

#[test]
fn a_restarted_witness_catches_up_to_the_identical_chain() {
    let mut c = Cluster::new(5, 5);
    let leader = settled_leader(&mut c);
    let absentee = c.ids.iter().find(|id| **id != leader).unwrap().clone();
    c.crash(&absentee);
    let seen_before_crash = c.delivered[&absentee].len();

    let mut expected = BTreeSet::new();
    for n in 0..60u32 {
        expected.insert(TestTx::key(4, n));
        c.submit_to_live(TestTx::new(4, n));
        c.run_for(SimDuration::from_millis(40));
    }
    c.drain(&expected, SimDuration::from_secs(10));
    assert_eq!(c.delivered[&absentee].len(), seen_before_crash);

    c.restart(&absentee);
    c.run_for(SimDuration::from_secs(5));
    let have: BTreeSet<_> = c.delivered_keys(&absentee).into_iter().collect();
    assert!(
        expected.is_subset(&have),
        "restarted witness must replay what it missed"
    );
    c.assert_prefix_consistent();
    c.assert_no_duplicates();
}

#[test]
fn a_crashed_leader_cannot_split_the_log_it_left_behind() {
    // The dying leader had appended entries nobody committed; the survivors
    // must converge on one history whether or not those entries survive.
    for seed in 0..10u64 {
        let mut c = Cluster::new(5, seed.wrapping_add(1000));
        let leader = settled_leader(&mut c);

        for n in 0..30u32 {
            // Hand these only to the leader, bulky enough to force cuts, so
            // its log runs ahead of everyone else's when it dies
            // mid-replication.
            c.submit_to(&leader, TestTx::sized(6, n, 60_000));
        }
        c.run_for(SimDuration::from_millis(5));
        c.crash(&leader);

        c.run_for(SimDuration::from_secs(5));
        c.assert_prefix_consistent();
        c.assert_no_duplicates();

        c.restart(&leader);
        c.run_for(SimDuration::from_secs(5));
        c.assert_prefix_consistent();
        c.assert_no_duplicates();
    }
}

#[test]
fn randomized_crashes_drops_and_delays_never_fork_the_chain() {
    for seed in 0..15u64 {
        let mut c = Cluster::new(5, seed.wrapping_mul(31).wrapping_add(9));
        c.drop_p = 0.05;
        c.jitter = SimDuration::from_millis(8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfau64);

        // At most two witnesses are ever taken down, and only those two are
        // ever candidates, so a quorum of never-crashed witnesses holds
        // every pending submission for the duration.
        let victims: Vec<NodeId> = vec![c.ids[0].clone(), c.ids[2].clone()];
        let mut expected = BTreeSet::new();
        let mut n = 0u32;

        for _round in 0..120 {
            match rng.random_range(0..10) {
                0 => {
                    let v = &victims[rng.random_range(0..victims.len())];
                    if c.up[v] {
                        c.crash(v);
                    }
                }
                1 => {
                    let v = &victims[rng.random_range(0..victims.len())];
                    if !c.up[v] {
                        c.restart(v);
                    }
                }
                _ => {
                    for _ in 0..rng.random_range(1..4) {
                        expected.insert(TestTx::key(8, n));
                        c.submit_to_live(TestTx::new(8, n));
                        n += 1;
                    }
                }
            }
            c.run_for(SimDuration::from_millis(rng.random_range(20..200)));
        }

        // Heal and let the backlog settle. Drops stay on: retransmission
        // must cope with a lossy network, not just a lossy phase.
        for v in &victims {
            if !c.up[v] {
                c.restart(v);
            }
        }
        c.drain(&expected, SimDuration::from_secs(60));
        c.assert_prefix_consistent();
        c.assert_no_duplicates();

        for id in &c.ids {
            let have: BTreeSet<_> = c.delivered_keys(id).into_iter().collect();
            assert_eq!(
                have, expected,
                "seed {seed}: {id} must deliver exactly the submitted set"
            );
        }
    }
}

#[test]
fn heavier_clusters_tolerate_their_full_minority() {
    // floor((n-1)/2) crashed witnesses leave a working quorum; one more
    // halts the chain.
    for &n_wit in &[5usize, 9] {
        let f = (n_wit - 1) / 2;
        let mut c = Cluster::new(n_wit, 4242);
        let leader = settled_leader(&mut c);

        let mut downed: Vec<NodeId> = vec![leader.clone()];
        for id in c.ids.clone() {
            if downed.len() < f && id != leader {
                downed.push(id);
            }
        }
        for id in &downed {
            c.crash(id);
        }

        let mut expected = BTreeSet::new();
        for k in 0..15u32 {
            expected.insert(TestTx::key(12, k));
            c.submit_to_live(TestTx::new(12, k));
        }
        c.drain(&expected, SimDuration::from_secs(15));

        // The one extra crash tips it over.
        let last = c.ids.iter().find(|id| c.up[*id]).unwrap().clone();
        c.crash(&last);
        let frozen: Vec<usize> = c.ids.iter().map(|id| c.delivered[id].len()).collect();
        for k in 15..25u32 {
            c.submit_to_live(TestTx::new(12, k));
        }
        c.run_for(SimDuration::from_secs(8));
        let after: Vec<usize> = c.ids.iter().map(|id| c.delivered[id].len()).collect();
        assert_eq!(frozen, after, "{n_wit} witnesses minus a majority must stall");
    }
}

#[test]
fn block_hashes_chain_back_to_genesis_on_every_witness() {
    let mut c = Cluster::new(5, 99);
    c.run_for(SimDuration::from_secs(1));
    let mut expected = BTreeSet::new();
    for n in 0..40u32 {
        expected.insert(TestTx::key(3, n));
        c.submit_to_live(TestTx::new(3, n));
        c.run_for(SimDuration::from_millis(60));
    }
    c.drain(&expected, SimDuration::from_secs(10));

    let genesis = bdsas_core::Block::<TestTx>::genesis(bdsas_core::SimTime::ZERO).hash();
    for id in &c.ids {
        let mut prev: Digest = genesis;
        for b in &c.delivered[id] {
            assert_eq!(b.prev_hash, prev, "{id}: block {} broke the chain", b.height);
            prev = b.hash();
        }
    }
}
