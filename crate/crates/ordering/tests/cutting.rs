//! Block cutting: the batcher releases a block when the byte budget fills
//! or when the cut interval passes with anything pending, whichever first.

mod common;

use bdsas_core::codec::Encode;
use bdsas_core::{SimDuration, SimTime};
use bdsas_ordering::{BlockCutter, BLOCK_INTERVAL, MAX_BLOCK_BYTES};
use common::TestTx;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn at(ms: u64) -> SimTime {
    SimTime::ZERO + SimDuration::from_millis(ms)
}

#[test]
fn a_lone_transaction_ships_when_the_interval_expires() {
    let mut c = BlockCutter::new(MAX_BLOCK_BYTES, BLOCK_INTERVAL, at(0));
    let tx = TestTx::new(1, 1);
    assert!(c.push(tx.clone(), at(100)).is_empty());
    assert_eq!(c.next_deadline(), Some(at(1000)));

    assert!(c.poll(at(999)).is_none(), "interval has not elapsed yet");
    let batch = c.poll(at(1000)).expect("interval elapsed");
    assert_eq!(batch, vec![tx]);
    assert_eq!(c.pending_len(), 0);
    assert_eq!(c.next_deadline(), None, "empty batcher has no deadline");
}

#[test]
fn the_timer_rearms_from_the_last_cut() {
    let mut c = BlockCutter::new(MAX_BLOCK_BYTES, BLOCK_INTERVAL, at(0));
    assert!(c.push(TestTx::new(1, 1), at(10)).is_empty());
    assert!(c.poll(at(1000)).is_some());

    // Timer anchors on the cut, not on the next arrival.
    assert!(c.push(TestTx::new(1, 2), at(1900)).is_empty());
    assert_eq!(c.next_deadline(), Some(at(2000)));
    assert!(c.poll(at(2000)).is_some());
}

#[test]
fn filling_the_byte_budget_cuts_without_waiting() {
    let mut c = BlockCutter::new(MAX_BLOCK_BYTES, BLOCK_INTERVAL, at(0));
    let big = TestTx::sized(7, 0, 400_000);
    let sz = big.encoded_len();
    assert!(sz > 400_000 && sz < 500_000);

    assert!(c.push(TestTx::sized(7, 1, 400_000), at(1)).is_empty());
    assert!(c.push(TestTx::sized(7, 2, 400_000), at(2)).is_empty());
    // A third 400KB transaction would overflow 1MB: the pending pair ships
    // first and the newcomer starts the next block.
    let cuts = c.push(TestTx::sized(7, 3, 400_000), at(3));
    assert_eq!(cuts.len(), 1);
    assert_eq!(cuts[0].len(), 2);
    assert_eq!((cuts[0][0].n, cuts[0][1].n), (1, 2));
    assert_eq!(c.pending_len(), 1);
}

#[test]
fn an_oversized_transaction_travels_alone() {
    let mut c = BlockCutter::new(MAX_BLOCK_BYTES, BLOCK_INTERVAL, at(0));
    assert!(c.push(TestTx::new(3, 1), at(1)).is_empty());
    let cuts = c.push(TestTx::sized(3, 2, 2 * MAX_BLOCK_BYTES), at(2));
    // The small pending block ships, then the oversized one by itself.
    assert_eq!(cuts.len(), 2);
    assert_eq!(cuts[0].len(), 1);
    assert_eq!(cuts[0][0].n, 1);
    assert_eq!(cuts[1].len(), 1);
    assert_eq!(cuts[1][0].n, 2);
    assert_eq!(c.pending_len(), 0);
}

#[test]
fn reset_hands_back_whatever_was_pending() {
    let mut c = BlockCutter::new(MAX_BLOCK_BYTES, BLOCK_INTERVAL, at(0));
    c.push(TestTx::new(5, 1), at(1));
    c.push(TestTx::new(5, 2), at(2));
    let salvage = c.reset(at(3));
    assert_eq!(salvage.len(), 2);
    assert_eq!(c.pending_len(), 0);
    assert!(c.poll(at(5000)).is_none());
}

#[test]
fn random_arrivals_batch_every_transaction_exactly_once_in_order() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = BlockCutter::new(50_000, BLOCK_INTERVAL, at(0));
        let mut shipped: Vec<TestTx> = Vec::new();
        let mut pushed = Vec::new();
        let mut t = 0u64;
        for n in 0..400u32 {
            t += rng.random_range(0..40);
            let tx = TestTx::sized(9, n, rng.random_range(0..4000));
            pushed.push(tx.clone());
            for cut in c.push(tx, at(t)) {
                let bytes: usize = cut.iter().map(Encode::encoded_len).sum();
                assert!(bytes <= 50_000 || cut.len() == 1);
                shipped.extend(cut);
            }
            if let Some(cut) = c.poll(at(t)) {
                shipped.extend(cut);
            }
        }
        if let Some(cut) = c.poll(at(t + 1000)) {
            shipped.extend(cut);
        }
        assert_eq!(shipped, pushed, "seed {seed}: batching must preserve arrival order");
    }
}
