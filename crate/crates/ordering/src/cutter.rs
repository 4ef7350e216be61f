//! Batches ordered transactions into blocks.
//!
//! Two triggers, checked at submissions and timer ticks: the pending batch
//! reaching the byte budget cuts immediately, and an interval elapsing since
//! the last cut flushes whatever is pending. A transaction that would push
//! the batch over budget closes the current batch first, so blocks stay
//! within the budget unless a single oversized transaction must travel
//! alone.

use bdsas_core::codec::Encode;
use bdsas_core::{SimDuration, SimTime};

#[derive(Clone, Debug)]
pub struct BlockCutter<T> {
    pending: Vec<T>,
    pending_bytes: usize,
    max_bytes: usize,
    interval: SimDuration,
    last_cut: SimTime,
}

impl<T: Encode> BlockCutter<T> {
    pub fn new(max_bytes: usize, interval: SimDuration, now: SimTime) -> Self {
        BlockCutter { pending: Vec::new(), pending_bytes: 0, max_bytes, interval, last_cut: now }
    }

    /// Adds one transaction; returns any batches the byte budget forced out,
    /// oldest first.
    pub fn push(&mut self, tx: T, now: SimTime) -> Vec<Vec<T>> {
        let len = tx.encoded_len();
        let mut out = Vec::new();
        if !self.pending.is_empty() && self.pending_bytes + len > self.max_bytes {
            out.push(self.take(now));
        }
        self.pending.push(tx);
        self.pending_bytes += len;
        if self.pending_bytes >= self.max_bytes {
            out.push(self.take(now));
        }
        out
    }

    /// Timer trigger: flushes the pending batch once the interval has passed
    /// since the last cut.
    pub fn poll(&mut self, now: SimTime) -> Option<Vec<T>> {
        if !self.pending.is_empty() && now >= self.last_cut + self.interval {
            Some(self.take(now))
        } else {
            None
        }
    }

    /// When the next `poll` could produce a batch, if ever.
    pub fn next_deadline(&self) -> Option<SimTime> {
        if self.pending.is_empty() {
            None
        } else {
            Some(self.last_cut + self.interval)
        }
    }

    /// Abandons batching (leadership lost): hands back whatever is pending
    /// and re-anchors the interval.
    pub fn reset(&mut self, now: SimTime) -> Vec<T> {
        self.last_cut = now;
        self.pending_bytes = 0;
        std::mem::take(&mut self.pending)
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn pending_bytes(&self) -> usize {
        self.pending_bytes
    }

    fn take(&mut self, now: SimTime) -> Vec<T> {
        self.last_cut = now;
        self.pending_bytes = 0;
        std::mem::take(&mut self.pending)
    }
}
