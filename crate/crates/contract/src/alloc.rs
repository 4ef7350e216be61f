//! Channel assignment.
//!
//! The rule: take the lowest-indexed contiguous run of available channels
//! inside the requested range that covers the configured per-grant channel
//! count and overlaps no neighbor's active grant. Priority-tier requesters may
//! additionally claim runs whose only blockers are general-tier neighbors
//! sitting on priority-reserved channels; those neighbors get preempted.
//!
//! Candidate channels arrive as an ascending index list; occupancy and
//! neighbor lookups go through [`AllocEnv`] so the caller's read set grows by
//! exactly the keys the search inspected.

use std::collections::BTreeSet;

use bdsas_core::DeviceId;

/// Lookups the search needs, resolved lazily by the caller.
pub trait AllocEnv {
    /// Devices holding channel `ch` under an active grant.
    fn occupants(&mut self, ch: u16) -> BTreeSet<DeviceId>;
    /// Whether this neighbor's grant may be displaced by a priority-tier
    /// requester (i.e. the neighbor holds only general-tier standing).
    fn preemptible(&mut self, dev: &DeviceId) -> bool;
}

/// Inputs resolved by the executor before the search runs.
pub struct AllocRequest<'a> {
    pub device: &'a DeviceId,
    /// Whether the requester gets the priority tier here: priority category
    /// and listed in the priority registry.
    pub priority: bool,
    pub neighbors: &'a BTreeSet<DeviceId>,
    /// Channels needed per grant.
    pub count: usize,
    /// Available channels inside the desired frequency range, ascending.
    pub candidates: &'a [u16],
    /// Channels where priority-tier preemption is allowed.
    pub reserved: &'a BTreeSet<u16>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocOutcome {
    pub channels: BTreeSet<u16>,
    /// Neighbors whose grants must be suspended to make room.
    pub preempted: BTreeSet<DeviceId>,
}

/// Finds the assignment, or `None` when no feasible run exists. Windows are
/// tried in ascending start order, so the result is the lexicographically
/// smallest feasible channel set; preemption counts as feasible, so a low run
/// that displaces a general-tier neighbor wins over a free run further up.
pub fn allocate(req: &AllocRequest<'_>, env: &mut impl AllocEnv) -> Option<AllocOutcome> {
    if req.count == 0 || req.candidates.len() < req.count {
        return None;
    }
    for start in 0..=(req.candidates.len() - req.count) {
        let window = &req.candidates[start..start + req.count];
        if !window.windows(2).all(|w| w[1] == w[0] + 1) {
            continue;
        }
        let mut preempted: BTreeSet<DeviceId> = BTreeSet::new();
        let mut feasible = true;
        'win: for &ch in window {
            for dev in env.occupants(ch) {
                if dev == *req.device || !req.neighbors.contains(&dev) {
                    continue;
                }
                if req.priority && req.reserved.contains(&ch) && env.preemptible(&dev) {
                    preempted.insert(dev);
                } else {
                    feasible = false;
                    break 'win;
                }
            }
        }
        if feasible {
            return Some(AllocOutcome { channels: window.iter().copied().collect(), preempted });
        }
    }
    None
}
