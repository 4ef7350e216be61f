//! Device-side radio state machine.
//!
//! Drives one device's grant lifecycle from committed assignment results and
//! local timers. The invariant it protects: the radio transmits only inside
//! an authorization window confirmed by a committed heartbeat, and falls
//! silent the moment the window lapses, the grant suspends, or the grant
//! expires. Hosts poll [`ClientFsm::next_wake`] and call [`ClientFsm::on_timer`]
//! at that instant; committed results arrive through [`ClientFsm::observe`].

use std::collections::BTreeSet;

use bdsas_core::{DeviceId, Digest, RequestType, SimDuration, SimTime};

use crate::grant::{Assignment, Decision};

/// The grant this device currently holds, as the device understands it.
#[derive(Debug, Clone, PartialEq)]
pub struct HeldGrant {
    pub id: Digest,
    pub channels: BTreeSet<u16>,
    pub interval: SimDuration,
    pub expire_time: SimTime,
    /// Next heartbeat send time; cadence anchors on send instants, not on
    /// response arrivals, so commit latency never drifts the schedule.
    pub next_heartbeat: SimTime,
    /// Transmission window from the last acknowledged heartbeat.
    pub authorized_until: Option<SimTime>,
    /// Set once a heartbeat comes back with no channels: spectrum was
    /// reclaimed and the device is waiting out its own relinquish.
    pub suspended: bool,
}

/// What the host must do right now, in order.
#[derive(Debug, Clone, PartialEq)]
pub enum FsmAction {
    /// Key the radio on these channels.
    Transmit(BTreeSet<u16>),
    /// Silence the radio.
    StopTransmit,
    /// Propose an access request for this device.
    Send(RequestType, Option<Digest>),
}

#[derive(Debug, Clone)]
pub struct ClientFsm {
    device: DeviceId,
    grant: Option<HeldGrant>,
    transmitting: bool,
}

impl ClientFsm {
    pub fn new(device: DeviceId) -> Self {
        Self { device, grant: None, transmitting: false }
    }

    pub fn device(&self) -> &DeviceId {
        &self.device
    }

    pub fn holding(&self) -> Option<&HeldGrant> {
        self.grant.as_ref()
    }

    pub fn is_transmitting(&self) -> bool {
        self.transmitting
    }

    /// Earliest instant at which `on_timer` has something to do.
    pub fn next_wake(&self) -> Option<SimTime> {
        let g = self.grant.as_ref()?;
        let mut wake = g.expire_time;
        if !g.suspended && g.next_heartbeat < wake {
            wake = g.next_heartbeat;
        }
        if self.transmitting {
            if let Some(until) = g.authorized_until {
                if until < wake {
                    wake = until;
                }
            }
        }
        Some(wake)
    }

    /// Feeds one committed assignment result for this device.
    pub fn observe(&mut self, a: &Assignment, now: SimTime) -> Vec<FsmAction> {
        if a.device != self.device {
            return Vec::new();
        }
        let mut actions = Vec::new();
        match a.decision {
            Decision::Granted => {
                let (Some(id), Some(expire), Some(interval)) =
                    (a.grant_id, a.expire_time, a.heartbeat_interval)
                else {
                    return actions;
                };
                self.grant = Some(HeldGrant {
                    id,
                    channels: a.channels.clone(),
                    interval,
                    expire_time: expire,
                    next_heartbeat: now + interval,
                    authorized_until: None,
                    suspended: false,
                });
                // No transmission yet: that right arrives with the first
                // acknowledged heartbeat.
            }
            Decision::HeartbeatOk => {
                let Some(g) = self.grant.as_mut() else { return actions };
                if a.grant_id != Some(g.id) {
                    return actions;
                }
                if a.channels.is_empty() {
                    // Suspension signal: the grant lives but holds no
                    // spectrum. Go silent and give the grant back.
                    g.suspended = true;
                    g.authorized_until = None;
                    if self.transmitting {
                        self.transmitting = false;
                        actions.push(FsmAction::StopTransmit);
                    }
                    actions.push(FsmAction::Send(RequestType::Relinquish, Some(g.id)));
                } else {
                    g.channels = a.channels.clone();
                    g.authorized_until = a.authorized_until;
                    if !self.transmitting {
                        self.transmitting = true;
                        actions.push(FsmAction::Transmit(g.channels.clone()));
                    }
                }
            }
            Decision::HeartbeatDenied => {
                // The grant no longer exists server-side (expired, foreign,
                // or terminal): drop it and fall silent.
                if self.grant.is_some() {
                    self.grant = None;
                    if self.transmitting {
                        self.transmitting = false;
                        actions.push(FsmAction::StopTransmit);
                    }
                }
            }
            Decision::Relinquished => {
                if let Some(g) = &self.grant {
                    if a.grant_id == Some(g.id) {
                        self.grant = None;
                        if self.transmitting {
                            self.transmitting = false;
                            actions.push(FsmAction::StopTransmit);
                        }
                    }
                }
            }
            Decision::Denied => {
                // A denied grant request leaves nothing held; a denied
                // relinquish means the grant already died server-side.
                if a.request == RequestType::Relinquish {
                    self.grant = None;
                    if self.transmitting {
                        self.transmitting = false;
                        actions.push(FsmAction::StopTransmit);
                    }
                }
            }
        }
        actions
    }

    /// Advances local time. Call at (or after) `next_wake`.
    pub fn on_timer(&mut self, now: SimTime) -> Vec<FsmAction> {
        let mut actions = Vec::new();
        let Some(g) = self.grant.as_mut() else { return actions };

        if now >= g.expire_time {
            self.grant = None;
            if self.transmitting {
                self.transmitting = false;
                actions.push(FsmAction::StopTransmit);
            }
            return actions;
        }
        if self.transmitting && g.authorized_until.map_or(true, |until| now >= until) {
            // Authorization lapsed; keep the grant and keep heartbeating,
            // the next acknowledgment re-opens the window.
            self.transmitting = false;
            actions.push(FsmAction::StopTransmit);
        }
        if !g.suspended && now >= g.next_heartbeat {
            g.next_heartbeat = now + g.interval;
            actions.push(FsmAction::Send(RequestType::Heartbeat, Some(g.id)));
        }
        actions
    }
}
