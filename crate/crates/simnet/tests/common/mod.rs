//! Toy protocol nodes for exercising the engine. Their logic is label-free:
//! behavior depends only on wiring, never on how a node happens to be named.
#![allow(dead_code)]

use bdsas_core::codec::Encode;
use bdsas_core::{NodeId, SimDuration, SimTime};
use bdsas_simnet::{ByzantineBehavior, Node, Outbox};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ToyMsg {
    Ping(u64),
    Pong(u64),
}

impl Encode for ToyMsg {
    fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            ToyMsg::Ping(n) => {
                0u8.encode_into(out);
                n.encode_into(out);
            }
            ToyMsg::Pong(n) => {
                1u8.encode_into(out);
                n.encode_into(out);
            }
        }
    }
}

/// Sends `count` pings to `peer`, one per `period`, counting echoes.
pub struct Pinger {
    pub peer: NodeId,
    pub period: SimDuration,
    pub count: u64,
    pub sent: u64,
    pub echoes: u64,
    next: Option<SimTime>,
}

impl Pinger {
    pub fn new(peer: NodeId, period: SimDuration, count: u64) -> Self {
        Pinger { peer, period, count, sent: 0, echoes: 0, next: Some(SimTime::ZERO) }
    }
}

impl Node for Pinger {
    type Msg = ToyMsg;

    fn on_message(&mut self, _from: &NodeId, msg: ToyMsg, _now: SimTime, _out: &mut Outbox<ToyMsg>) {
        if matches!(msg, ToyMsg::Pong(_)) {
            self.echoes += 1;
        }
    }

    fn on_wake(&mut self, now: SimTime, out: &mut Outbox<ToyMsg>) {
        out.send(&self.peer, ToyMsg::Ping(self.sent));
        self.sent += 1;
        self.next = if self.sent < self.count { Some(now + self.period) } else { None };
    }

    fn next_wake(&self) -> Option<SimTime> {
        self.next
    }

    fn on_restart(&mut self, now: SimTime, _out: &mut Outbox<ToyMsg>) {
        if self.sent < self.count {
            self.next = Some(now + self.period);
        }
    }
}

/// Echoes every ping back to its sender. Flagged Byzantine, it garbles the
/// sequence number instead.
pub struct Echo {
    pub pings: u64,
    pub corrupt: bool,
}

impl Echo {
    pub fn new() -> Self {
        Echo { pings: 0, corrupt: false }
    }
}

impl Node for Echo {
    type Msg = ToyMsg;

    fn on_message(&mut self, from: &NodeId, msg: ToyMsg, _now: SimTime, out: &mut Outbox<ToyMsg>) {
        if let ToyMsg::Ping(n) = msg {
            self.pings += 1;
            let reply = if self.corrupt { n ^ 0xdead } else { n };
            out.send(from, ToyMsg::Pong(reply));
        }
    }

    fn on_wake(&mut self, _now: SimTime, _out: &mut Outbox<ToyMsg>) {}

    fn next_wake(&self) -> Option<SimTime> {
        None
    }

    fn on_restart(&mut self, _now: SimTime, _out: &mut Outbox<ToyMsg>) {}

    fn on_byzantine(&mut self, behavior: ByzantineBehavior) {
        if behavior == ByzantineBehavior::CorruptEndorsement {
            self.corrupt = true;
        }
    }
}

/// Either half of a ping/echo pair, so one engine can hold both roles.
pub enum Toy {
    P(Pinger),
    E(Echo),
}

impl Node for Toy {
    type Msg = ToyMsg;

    fn on_message(&mut self, from: &NodeId, msg: ToyMsg, now: SimTime, out: &mut Outbox<ToyMsg>) {
        match self {
            Toy::P(p) => p.on_message(from, msg, now, out),
            Toy::E(e) => e.on_message(from, msg, now, out),
        }
    }

    fn on_wake(&mut self, now: SimTime, out: &mut Outbox<ToyMsg>) {
        match self {
            Toy::P(p) => p.on_wake(now, out),
            Toy::E(e) => e.on_wake(now, out),
        }
    }

    fn next_wake(&self) -> Option<SimTime> {
        match self {
            Toy::P(p) => p.next_wake(),
            Toy::E(e) => e.next_wake(),
        }
    }

    fn on_restart(&mut self, now: SimTime, out: &mut Outbox<ToyMsg>) {
        match self {
            Toy::P(p) => p.on_restart(now, out),
            Toy::E(e) => e.on_restart(now, out),
        }
    }

    fn on_byzantine(&mut self, behavior: ByzantineBehavior) {
        match self {
            Toy::P(p) => p.on_byzantine(behavior),
            Toy::E(e) => e.on_byzantine(behavior),
        }
    }
}
