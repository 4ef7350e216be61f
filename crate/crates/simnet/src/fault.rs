//! Node lifecycle faults, declared up front and validated before a run.

use bdsas_core::{NodeId, SimTime};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ByzantineBehavior {
    /// Endorsing peers return results that differ from honest execution.
    CorruptEndorsement,
    /// A proposer sends different proposals to different voters.
    EquivocateProposal,
    /// A server signs summaries for blocks its zone never produced.
    FabricateSTx,
}

impl ByzantineBehavior {
    pub fn name(&self) -> &'static str {
        match self {
            ByzantineBehavior::CorruptEndorsement => "corrupt-endorsement",
            ByzantineBehavior::EquivocateProposal => "equivocate-proposal",
            ByzantineBehavior::FabricateSTx => "fabricate-s-tx",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    CrashAt(SimTime),
    RestartAt(SimTime),
    ByzantineFrom(SimTime, ByzantineBehavior),
}

impl Fault {
    pub fn at(&self) -> SimTime {
        match self {
            Fault::CrashAt(t) | Fault::RestartAt(t) | Fault::ByzantineFrom(t, _) => *t,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FaultError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("{node}: two faults scheduled at the same instant {at}")]
    SameInstant { node: NodeId, at: SimTime },
    #[error("{node}: restart at {at} without a preceding crash")]
    RestartWhileUp { node: NodeId, at: SimTime },
    #[error("{node}: crash at {at} while already crashed")]
    CrashWhileDown { node: NodeId, at: SimTime },
    #[error("{node}: byzantine flag at {at} while crashed")]
    ByzantineWhileDown { node: NodeId, at: SimTime },
}

/// Rejects contradictory fault sequences for one node: crash and restart
/// must alternate, and a behavior flag needs a running node.
pub fn validate_faults(node: &NodeId, faults: &[Fault]) -> Result<(), FaultError> {
    let mut sorted = faults.to_vec();
    sorted.sort_by_key(Fault::at);
    for w in sorted.windows(2) {
        if w[0].at() == w[1].at() {
            return Err(FaultError::SameInstant { node: node.clone(), at: w[0].at() });
        }
    }
    let mut up = true;
    for f in &sorted {
        match f {
            Fault::CrashAt(t) => {
                if !up {
                    return Err(FaultError::CrashWhileDown { node: node.clone(), at: *t });
                }
                up = false;
            }
            Fault::RestartAt(t) => {
                if up {
                    return Err(FaultError::RestartWhileUp { node: node.clone(), at: *t });
                }
                up = true;
            }
            Fault::ByzantineFrom(t, _) => {
                if !up {
                    return Err(FaultError::ByzantineWhileDown { node: node.clone(), at: *t });
                }
            }
        }
    }
    Ok(())
}
