//! The coordination chain shared by regulators and spectrum servers.
//!
//! Three layers, each usable on its own:
//!
//! - [`gossip`]: advertise-then-fetch transaction flooding. A node that
//!   hears a digest it does not hold fetches the body from whoever
//!   advertised it, so each transaction crosses every link at most once
//!   in full.
//! - [`consensus`] and [`vote`]: rotating-proposer agreement among the
//!   curators. A block needs precommit signatures from more than two
//!   thirds of them, collected in the same round, before it commits; a
//!   silent proposer costs one round timeout, after which the next
//!   curator takes over.
//! - [`state`]: the replicated state machine. Regulatory records need a
//!   regulator's signature; zone sync records count attestations from the
//!   zone's current serving set; beacon entries and committee outcomes
//!   re-verify from chain data alone; cleared fees credit the token
//!   ledger, whose total always equals the sum of cleared escrows.
//!
//! [`node::GchainNode`] composes all three behind the simulated-network
//! node interface.

pub mod consensus;
pub mod gossip;
pub mod node;
pub mod state;
pub mod vote;

pub use consensus::{Act, HeightInstance, InstCtx, T_POLKA, T_PROPOSE, T_ROUND};
pub use gossip::{GossipMsg, GossipState, FETCH_RETRY};
pub use node::{
    submit_msg, GMsg, GchainConfig, GchainNode, MAX_BLOCK_TXS, OUTCOME_WINDOW, STATUS_BURST,
    STATUS_INTERVAL,
};
pub use state::{ChainState, GEvent, RoundCtx, TokenLedger};
pub use vote::{
    accepts_proposal, make_vote, proposal_bytes, proposer, quorum, skip_threshold, verify_qc,
    vote_bytes, ConsMsg, Phase, SignedVote,
};
