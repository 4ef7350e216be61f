//! Shared foundation of the BD-SAS stack: identifiers, canonical encoding,
//! hashing and signatures, transaction and block formats, and the
//! append-only ledger container used by both the global chain and the
//! per-zone chains.
//!
//! Everything here is deterministic and side-effect free. Protocol logic
//! lives in the crates above; this one only defines what the bytes mean.

pub mod block;
pub mod codec;
pub mod crypto;
pub mod id;
pub mod payload;
pub mod time;
pub mod tokens;
pub mod tx;

pub use block::{Block, ChainError, Ledger};
pub use codec::{CodecError, Decode, Encode, Reader};
pub use crypto::{derive_key, sha256, sha256_parts, verify_cached, Digest, PublicKey, SecretKey, Signature};
pub use id::{DeviceId, IdentityRegistry, NodeId, NodeIdentity, Role, ZoneId};
pub use payload::{
    AccessRequest, Attestation, AvailabilityReason, CTxPayload, Category, ChannelUpdate,
    ClientRecord, ContractParams, DTxPayload, FeeClaim, FrequencyRange, RTxPayload, RegulatoryRule,
    RequestType, RuleScope, STxPayload, SyncBody, TxPayload,
};
pub use time::{SimDuration, SimTime};
pub use tokens::{split_fee, TokenAmount};
pub use tx::{SignError, Transaction, TxKind, UnsignedTransaction};
