//! Transaction envelope: proposer, nonce, payload, signature.
//!
//! The digest covers everything except the signature, so a transaction keeps
//! its identity across re-submissions of the same signed bytes. Nonces are
//! per-proposer and must be strictly increasing among committed valid
//! transactions; validators enforce that, which gives exactly-once effects
//! even when a retry races its original.

use thiserror::Error;

use crate::codec::Encode;
use crate::crypto::{sha256, Digest, SecretKey, Signature};
use crate::id::{NodeId, NodeIdentity};
use crate::impl_codec_struct;
use crate::payload::TxPayload;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum TxKind {
    Regulatory,
    Sync,
    Channel,
    Device,
    Access,
}

impl std::fmt::Display for TxKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TxKind::Regulatory => "R-Tx",
            TxKind::Sync => "S-Tx",
            TxKind::Channel => "C-Tx",
            TxKind::Device => "D-Tx",
            TxKind::Access => "A-Tx",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SignError {
    #[error("signing key does not match identity {0}")]
    KeyMismatch(NodeId),
    #[error("identity {actual} is not the proposer {expected}")]
    WrongProposer { expected: NodeId, actual: NodeId },
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct UnsignedTransaction {
    pub proposer: NodeId,
    pub nonce: u64,
    pub payload: TxPayload,
}

const TX_DOMAIN: &[u8] = b"bdsas-tx";

impl UnsignedTransaction {
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut out = Vec::from(TX_DOMAIN);
        self.proposer.encode_into(&mut out);
        self.nonce.encode_into(&mut out);
        self.payload.encode_into(&mut out);
        out
    }

    pub fn digest(&self) -> Digest {
        sha256(&self.signing_bytes())
    }

    /// Signs the transaction. Refuses a key that does not belong to the
    /// claimed proposer, so a composition bug cannot forge traffic.
    pub fn sign(self, key: &SecretKey, identity: &NodeIdentity) -> Result<Transaction, SignError> {
        if identity.id != self.proposer {
            return Err(SignError::WrongProposer {
                expected: self.proposer.clone(),
                actual: identity.id.clone(),
            });
        }
        if key.public() != identity.public_key {
            return Err(SignError::KeyMismatch(identity.id.clone()));
        }
        let signature = key.sign(&self.signing_bytes());
        Ok(Transaction {
            proposer: self.proposer,
            nonce: self.nonce,
            payload: self.payload,
            signature,
        })
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Transaction {
    pub proposer: NodeId,
    pub nonce: u64,
    pub payload: TxPayload,
    pub signature: Signature,
}

impl_codec_struct!(Transaction { proposer, nonce, payload, signature });

impl Transaction {
    pub fn kind(&self) -> TxKind {
        match &self.payload {
            TxPayload::Regulatory(_) => TxKind::Regulatory,
            TxPayload::Sync(_) => TxKind::Sync,
            TxPayload::Channel(_) => TxKind::Channel,
            TxPayload::Device(_) => TxKind::Device,
            TxPayload::Access(_) => TxKind::Access,
        }
    }

    pub fn unsigned(&self) -> UnsignedTransaction {
        UnsignedTransaction {
            proposer: self.proposer.clone(),
            nonce: self.nonce,
            payload: self.payload.clone(),
        }
    }

    /// Identity of the transaction: hash of the signed bytes, signature
    /// excluded.
    pub fn digest(&self) -> Digest {
        self.unsigned().digest()
    }

    /// Checks the envelope signature against the proposer's registered key.
    pub fn verify_signature(&self, proposer_key: &crate::crypto::PublicKey) -> bool {
        crate::crypto::verify_cached(proposer_key, &self.unsigned().signing_bytes(), &self.signature)
    }
}
