//! Blocks and the append-only ledger both chains share.
//!
//! A block's hash covers height, parent hash, cut time and the ordered
//! transaction list. Validation flags are excluded: they are computed after
//! ordering by every committing replica and stored alongside, so the chain
//! of hashes is fixed at cut time while the flags remain a deterministic
//! function of the chain prefix.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::codec::Encode;
use crate::crypto::{sha256, Digest};
use crate::time::SimTime;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Block<T> {
    pub height: u64,
    pub prev_hash: Digest,
    pub cut_time: SimTime,
    pub txs: Vec<T>,
    /// One flag per transaction once committed; `true` means valid. Empty
    /// until a validating replica fills it in.
    pub validation_flags: Vec<bool>,
}

impl<T: Encode> Block<T> {
    pub fn new(height: u64, prev_hash: Digest, cut_time: SimTime, txs: Vec<T>) -> Self {
        Block { height, prev_hash, cut_time, txs, validation_flags: Vec::new() }
    }

    pub fn genesis(cut_time: SimTime) -> Self {
        Block::new(0, Digest::ZERO, cut_time, Vec::new())
    }

    pub fn hash(&self) -> Digest {
        let mut bytes = Vec::from(&b"bdsas-block"[..]);
        self.height.encode_into(&mut bytes);
        self.prev_hash.encode_into(&mut bytes);
        self.cut_time.encode_into(&mut bytes);
        self.txs.encode_into(&mut bytes);
        sha256(&bytes)
    }

    /// Serialized size of the transaction list, the quantity the cutter's
    /// max-bytes limit constrains.
    pub fn tx_bytes(&self) -> usize {
        self.txs.iter().map(|t| t.encoded_len()).sum()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChainError {
    #[error("genesis block must have height 0 and zero prev-hash")]
    BadGenesis,
    #[error("appending height {got}, expected {expected}")]
    HeightGap { expected: u64, got: u64 },
    #[error("prev-hash mismatch at height {height}")]
    PrevHashMismatch { height: u64 },
    #[error("validation flags missing or wrong length at height {height}")]
    BadFlags { height: u64 },
    #[error("ledger line malformed: {0}")]
    BadLine(String),
}

/// One replica's copy of a chain, with the state digest recorded after each
/// block was applied. Appends verify linkage; nothing is ever removed.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct Ledger<T> {
    pub chain: String,
    blocks: Vec<Block<T>>,
    state_digests: Vec<Digest>,
}

impl<T: Encode> Ledger<T> {
    pub fn new(chain: impl Into<String>, genesis: Block<T>, genesis_state: Digest) -> Result<Self, ChainError> {
        if genesis.height != 0 || genesis.prev_hash != Digest::ZERO {
            return Err(ChainError::BadGenesis);
        }
        Ok(Ledger {
            chain: chain.into(),
            blocks: vec![genesis],
            state_digests: vec![genesis_state],
        })
    }

    pub fn append(&mut self, block: Block<T>, state_digest: Digest) -> Result<(), ChainError> {
        let tip = self.blocks.last().expect("ledger never empty");
        if block.height != tip.height + 1 {
            return Err(ChainError::HeightGap { expected: tip.height + 1, got: block.height });
        }
        if block.prev_hash != tip.hash() {
            return Err(ChainError::PrevHashMismatch { height: block.height });
        }
        self.blocks.push(block);
        self.state_digests.push(state_digest);
        Ok(())
    }

    pub fn height(&self) -> u64 {
        self.blocks.last().expect("ledger never empty").height
    }

    pub fn tip(&self) -> &Block<T> {
        self.blocks.last().expect("ledger never empty")
    }

    pub fn tip_hash(&self) -> Digest {
        self.tip().hash()
    }

    pub fn block(&self, height: u64) -> Option<&Block<T>> {
        self.blocks.get(height as usize)
    }

    pub fn state_digest(&self, height: u64) -> Option<Digest> {
        self.state_digests.get(height as usize).copied()
    }

    pub fn blocks(&self) -> &[Block<T>] {
        &self.blocks
    }

    /// Re-checks every hash link and flag shape from genesis.
    pub fn verify_chain(&self) -> Result<(), ChainError> {
        let g = &self.blocks[0];
        if g.height != 0 || g.prev_hash != Digest::ZERO {
            return Err(ChainError::BadGenesis);
        }
        for w in self.blocks.windows(2) {
            if w[1].height != w[0].height + 1 {
                return Err(ChainError::HeightGap { expected: w[0].height + 1, got: w[1].height });
            }
            if w[1].prev_hash != w[0].hash() {
                return Err(ChainError::PrevHashMismatch { height: w[1].height });
            }
        }
        Ok(())
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
struct LedgerLine<T> {
    block: Block<T>,
    state_digest: Digest,
}

#[derive(serde::Serialize)]
struct LedgerLineRef<'a, T> {
    block: &'a Block<T>,
    state_digest: Digest,
}

impl<T: Encode + Clone + serde::Serialize + serde::de::DeserializeOwned> Ledger<T> {
    /// One JSON object per line: the block and the post-commit state digest.
    pub fn write_jsonl(&self, w: &mut impl Write) -> std::io::Result<()> {
        for (block, digest) in self.blocks.iter().zip(&self.state_digests) {
            let line = serde_json::to_string(&LedgerLineRef { block, state_digest: *digest })?;
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_jsonl(chain: impl Into<String>, r: impl BufRead) -> Result<Self, ChainError> {
        let mut blocks = Vec::new();
        let mut digests = Vec::new();
        for line in r.lines() {
            let line = line.map_err(|e| ChainError::BadLine(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: LedgerLine<T> =
                serde_json::from_str(&line).map_err(|e| ChainError::BadLine(e.to_string()))?;
            blocks.push(parsed.block);
            digests.push(parsed.state_digest);
        }
        if blocks.is_empty() {
            return Err(ChainError::BadLine("empty ledger file".into()));
        }
        let mut iter = blocks.into_iter().zip(digests);
        let (genesis, gd) = iter.next().unwrap();
        let mut ledger = Ledger::new(chain, genesis, gd)?;
        for (block, digest) in iter {
            ledger.append(block, digest)?;
        }
        Ok(ledger)
    }
}
