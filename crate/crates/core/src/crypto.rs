//! Hashing and signatures.
//!
//! The rest of the workspace only sees `Digest`, `SecretKey`, `PublicKey`
//! and `Signature`. The concrete algorithms (SHA-256, Ed25519) live behind
//! those four types; swapping either means editing this module only. Ed25519
//! signing is deterministic, which the committee shuffle relies on: the same
//! key over the same message must always produce the same proof bytes.

use std::collections::HashSet;
use std::fmt;
use std::sync::{Mutex, OnceLock};

use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use sha2::{Digest as _, Sha256};

use crate::codec::{CodecError, Decode, Encode, Reader};

pub const DIGEST_LEN: usize = 32;
pub const PUBLIC_KEY_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;

/// SHA-256 output. Displayed and serialized as lowercase hex.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; DIGEST_LEN]);

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Digest> {
        let bytes = hex::decode(s).ok()?;
        Some(Digest(bytes.try_into().ok()?))
    }

    /// First four bytes in hex, for log lines.
    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.short())
    }
}

impl serde::Serialize for Digest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> serde::Deserialize<'de> for Digest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Digest::from_hex(&s).ok_or_else(|| serde::de::Error::custom("bad digest hex"))
    }
}

impl Encode for Digest {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.0);
    }
    fn encoded_len(&self) -> usize {
        DIGEST_LEN
    }
}

impl Decode for Digest {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(Digest(<[u8; DIGEST_LEN]>::decode_from(r)?))
    }
}

pub fn sha256(bytes: &[u8]) -> Digest {
    let mut h = Sha256::new();
    h.update(bytes);
    Digest(h.finalize().into())
}

/// Hashes several slices as if concatenated, without allocating.
pub fn sha256_parts(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Digest(h.finalize().into())
}

#[derive(Clone)]
pub struct SecretKey(SigningKey);

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct PublicKey(VerifyingKey);

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature(ed25519_dalek::Signature);

impl SecretKey {
    pub fn from_seed(seed: &[u8; 32]) -> SecretKey {
        SecretKey(SigningKey::from_bytes(seed))
    }

    pub fn public(&self) -> PublicKey {
        PublicKey(self.0.verifying_key())
    }

    pub fn sign(&self, msg: &[u8]) -> Signature {
        Signature(self.0.sign(msg))
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SecretKey(pub {})", self.public())
    }
}

/// Per-node keys are derived from the scenario seed so that a given
/// `(seed, node-id)` pair always yields the same identity across runs.
pub fn derive_key(scenario_seed: u64, node_id: &str) -> SecretKey {
    let d = sha256_parts(&[b"bdsas-key", &scenario_seed.to_le_bytes(), node_id.as_bytes()]);
    SecretKey::from_seed(d.as_bytes())
}

impl PublicKey {
    pub fn to_bytes(&self) -> [u8; PUBLIC_KEY_LEN] {
        self.0.to_bytes()
    }

    pub fn from_bytes(bytes: &[u8; PUBLIC_KEY_LEN]) -> Option<PublicKey> {
        VerifyingKey::from_bytes(bytes).ok().map(PublicKey)
    }

    pub fn verify(&self, msg: &[u8], sig: &Signature) -> bool {
        self.0.verify_strict(msg, &sig.0).is_ok()
    }
}

impl PartialOrd for PublicKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PublicKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.to_bytes().cmp(&other.to_bytes())
    }
}

impl fmt::Display for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(&self.to_bytes()[..4]))
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({self})")
    }
}

impl Encode for PublicKey {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_bytes());
    }
    fn encoded_len(&self) -> usize {
        PUBLIC_KEY_LEN
    }
}

impl Decode for PublicKey {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let bytes = <[u8; PUBLIC_KEY_LEN]>::decode_from(r)?;
        PublicKey::from_bytes(&bytes).ok_or(CodecError::BadValue("public key"))
    }
}

impl serde::Serialize for PublicKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.to_bytes()))
    }
}

impl<'de> serde::Deserialize<'de> for PublicKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes: [u8; PUBLIC_KEY_LEN] = hex::decode(&s)
            .ok()
            .and_then(|v| v.try_into().ok())
            .ok_or_else(|| serde::de::Error::custom("bad public key hex"))?;
        PublicKey::from_bytes(&bytes).ok_or_else(|| serde::de::Error::custom("bad public key"))
    }
}

impl Signature {
    pub fn to_bytes(&self) -> [u8; SIGNATURE_LEN] {
        self.0.to_bytes()
    }

    pub fn from_bytes(bytes: &[u8; SIGNATURE_LEN]) -> Signature {
        Signature(ed25519_dalek::Signature::from_bytes(bytes))
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({})", hex::encode(&self.to_bytes()[..4]))
    }
}

impl Encode for Signature {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_bytes());
    }
    fn encoded_len(&self) -> usize {
        SIGNATURE_LEN
    }
}

impl Decode for Signature {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(Signature::from_bytes(&<[u8; SIGNATURE_LEN]>::decode_from(r)?))
    }
}

impl serde::Serialize for Signature {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.to_bytes()))
    }
}

impl<'de> serde::Deserialize<'de> for Signature {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes: [u8; SIGNATURE_LEN] = hex::decode(&s)
            .ok()
            .and_then(|v| v.try_into().ok())
            .ok_or_else(|| serde::de::Error::custom("bad signature hex"))?;
        Ok(Signature::from_bytes(&bytes))
    }
}

/// Memoized signature verification.
///
/// Simulations re-verify the same endorsements and votes at every replica.
/// The result of a verification is a pure function of (key, message,
/// signature), so successes are cached process-wide. Only successes: a hit
/// is then sound as long as SHA-256 is collision free, and failures are rare
/// enough to re-check.
pub fn verify_cached(pk: &PublicKey, msg: &[u8], sig: &Signature) -> bool {
    static CACHE: OnceLock<Mutex<HashSet<Digest>>> = OnceLock::new();
    let key = sha256_parts(&[&pk.to_bytes(), &sig.to_bytes(), msg]);
    let cache = CACHE.get_or_init(|| Mutex::new(HashSet::new()));
    if cache.lock().unwrap().contains(&key) {
        return true;
    }
    let ok = pk.verify(msg, sig);
    if ok {
        let mut c = cache.lock().unwrap();
        if c.len() >= 1 << 20 {
            c.clear();
        }
        c.insert(key);
    }
    ok
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_verify_roundtrip() {
        let sk = derive_key(7, "peer-0");
        let sig = sk.sign(b"hello");
        assert!(sk.public().verify(b"hello", &sig));
        assert!(!sk.public().verify(b"hellp", &sig));
        let other = derive_key(7, "peer-1");
        assert!(!other.public().verify(b"hello", &sig));
    }

    #[test]
    fn signing_is_deterministic() {
        let sk = derive_key(42, "server-3");
        assert_eq!(sk.sign(b"m").to_bytes(), sk.sign(b"m").to_bytes());
    }

    #[test]
    fn derived_keys_are_stable_and_distinct() {
        let a = derive_key(1, "n0");
        let b = derive_key(1, "n0");
        let c = derive_key(1, "n1");
        let d = derive_key(2, "n0");
        assert_eq!(a.public(), b.public());
        assert_ne!(a.public(), c.public());
        assert_ne!(a.public(), d.public());
    }

    #[test]
    fn cached_verify_agrees_with_direct() {
        let sk = derive_key(3, "w");
        let sig = sk.sign(b"payload");
        assert!(verify_cached(&sk.public(), b"payload", &sig));
        assert!(verify_cached(&sk.public(), b"payload", &sig));
        assert!(!verify_cached(&sk.public(), b"other", &sig));
    }

    #[test]
    fn digest_hex_roundtrip() {
        let d = sha256(b"abc");
        assert_eq!(
            d.to_hex(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(Digest::from_hex(&d.to_hex()), Some(d));
    }

    #[test]
    fn sha256_parts_matches_concat() {
        assert_eq!(sha256_parts(&[b"ab", b"c"]), sha256(b"abc"));
    }
}
