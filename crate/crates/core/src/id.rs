//! Node, device and zone identifiers plus the identity registry.
//!
//! Identifiers are interned strings (`Arc<str>`): they are cloned into every
//! message envelope and map key, so cheap clones matter more than inline
//! storage. Ordering is lexicographic, which the protocol uses wherever a
//! deterministic tie-break over participants is needed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::codec::{CodecError, Decode, Encode, Reader};
use crate::crypto::PublicKey;

macro_rules! string_id {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(Arc<str>);

        impl $name {
            pub fn new(s: impl AsRef<str>) -> Self {
                $name(Arc::from(s.as_ref()))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name::new(s)
            }
        }

        impl Encode for $name {
            fn encode_into(&self, out: &mut Vec<u8>) {
                (self.0.len() as u32).encode_into(out);
                out.extend_from_slice(self.0.as_bytes());
            }
            fn encoded_len(&self) -> usize {
                4 + self.0.len()
            }
        }

        impl Decode for $name {
            fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
                Ok($name::new(String::decode_from(r)?))
            }
        }

        impl serde::Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.0)
            }
        }

        impl<'de> serde::Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                Ok($name::new(String::deserialize(d)?))
            }
        }
    };
}

string_id!(
    /// A network participant: regulator, SAS server, witness or client.
    NodeId
);
string_id!(
    /// A CBSD radio. For client nodes this matches the node id.
    DeviceId
);
string_id!(
    /// A geographic service zone with its own L-Chain.
    ZoneId
);

impl DeviceId {
    pub fn node_id(&self) -> NodeId {
        NodeId::new(self.as_str())
    }
}

impl NodeId {
    pub fn device_id(&self) -> DeviceId {
        DeviceId::new(self.as_str())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Hash, serde::Serialize, serde::Deserialize)]
pub enum Role {
    Regulator,
    SasServer,
    Witness,
    Client,
}

impl Encode for Role {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(match self {
            Role::Regulator => 0,
            Role::SasServer => 1,
            Role::Witness => 2,
            Role::Client => 3,
        });
    }
    fn encoded_len(&self) -> usize {
        1
    }
}

impl Decode for Role {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(match r.byte()? {
            0 => Role::Regulator,
            1 => Role::SasServer,
            2 => Role::Witness,
            3 => Role::Client,
            tag => return Err(CodecError::BadTag { ty: "Role", tag }),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct NodeIdentity {
    pub id: NodeId,
    pub role: Role,
    pub public_key: PublicKey,
    /// Zones this node participates in. Empty for regulators.
    pub zones: BTreeSet<ZoneId>,
}

crate::impl_codec_struct!(NodeIdentity { id, role, public_key, zones });

/// All identities known to a run. Built once from the scenario and shared;
/// membership never changes mid-run (crashed nodes keep their entry).
#[derive(Clone, Debug, Default, serde::Serialize, serde::Deserialize)]
pub struct IdentityRegistry {
    entries: BTreeMap<NodeId, NodeIdentity>,
}

impl IdentityRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, identity: NodeIdentity) {
        self.entries.insert(identity.id.clone(), identity);
    }

    pub fn get(&self, id: &NodeId) -> Option<&NodeIdentity> {
        self.entries.get(id)
    }

    pub fn public_key(&self, id: &NodeId) -> Option<&PublicKey> {
        self.entries.get(id).map(|e| &e.public_key)
    }

    pub fn role(&self, id: &NodeId) -> Option<Role> {
        self.entries.get(id).map(|e| e.role)
    }

    pub fn iter(&self) -> impl Iterator<Item = &NodeIdentity> {
        self.entries.values()
    }

    pub fn with_role(&self, role: Role) -> impl Iterator<Item = &NodeIdentity> {
        self.entries.values().filter(move |e| e.role == role)
    }

    /// Servers assigned to a zone, in id order.
    pub fn zone_servers(&self, zone: &ZoneId) -> Vec<NodeId> {
        self.entries
            .values()
            .filter(|e| e.role == Role::SasServer && e.zones.contains(zone))
            .map(|e| e.id.clone())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
