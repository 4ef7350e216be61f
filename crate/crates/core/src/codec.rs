//! Canonical binary encoding.
//!
//! Every hashed or signed structure in the system serializes through this
//! module. The format is deliberately rigid so that two nodes encoding the
//! same value always produce the same bytes:
//!
//! - integers are little-endian fixed width
//! - `f64` goes through its IEEE-754 bit pattern
//! - collections carry a `u32` length prefix and are encoded in iteration
//!   order, which for `BTreeMap`/`BTreeSet` is the key order
//! - enums carry a `u8` tag assigned in declaration order
//!
//! There is no schema negotiation and no versioning: the encoding *is* the
//! protocol. Changing field order on any `Encode` impl is a wire break.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("unexpected end of input at byte {0}")]
    Eof(usize),
    #[error("trailing bytes after value: {0} left")]
    Trailing(usize),
    #[error("invalid enum tag {tag} for {ty}")]
    BadTag { ty: &'static str, tag: u8 },
    #[error("length {0} exceeds remaining input")]
    BadLength(u32),
    #[error("invalid utf-8 in string field")]
    BadUtf8,
    #[error("invalid value for {0}")]
    BadValue(&'static str),
}

pub trait Encode {
    fn encode_into(&self, out: &mut Vec<u8>);

    fn encoded(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_into(&mut out);
        out
    }

    /// Serialized size in bytes. Block size accounting uses this.
    fn encoded_len(&self) -> usize {
        self.encoded().len()
    }
}

pub trait Decode: Sized {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError>;

    /// Decodes a complete value; rejects trailing garbage.
    fn decoded(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let v = Self::decode_from(&mut r)?;
        if r.remaining() != 0 {
            return Err(CodecError::Trailing(r.remaining()));
        }
        Ok(v)
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.remaining() < n {
            return Err(CodecError::Eof(self.pos));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn byte(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub fn len_prefix(&mut self) -> Result<usize, CodecError> {
        let n = u32::decode_from(self)?;
        if n as usize > self.remaining() {
            return Err(CodecError::BadLength(n));
        }
        Ok(n as usize)
    }
}

macro_rules! int_codec {
    ($($t:ty),*) => {$(
        impl Encode for $t {
            fn encode_into(&self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }
            fn encoded_len(&self) -> usize {
                std::mem::size_of::<$t>()
            }
        }
        impl Decode for $t {
            fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
                let bytes = r.take(std::mem::size_of::<$t>())?;
                Ok(<$t>::from_le_bytes(bytes.try_into().unwrap()))
            }
        }
    )*};
}

int_codec!(u8, u16, u32, u64, i64);

impl Encode for bool {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(*self as u8);
    }
    fn encoded_len(&self) -> usize {
        1
    }
}

impl Decode for bool {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        match r.byte()? {
            0 => Ok(false),
            1 => Ok(true),
            tag => Err(CodecError::BadTag { ty: "bool", tag }),
        }
    }
}

impl Encode for f64 {
    fn encode_into(&self, out: &mut Vec<u8>) {
        self.to_bits().encode_into(out);
    }
    fn encoded_len(&self) -> usize {
        8
    }
}

impl Decode for f64 {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(f64::from_bits(u64::decode_from(r)?))
    }
}

impl Encode for String {
    fn encode_into(&self, out: &mut Vec<u8>) {
        (self.len() as u32).encode_into(out);
        out.extend_from_slice(self.as_bytes());
    }
    fn encoded_len(&self) -> usize {
        4 + self.len()
    }
}

impl Decode for String {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let n = r.len_prefix()?;
        let bytes = r.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| CodecError::BadUtf8)
    }
}

impl<T: Encode> Encode for Vec<T> {
    fn encode_into(&self, out: &mut Vec<u8>) {
        (self.len() as u32).encode_into(out);
        for item in self {
            item.encode_into(out);
        }
    }
}

impl<T: Decode> Decode for Vec<T> {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let n = r.len_prefix()?;
        let mut v = Vec::with_capacity(n.min(4096));
        for _ in 0..n {
            v.push(T::decode_from(r)?);
        }
        Ok(v)
    }
}

impl<T: Encode> Encode for Option<T> {
    fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            None => out.push(0),
            Some(v) => {
                out.push(1);
                v.encode_into(out);
            }
        }
    }
}

impl<T: Decode> Decode for Option<T> {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        match r.byte()? {
            0 => Ok(None),
            1 => Ok(Some(T::decode_from(r)?)),
            tag => Err(CodecError::BadTag { ty: "Option", tag }),
        }
    }
}

impl<A: Encode, B: Encode> Encode for (A, B) {
    fn encode_into(&self, out: &mut Vec<u8>) {
        self.0.encode_into(out);
        self.1.encode_into(out);
    }
}

impl<A: Decode, B: Decode> Decode for (A, B) {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok((A::decode_from(r)?, B::decode_from(r)?))
    }
}

impl<T: Encode + Ord> Encode for BTreeSet<T> {
    fn encode_into(&self, out: &mut Vec<u8>) {
        (self.len() as u32).encode_into(out);
        for item in self {
            item.encode_into(out);
        }
    }
}

impl<T: Decode + Ord> Decode for BTreeSet<T> {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let n = r.len_prefix()?;
        let mut set = BTreeSet::new();
        for _ in 0..n {
            set.insert(T::decode_from(r)?);
        }
        Ok(set)
    }
}

impl<K: Encode + Ord, V: Encode> Encode for BTreeMap<K, V> {
    fn encode_into(&self, out: &mut Vec<u8>) {
        (self.len() as u32).encode_into(out);
        for (k, v) in self {
            k.encode_into(out);
            v.encode_into(out);
        }
    }
}

impl<K: Decode + Ord, V: Decode> Decode for BTreeMap<K, V> {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let n = r.len_prefix()?;
        let mut map = BTreeMap::new();
        for _ in 0..n {
            let k = K::decode_from(r)?;
            let v = V::decode_from(r)?;
            map.insert(k, v);
        }
        Ok(map)
    }
}

impl<const N: usize> Encode for [u8; N] {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(self);
    }
    fn encoded_len(&self) -> usize {
        N
    }
}

impl<const N: usize> Decode for [u8; N] {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(r.take(N)?.try_into().unwrap())
    }
}

/// Derives field-by-field `Encode`/`Decode` for a struct.
#[macro_export]
macro_rules! impl_codec_struct {
    ($ty:ty { $($field:ident),+ $(,)? }) => {
        impl $crate::codec::Encode for $ty {
            fn encode_into(&self, out: &mut Vec<u8>) {
                $( $crate::codec::Encode::encode_into(&self.$field, out); )+
            }
        }
        impl $crate::codec::Decode for $ty {
            fn decode_from(r: &mut $crate::codec::Reader<'_>) -> Result<Self, $crate::codec::CodecError> {
                $( let $field = $crate::codec::Decode::decode_from(r)?; )+
                Ok(Self { $($field),+ })
            }
        }
    };
}
