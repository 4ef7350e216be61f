//! Token amounts.
//!
//! Balances and fees are integers in milli-tokens so that fee splits stay
//! exact: the default 10-token grant fee is 10_000 milli-tokens, which a
//! four-server committee divides without remainder. When a split does not
//! divide evenly the leftover milli-tokens go to the lexicographically
//! smallest committee members, one each, so conservation holds to the unit.

use std::fmt;
use std::ops::{Add, AddAssign, Sub, SubAssign};

use crate::codec::{CodecError, Decode, Encode, Reader};
use crate::id::NodeId;

pub const MILLIS_PER_TOKEN: u64 = 1000;

#[derive(
    Clone,
    Copy,
    PartialEq,
    Eq,
    PartialOrd,
    Ord,
    Hash,
    Default,
    serde::Serialize,
    serde::Deserialize,
)]
#[serde(transparent)]
pub struct TokenAmount(pub u64);

impl TokenAmount {
    pub const ZERO: TokenAmount = TokenAmount(0);

    pub const fn from_tokens(t: u64) -> TokenAmount {
        TokenAmount(t * MILLIS_PER_TOKEN)
    }

    pub fn millis(&self) -> u64 {
        self.0
    }

    pub fn checked_sub(self, other: TokenAmount) -> Option<TokenAmount> {
        self.0.checked_sub(other.0).map(TokenAmount)
    }
}

impl Add for TokenAmount {
    type Output = TokenAmount;
    fn add(self, o: TokenAmount) -> TokenAmount {
        TokenAmount(self.0 + o.0)
    }
}

impl AddAssign for TokenAmount {
    fn add_assign(&mut self, o: TokenAmount) {
        self.0 += o.0;
    }
}

impl Sub for TokenAmount {
    type Output = TokenAmount;
    fn sub(self, o: TokenAmount) -> TokenAmount {
        TokenAmount(self.0 - o.0)
    }
}

impl SubAssign for TokenAmount {
    fn sub_assign(&mut self, o: TokenAmount) {
        self.0 -= o.0;
    }
}

impl fmt::Display for TokenAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:03}", self.0 / MILLIS_PER_TOKEN, self.0 % MILLIS_PER_TOKEN)
    }
}

impl fmt::Debug for TokenAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Encode for TokenAmount {
    fn encode_into(&self, out: &mut Vec<u8>) {
        self.0.encode_into(out);
    }
    fn encoded_len(&self) -> usize {
        8
    }
}

impl Decode for TokenAmount {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(TokenAmount(u64::decode_from(r)?))
    }
}

/// Splits `total` equally among `members`, remainder to the smallest ids.
/// Returns one entry per member, in id order. Sum always equals `total`.
pub fn split_fee(total: TokenAmount, members: &[NodeId]) -> Vec<(NodeId, TokenAmount)> {
    assert!(!members.is_empty(), "fee split over empty committee");
    let mut sorted: Vec<NodeId> = members.to_vec();
    sorted.sort();
    sorted.dedup();
    let n = sorted.len() as u64;
    let share = total.0 / n;
    let remainder = total.0 % n;
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, id)| {
            let extra = if (i as u64) < remainder { 1 } else { 0 };
            (id, TokenAmount(share + extra))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(names: &[&str]) -> Vec<NodeId> {
        names.iter().map(|n| NodeId::new(n)).collect()
    }

    #[test]
    fn even_split_has_no_remainder() {
        let split = split_fee(TokenAmount::from_tokens(10), &ids(&["s1", "s2", "s3", "s4"]));
        assert_eq!(split.len(), 4);
        for (_, amt) in &split {
            assert_eq!(*amt, TokenAmount(2500));
        }
    }

    #[test]
    fn uneven_split_conserves_and_favors_small_ids() {
        let members = ids(&["s3", "s1", "s2"]);
        let total = TokenAmount(10_000);
        let split = split_fee(total, &members);
        let sum: u64 = split.iter().map(|(_, a)| a.0).sum();
        assert_eq!(sum, total.0);
        assert_eq!(split[0], (NodeId::new("s1"), TokenAmount(3334)));
        assert_eq!(split[1], (NodeId::new("s2"), TokenAmount(3333)));
        assert_eq!(split[2], (NodeId::new("s3"), TokenAmount(3333)));
    }

    #[test]
    fn split_conserves_for_all_small_cases() {
        for n in 1..=9u64 {
            let members: Vec<NodeId> = (0..n).map(|i| NodeId::new(format!("s{i}"))).collect();
            for total in [0u64, 1, 999, 10_000, 123_457] {
                let split = split_fee(TokenAmount(total), &members);
                let sum: u64 = split.iter().map(|(_, a)| a.0).sum();
                assert_eq!(sum, total, "n={n} total={total}");
                let max = split.iter().map(|(_, a)| a.0).max().unwrap();
                let min = split.iter().map(|(_, a)| a.0).min().unwrap();
                assert!(max - min <= 1);
            }
        }
    }
}
