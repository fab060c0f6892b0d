// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Sentiment class of a post: -1 negative, 0 objective, 1 positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Negative,
    Neutral,
    Positive,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("polarity must be -1, 0 or 1, got {0}")]
pub struct InvalidPolarity(pub i64);

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Negative, Polarity::Neutral, Polarity::Positive];

    pub fn value(self) -> i8 {
        match self {
            Polarity::Negative => -1,
            Polarity::Neutral => 0,
            Polarity::Positive => 1,
        }
    }

    pub fn index(self) -> usize {
        (self.value() + 1) as usize
    }

    pub fn from_index(i: usize) -> Polarity {
        Self::ALL[i]
    }
}

impl TryFrom<i64> for Polarity {
    type Error = InvalidPolarity;

    fn try_from(v: i64) -> Result<Self, Self::Error> {
        match v {
            -1 => Ok(Polarity::Negative),
            0 => Ok(Polarity::Neutral),
            1 => Ok(Polarity::Positive),
            other => Err(InvalidPolarity(other)),
        }
    }
}

impl From<Polarity> for i64 {
    fn from(p: Polarity) -> i64 {
        i64::from(p.value())
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

impl Serialize for Polarity {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_i8(self.value())
    }
}

impl<'de> Deserialize<'de> for Polarity {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        Polarity::try_from(v).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serde_uses_integers() {
        assert_eq!(serde_json::to_string(&Polarity::Negative).unwrap(), "-1");
        assert_eq!(serde_json::from_str::<Polarity>("1").unwrap(), Polarity::Positive);
        assert!(serde_json::from_str::<Polarity>("2").is_err());
    }

    #[test]
    fn index_round_trip() {
        for p in Polarity::ALL {
            assert_eq!(Polarity::from_index(p.index()), p);
        }
    }
}
