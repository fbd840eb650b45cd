use std::fmt;
use std::num::NonZeroU64;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Numeric part of a Wikidata Q-identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(NonZeroU64);

impl ItemId {
    pub fn new(n: u64) -> Option<Self> {
        NonZeroU64::new(n).map(ItemId)
    }

    /// Panics on zero; meant for literals and generated ids.
    pub fn from_raw(n: u64) -> Self {
        Self::new(n).expect("item ids are positive")
    }

    pub fn get(self) -> u64 {
        self.0.get()
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}", self.0)
    }
}

impl FromStr for ItemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s
            .strip_prefix('Q')
            .ok_or_else(|| Error::InvalidItemId(s.to_string()))?;
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') {
            return Err(Error::InvalidItemId(s.to_string()));
        }
        digits
            .parse::<u64>()
            .ok()
            .and_then(ItemId::new)
            .ok_or_else(|| Error::InvalidItemId(s.to_string()))
    }
}

/// Serde adapter writing ids as `"Q123"` strings, used by the JSON formats.
pub mod qid_string {
    use serde::{de, Deserialize, Deserializer, Serializer};

    use super::ItemId;

    pub fn serialize<S: Serializer>(id: &ItemId, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(id)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ItemId, D::Error> {
        let s = <&str>::deserialize(d).map_err(|_| de::Error::custom("expected a Q-id string"))?;
        s.parse().map_err(de::Error::custom)
    }

    pub mod option {
        use serde::{de, Deserialize, Deserializer, Serializer};

        use super::super::ItemId;

        pub fn serialize<S: Serializer>(id: &Option<ItemId>, s: S) -> Result<S::Ok, S::Error> {
            match id {
                Some(id) => s.collect_str(id),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<ItemId>, D::Error> {
            let s = Option::<String>::deserialize(d)?;
            s.map(|s| s.parse().map_err(de::Error::custom)).transpose()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_canonical_form() {
        let id: ItemId = "Q40469".parse().unwrap();
        assert_eq!(id.get(), 40469);
        assert_eq!(id.to_string(), "Q40469");
    }

    #[test]
    fn rejects_bad_forms() {
        for s in ["", "Q", "Q0", "P31", "q5", "Q05", "Q-1", "Q1a"] {
            assert!(s.parse::<ItemId>().is_err(), "{s}");
        }
    }

    proptest! {
        #[test]
        fn round_trips_through_string(n in 1u64..u64::MAX) {
            let id = ItemId::from_raw(n);
            prop_assert_eq!(id.to_string().parse::<ItemId>().unwrap(), id);
        }
    }
}
