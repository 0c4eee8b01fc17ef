//! Opaque identifiers for registry entities.
//!
//! Every identifier matches `[a-z0-9_-]{1,64}`. Identifiers are compared
//! lexicographically, which is also the tie-break order used by rankings.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize};

/// Maximum identifier length in bytes.
pub const MAX_ID_LEN: usize = 64;

/// Returns true when `s` is a well-formed identifier.
pub fn is_valid_id(s: &str) -> bool {
    !s.is_empty()
        && s.len() <= MAX_ID_LEN
        && s
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'-')
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid identifier {0:?}: expected [a-z0-9_-]{{1,64}}")]
pub struct InvalidId(pub String);

macro_rules! define_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Result<Self, InvalidId> {
                let s = s.into();
                if is_valid_id(&s) {
                    Ok(Self(s))
                } else {
                    Err(InvalidId(s))
                }
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

        impl std::str::FromStr for $name {
            type Err = InvalidId;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::new(s)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                Self::new(s).map_err(serde::de::Error::custom)
            }
        }

        impl AsRef<str> for $name {
            fn as_ref(&self) -> &str {
                &self.0
            }
        }
    };
}

define_id!(
    /// Identifier of a person, unit or organization.
    ResourceId
);
define_id!(AchievementId);
define_id!(IndicatorId);
define_id!(ValueSystemId);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_well_formed_ids() {
        for s in ["p1", "u_ai", "org-nure", "a", &"x".repeat(64)] {
            assert!(ResourceId::new(s).is_ok(), "{s}");
        }
    }

    #[test]
    fn rejects_malformed_ids() {
        for s in ["", "P1", "a b", "ä", "a.b", &"x".repeat(65)] {
            assert!(ResourceId::new(s).is_err(), "{s:?}");
        }
    }

    #[test]
    fn deserialization_validates() {
        assert!(serde_json::from_str::<IndicatorId>("\"cit\"").is_ok());
        assert!(serde_json::from_str::<IndicatorId>("\"Cit\"").is_err());
    }
}
