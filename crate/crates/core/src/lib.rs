//! Evidence-based reasoning primitives.
//!
//! - [`calculus`]: the symbolic probability scale and min/max operators
//! - [`network`]: Wigmorean inference networks and their evaluation
//! - [`ontology`]: evidence types, source profiles, credibility patterns
//! - [`abduction`]: rule-based hypothesis generation and multi-step investigation
//! - [`collection`]: hypothesis decomposition and evidence collection
//! - [`bias`]: confirmation, satisficing and absence-of-evidence detectors
//!
//! The crate is `no_std` and needs only `alloc`.
#![no_std]

extern crate alloc;

pub mod abduction;
pub mod bias;
pub mod calculus;
pub mod collection;
pub mod network;
pub mod ontology;
pub mod statement;

pub use calculus::SymbolicProbability;
pub use network::{ArgumentationNetwork, EvaluationResult, Side};
pub use statement::{Atom, Statement, Term};

/// Seconds since the Unix epoch.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize,
)]
#[serde(transparent)]
pub struct Timestamp(pub i64);

/// Items that live in id-keyed collections.
pub trait Keyed {
    fn key(&self) -> &str;
}

/// Serializes a `BTreeMap<String, T>` as a sequence of `T` ordered by id, and
/// rejects duplicate ids on the way back in.
pub mod id_map {
    use alloc::collections::BTreeMap;
    use alloc::string::String;
    use alloc::vec::Vec;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::Keyed;

    pub fn serialize<S, T>(map: &BTreeMap<String, T>, serializer: S) -> Result<S::Ok, S::Error>
    where
        S: Serializer,
        T: Serialize,
    {
        serializer.collect_seq(map.values())
    }

    pub fn deserialize<'de, D, T>(deserializer: D) -> Result<BTreeMap<String, T>, D::Error>
    where
        D: Deserializer<'de>,
        T: Deserialize<'de> + Keyed,
    {
        let items = Vec::<T>::deserialize(deserializer)?;
        let mut map = BTreeMap::new();
        for item in items {
            let key = String::from(item.key());
            if map.insert(key.clone(), item).is_some() {
                return Err(serde::de::Error::custom(alloc::format!("duplicate id {key:?}")));
            }
        }
        Ok(map)
    }

    /// Builds a map from keyed items, returning the first duplicate id on collision.
    pub fn collect<T: Keyed>(items: impl IntoIterator<Item = T>) -> Result<BTreeMap<String, T>, String> {
        let mut map = BTreeMap::new();
        for item in items {
            let key = String::from(item.key());
            if map.contains_key(&key) {
                return Err(key);
            }
            map.insert(key, item);
        }
        Ok(map)
    }
}

pub(crate) fn is_false(b: &bool) -> bool {
    !*b
}
