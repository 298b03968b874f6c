//! Ordered symbolic probability scale and the min/max calculus built on it.
//!
//! Every quantity the engine computes is a [`SymbolicProbability`]. Conjunctions
//! take the minimum, disjunctions the maximum, and favoring/disfavoring forces are
//! netted by [`balance`].

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A qualitative probability on a fixed six-level scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum SymbolicProbability {
    NoSupport = 0,
    BarelyLikely = 1,
    Likely = 2,
    VeryLikely = 3,
    AlmostCertain = 4,
    Certain = 5,
}

pub use SymbolicProbability::{
    AlmostCertain as AC, BarelyLikely as BL, Certain as C, Likely as L, NoSupport as NS,
    VeryLikely as VL,
};

impl SymbolicProbability {
    /// The whole scale in ascending order.
    pub const ALL: [SymbolicProbability; 6] = [NS, BL, L, VL, AC, C];

    pub const MIN: SymbolicProbability = NS;
    pub const MAX: SymbolicProbability = C;

    pub const fn rank(self) -> u8 {
        self as u8
    }

    pub const fn from_rank(rank: u8) -> Option<Self> {
        match rank {
            0 => Some(NS),
            1 => Some(BL),
            2 => Some(L),
            3 => Some(VL),
            4 => Some(AC),
            5 => Some(C),
            _ => None,
        }
    }

    /// The lowercase label used in every file format and API.
    pub const fn label(self) -> &'static str {
        match self {
            NS => "no support",
            BL => "barely likely",
            L => "likely",
            VL => "very likely",
            AC => "almost certain",
            C => "certain",
        }
    }

    pub const fn abbreviation(self) -> &'static str {
        match self {
            NS => "NS",
            BL => "BL",
            L => "L",
            VL => "VL",
            AC => "AC",
            C => "C",
        }
    }
}

impl fmt::Display for SymbolicProbability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown probability label {0:?}")]
pub struct UnknownLabel(pub String);

impl FromStr for SymbolicProbability {
    type Err = UnknownLabel;

    /// Accepts the full label or its abbreviation (`"very likely"`, `"VL"`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.label() == s || p.abbreviation() == s)
            .ok_or_else(|| UnknownLabel(s.into()))
    }
}

impl Serialize for SymbolicProbability {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for SymbolicProbability {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = <alloc::borrow::Cow<'de, str>>::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CalculusError {
    #[error("{0} requires at least one value")]
    Empty(&'static str),
    #[error("combination pattern is empty")]
    EmptyPattern,
    #[error("indicator combination {0:?} appears more than once")]
    DuplicateCombination(Vec<String>),
    #[error("indicator combination has no indicators")]
    EmptyCombination,
}

/// Probability of a conjunction: the minimum.
pub fn conjoin(values: &[SymbolicProbability]) -> Result<SymbolicProbability, CalculusError> {
    values.iter().copied().min().ok_or(CalculusError::Empty("conjoin"))
}

/// Probability of a disjunction: the maximum.
pub fn disjoin(values: &[SymbolicProbability]) -> Result<SymbolicProbability, CalculusError> {
    values.iter().copied().max().ok_or(CalculusError::Empty("disjoin"))
}

/// Support an item lends a hypothesis: it cannot exceed either its credibility or
/// its relevance.
pub fn inferential_force(
    credibility: SymbolicProbability,
    relevance: SymbolicProbability,
) -> SymbolicProbability {
    credibility.min(relevance)
}

/// Nets the strongest favoring force against the strongest disfavoring force by
/// rank subtraction, clamped at "no support".
pub fn balance(
    favoring: SymbolicProbability,
    disfavoring: SymbolicProbability,
) -> SymbolicProbability {
    let rank = favoring.rank().saturating_sub(disfavoring.rank());
    // rank <= favoring.rank() <= 5
    SymbolicProbability::from_rank(rank).unwrap_or(NS)
}

/// Equal non-trivial forces cancel to "no support"; callers record this as a conflict.
pub fn is_conflict(favoring: SymbolicProbability, disfavoring: SymbolicProbability) -> bool {
    favoring == disfavoring && favoring > NS
}

/// One row of a combined-indicator table: how relevant a given set of present
/// sub-indicators is, taken together, to the parent indicator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct IndicatorCombination {
    pub indicators: BTreeSet<String>,
    pub relevance: SymbolicProbability,
}

impl IndicatorCombination {
    pub fn new<I, S>(indicators: I, relevance: SymbolicProbability) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self { indicators: indicators.into_iter().map(Into::into).collect(), relevance }
    }

    /// `None` when some indicator of the combination is not present.
    pub fn apply(&self, present: &BTreeMap<String, SymbolicProbability>) -> Option<SymbolicProbability> {
        let mut value = self.relevance;
        for id in &self.indicators {
            value = value.min(*present.get(id)?);
        }
        Some(value)
    }
}

/// Checks that a combination table is non-empty, has no empty rows, and no two
/// rows share an indicator set.
pub fn check_pattern(pattern: &[IndicatorCombination]) -> Result<(), CalculusError> {
    if pattern.is_empty() {
        return Err(CalculusError::EmptyPattern);
    }
    let mut seen = BTreeSet::new();
    for combination in pattern {
        if combination.indicators.is_empty() {
            return Err(CalculusError::EmptyCombination);
        }
        if !seen.insert(&combination.indicators) {
            return Err(CalculusError::DuplicateCombination(
                combination.indicators.iter().cloned().collect(),
            ));
        }
    }
    Ok(())
}

/// The `*` operator: disjunction over every applicable combination of the
/// conjunction of its indicators, each capped by the combination's relevance.
///
/// A combination applies when all of its indicators are present. No applicable
/// combination yields "no support".
pub fn combined_indicator(
    pattern: &[IndicatorCombination],
    present: &BTreeMap<String, SymbolicProbability>,
) -> SymbolicProbability {
    pattern.iter().filter_map(|c| c.apply(present)).max().unwrap_or(NS)
}
