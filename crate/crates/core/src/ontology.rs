//! Evidence taxonomy, source profiles and credibility-assessment patterns.
//!
//! A [`CredibilityPattern`] is a tree of indicators. Leaf indicators are read from
//! a [`SourceProfile`]; every parent is the combined indicator (`*`) of whichever
//! children are present, using the parent's combination table.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::calculus::{
    check_pattern, combined_indicator, CalculusError, IndicatorCombination, SymbolicProbability, AC, BL, C, L,
    NS,
};
use crate::network::{ArgumentationNetwork, EvidenceChange, EvidenceLink, Side};
use crate::statement::{statement_matches, Statement};
use crate::{Keyed, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvidenceType {
    TangibleReal,
    TangibleDemonstrative,
    TestimonialDirect,
    TestimonialSecondhand,
    TestimonialOpinion,
    AuthoritativeRecord,
    Missing,
}

impl EvidenceType {
    pub const ALL: [EvidenceType; 7] = [
        EvidenceType::TangibleReal,
        EvidenceType::TangibleDemonstrative,
        EvidenceType::TestimonialDirect,
        EvidenceType::TestimonialSecondhand,
        EvidenceType::TestimonialOpinion,
        EvidenceType::AuthoritativeRecord,
        EvidenceType::Missing,
    ];

    pub fn is_testimonial(self) -> bool {
        matches!(
            self,
            EvidenceType::TestimonialDirect | EvidenceType::TestimonialSecondhand | EvidenceType::TestimonialOpinion
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EvidenceType::TangibleReal => "tangible-real",
            EvidenceType::TangibleDemonstrative => "tangible-demonstrative",
            EvidenceType::TestimonialDirect => "testimonial-direct",
            EvidenceType::TestimonialSecondhand => "testimonial-secondhand",
            EvidenceType::TestimonialOpinion => "testimonial-opinion",
            EvidenceType::AuthoritativeRecord => "authoritative-record",
            EvidenceType::Missing => "missing",
        }
    }
}

impl fmt::Display for EvidenceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Declares that an item bears on hypotheses matching `pattern`, with the given
/// side and an optional relevance override.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Bearing {
    pub pattern: Statement,
    pub side: Side,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevance: Option<SymbolicProbability>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EvidenceItem {
    pub id: String,
    #[serde(rename = "type")]
    pub kind: EvidenceType,
    pub statement: Statement,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default)]
    pub observed_at: Timestamp,
    #[serde(default)]
    pub recorded_at: Timestamp,
    #[serde(default = "no_support")]
    pub credibility: SymbolicProbability,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub provenance_note: String,
    /// Hypotheses this item favors or disfavors beyond the one it states.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bears_on: Vec<Bearing>,
}

fn no_support() -> SymbolicProbability {
    NS
}

impl Keyed for EvidenceItem {
    fn key(&self) -> &str {
        &self.id
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OntologyError {
    #[error("testimonial item {0:?} has no source")]
    MissingSource(String),
    #[error("missing-evidence item {0:?} must have credibility \"no support\"")]
    MissingWithCredibility(String),
    #[error("item {0:?} was recorded before it was observed")]
    RecordedBeforeObserved(String),
    #[error("pattern {pattern:?} applies to {expected}, item {item:?} is {actual}")]
    TypeMismatch { pattern: String, item: String, expected: EvidenceType, actual: EvidenceType },
    #[error("item {item:?} cites source {expected:?}, profile is {actual:?}")]
    SourceMismatch { item: String, expected: String, actual: String },
    #[error("profile {profile:?}: assessment of {indicator:?} has no supporting note")]
    UnsupportedAssessment { profile: String, indicator: String },
    #[error("pattern {pattern:?}: indicator tree has a cycle through {indicator:?}")]
    CyclicPattern { pattern: String, indicator: String },
    #[error("pattern {pattern:?}: combination for {parent:?} uses {indicator:?}, which is not its child")]
    ForeignIndicator { pattern: String, parent: String, indicator: String },
    #[error("pattern {pattern:?}: {parent:?} has children but no combination table")]
    MissingTable { pattern: String, parent: String },
    #[error("pattern {pattern:?}: table for {parent:?}: {source}")]
    BadTable { pattern: String, parent: String, source: CalculusError },
}

impl EvidenceItem {
    pub fn validate(&self) -> Result<(), OntologyError> {
        if self.kind.is_testimonial() && self.source.is_none() {
            return Err(OntologyError::MissingSource(self.id.clone()));
        }
        if self.kind == EvidenceType::Missing && self.credibility != NS {
            return Err(OntologyError::MissingWithCredibility(self.id.clone()));
        }
        if self.recorded_at < self.observed_at {
            return Err(OntologyError::RecordedBeforeObserved(self.id.clone()));
        }
        Ok(())
    }

    pub fn is_missing(&self) -> bool {
        self.kind == EvidenceType::Missing
    }

    /// Side and relevance override with which this item answers `query`, if it does.
    /// The item's own statement answers as favoring evidence; bearings are tried
    /// after it, in order.
    pub fn bearing_on(&self, query: &Statement) -> Option<(Side, Option<SymbolicProbability>)> {
        if statement_matches(&self.statement, query) {
            return Some((Side::Favoring, None));
        }
        self.bears_on
            .iter()
            .find(|b| statement_matches(&b.pattern, query))
            .map(|b| (b.side, b.relevance))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct IndicatorAssessment {
    pub value: SymbolicProbability,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SourceProfile {
    pub id: String,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub indicators: BTreeMap<String, IndicatorAssessment>,
}

impl Keyed for SourceProfile {
    fn key(&self) -> &str {
        &self.id
    }
}

impl SourceProfile {
    pub fn new(id: impl Into<String>, name: impl Into<String>) -> Self {
        Self { id: id.into(), name: name.into(), indicators: BTreeMap::new() }
    }

    /// Profile with no assessments, for items without a source.
    pub fn anonymous() -> Self {
        Self::default()
    }

    pub fn assess(mut self, indicator: impl Into<String>, value: SymbolicProbability, note: impl Into<String>) -> Self {
        self.indicators.insert(indicator.into(), IndicatorAssessment { value, note: note.into() });
        self
    }

    pub fn validate(&self) -> Result<(), OntologyError> {
        for (indicator, assessment) in &self.indicators {
            if assessment.note.trim().is_empty() {
                return Err(OntologyError::UnsupportedAssessment {
                    profile: self.id.clone(),
                    indicator: indicator.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Indicator vocabulary of the testimonial patterns.
pub mod indicators {
    pub const CREDIBILITY: &str = "credibility";
    pub const COMPETENCE: &str = "competence";
    pub const VERACITY: &str = "veracity";
    pub const ACCURACY: &str = "accuracy";
    pub const TRUTHFULNESS: &str = "truthfulness-of-information";
    pub const TRUSTWORTHINESS: &str = "trustworthiness";
    pub const CORROBORATIVE: &str = "corroborative-evidence";
    pub const CONTRADICTORY: &str = "contradictory-evidence";
    pub const CHARACTER: &str = "character";
    pub const RELIABILITY: &str = "reliability";
    pub const GOALS: &str = "goals";
    pub const AUTHORITY: &str = "authority-of-publisher";
    pub const CORROBORATION: &str = "corroboration";
    pub const RECENCY: &str = "recency";
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CredibilityPattern {
    pub id: String,
    pub applicable_type: EvidenceType,
    #[serde(default = "default_root")]
    pub root: String,
    /// Parent indicator → child indicators.
    #[serde(default)]
    pub children: BTreeMap<String, Vec<String>>,
    /// Parent indicator → combination table over its children.
    #[serde(default)]
    pub combinations: BTreeMap<String, Vec<IndicatorCombination>>,
    /// Credibility when no indicator is populated.
    #[serde(default = "no_support")]
    pub default_credibility: SymbolicProbability,
    /// Question put to the analyst for each leaf indicator.
    #[serde(default)]
    pub questions: BTreeMap<String, String>,
}

fn default_root() -> String {
    indicators::CREDIBILITY.to_string()
}

impl Keyed for CredibilityPattern {
    fn key(&self) -> &str {
        &self.id
    }
}

/// Combination table used when a pattern does not spell one out: all children
/// together are certain, any two likely, any one barely likely.
pub fn default_table(children: &[String]) -> Vec<IndicatorCombination> {
    let n = children.len();
    let mut table = vec![IndicatorCombination::new(children.iter().cloned(), C)];
    if n >= 3 {
        for i in 0..n {
            for j in i + 1..n {
                table.push(IndicatorCombination::new([children[i].clone(), children[j].clone()], L));
            }
        }
    }
    if n >= 2 {
        for child in children {
            table.push(IndicatorCombination::new([child.clone()], BL));
        }
    }
    table
}

impl CredibilityPattern {
    pub fn new(id: impl Into<String>, applicable_type: EvidenceType) -> Self {
        Self {
            id: id.into(),
            applicable_type,
            root: default_root(),
            children: BTreeMap::new(),
            combinations: BTreeMap::new(),
            default_credibility: NS,
            questions: BTreeMap::new(),
        }
    }

    /// Adds `parent ← children` with an explicit table, or the default table when
    /// `table` is `None`.
    pub fn with_indicator(
        mut self,
        parent: &str,
        children: &[&str],
        table: Option<Vec<IndicatorCombination>>,
    ) -> Self {
        let children: Vec<String> = children.iter().map(|c| c.to_string()).collect();
        let table = table.unwrap_or_else(|| default_table(&children));
        self.children.insert(parent.to_string(), children);
        self.combinations.insert(parent.to_string(), table);
        self
    }

    pub fn with_question(mut self, indicator: &str, question: &str) -> Self {
        self.questions.insert(indicator.to_string(), question.to_string());
        self
    }

    /// Indicators with no children, in tree order from the root.
    pub fn leaf_indicators(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut stack = vec![self.root.clone()];
        while let Some(indicator) = stack.pop() {
            match self.children.get(&indicator) {
                Some(children) if !children.is_empty() => stack.extend(children.iter().rev().cloned()),
                _ => {
                    if !out.contains(&indicator) {
                        out.push(indicator)
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), OntologyError> {
        // cycle check over the indicator tree
        let mut state: BTreeMap<&str, bool> = BTreeMap::new(); // false = in progress
        let parents: Vec<&String> = self.children.keys().collect();
        for start in parents {
            let mut stack: Vec<(&str, usize)> = vec![(start.as_str(), 0)];
            if state.contains_key(start.as_str()) {
                continue;
            }
            state.insert(start, false);
            while let Some((node, i)) = stack.last().copied() {
                let children = self.children.get(node).map(Vec::as_slice).unwrap_or(&[]);
                if let Some(child) = children.get(i) {
                    stack.last_mut().unwrap().1 += 1;
                    match state.get(child.as_str()) {
                        Some(false) => {
                            return Err(OntologyError::CyclicPattern {
                                pattern: self.id.clone(),
                                indicator: child.clone(),
                            })
                        }
                        Some(true) => {}
                        None => {
                            state.insert(child, false);
                            stack.push((child, 0));
                        }
                    }
                } else {
                    state.insert(node, true);
                    stack.pop();
                }
            }
        }
        for (parent, children) in &self.children {
            if children.is_empty() {
                continue;
            }
            let table = self.combinations.get(parent).ok_or_else(|| OntologyError::MissingTable {
                pattern: self.id.clone(),
                parent: parent.clone(),
            })?;
            check_pattern(table).map_err(|source| OntologyError::BadTable {
                pattern: self.id.clone(),
                parent: parent.clone(),
                source,
            })?;
            for combination in table {
                if let Some(foreign) = combination.indicators.iter().find(|i| !children.contains(i)) {
                    return Err(OntologyError::ForeignIndicator {
                        pattern: self.id.clone(),
                        parent: parent.clone(),
                        indicator: foreign.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// The shipped patterns: direct-observation testimony, a simplified pattern for
/// web-published demonstrative evidence, and authoritative records.
pub fn builtin_patterns() -> Vec<CredibilityPattern> {
    use indicators::*;
    let testimonial = CredibilityPattern::new("testimonial-direct", EvidenceType::TestimonialDirect)
        .with_indicator(
            CREDIBILITY,
            &[COMPETENCE, VERACITY, ACCURACY],
            Some(vec![
                IndicatorCombination::new([COMPETENCE, VERACITY, ACCURACY], C),
                IndicatorCombination::new([COMPETENCE, VERACITY], L),
                IndicatorCombination::new([VERACITY], BL),
            ]),
        )
        .with_indicator(VERACITY, &[TRUTHFULNESS, TRUSTWORTHINESS], None)
        .with_indicator(TRUTHFULNESS, &[CORROBORATIVE, CONTRADICTORY], None)
        .with_indicator(TRUSTWORTHINESS, &[CHARACTER, RELIABILITY, GOALS], None)
        .with_question(COMPETENCE, "Was the source in a position to observe the event and able to understand it?")
        .with_question(ACCURACY, "Were the source's senses and observing conditions good enough to get it right?")
        .with_question(CORROBORATIVE, "Does other evidence back up what the source reported?")
        .with_question(
            CONTRADICTORY,
            "How free is the report from conflict with existing evidence? (high = no conflicting evidence)",
        )
        .with_question(CHARACTER, "Does the source's character give any reason to doubt their honesty?")
        .with_question(RELIABILITY, "How often have this source's earlier reports turned out to be true?")
        .with_question(GOALS, "Is the report free of any benefit to the source's own interests?");

    let internet = CredibilityPattern::new("internet-source", EvidenceType::TangibleDemonstrative)
        .with_indicator(CREDIBILITY, &[AUTHORITY, CORROBORATION, RECENCY], None)
        .with_question(AUTHORITY, "Is the publisher a recognized authority on the subject?")
        .with_question(CORROBORATION, "Do independent publications report the same thing?")
        .with_question(RECENCY, "Is the publication current enough for the question at hand?");

    let mut record = CredibilityPattern::new("authoritative-record", EvidenceType::AuthoritativeRecord);
    record.default_credibility = AC;

    vec![testimonial, internet, record]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndicatorOrigin {
    /// Read from the source profile; any sub-tree is skipped.
    Direct,
    /// Combined from present children.
    Combined,
    /// Nothing populated; the pattern's default credibility applies.
    Default,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct AppliedCombination {
    pub indicators: Vec<String>,
    pub relevance: SymbolicProbability,
    pub value: SymbolicProbability,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct AssessmentStep {
    pub indicator: String,
    pub origin: IndicatorOrigin,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub applied: Vec<AppliedCombination>,
    pub value: SymbolicProbability,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Assessment {
    pub credibility: SymbolicProbability,
    /// Bottom-up: every indicator before its parent.
    pub trace: Vec<AssessmentStep>,
}

/// Composes a source's indicator assessments bottom-up through `pattern` into a
/// credibility for `item`.
pub fn assess_credibility(
    item: &EvidenceItem,
    profile: &SourceProfile,
    pattern: &CredibilityPattern,
) -> Result<Assessment, OntologyError> {
    if pattern.applicable_type != item.kind {
        return Err(OntologyError::TypeMismatch {
            pattern: pattern.id.clone(),
            item: item.id.clone(),
            expected: pattern.applicable_type,
            actual: item.kind,
        });
    }
    if let Some(source) = &item.source {
        if !profile.id.is_empty() && *source != profile.id {
            return Err(OntologyError::SourceMismatch {
                item: item.id.clone(),
                expected: source.clone(),
                actual: profile.id.clone(),
            });
        }
    }
    pattern.validate()?;
    let mut trace = Vec::new();
    let credibility = match indicator_value(pattern, profile, &pattern.root, &mut trace) {
        Some(value) => value,
        None => {
            trace.push(AssessmentStep {
                indicator: pattern.root.clone(),
                origin: IndicatorOrigin::Default,
                applied: Vec::new(),
                value: pattern.default_credibility,
            });
            pattern.default_credibility
        }
    };
    Ok(Assessment { credibility, trace })
}

/// `None` when neither the indicator nor anything beneath it is populated.
fn indicator_value(
    pattern: &CredibilityPattern,
    profile: &SourceProfile,
    indicator: &str,
    trace: &mut Vec<AssessmentStep>,
) -> Option<SymbolicProbability> {
    if let Some(direct) = profile.indicators.get(indicator) {
        trace.push(AssessmentStep {
            indicator: indicator.to_string(),
            origin: IndicatorOrigin::Direct,
            applied: Vec::new(),
            value: direct.value,
        });
        return Some(direct.value);
    }
    let children = pattern.children.get(indicator)?;
    let mut present = BTreeMap::new();
    for child in children {
        if let Some(value) = indicator_value(pattern, profile, child, trace) {
            present.insert(child.clone(), value);
        }
    }
    if present.is_empty() {
        return None;
    }
    let table = pattern.combinations.get(indicator).map(Vec::as_slice).unwrap_or(&[]);
    let applied = table
        .iter()
        .filter_map(|c| {
            c.apply(&present).map(|value| AppliedCombination {
                indicators: c.indicators.iter().cloned().collect(),
                relevance: c.relevance,
                value,
            })
        })
        .collect();
    let value = combined_indicator(table, &present);
    trace.push(AssessmentStep { indicator: indicator.to_string(), origin: IndicatorOrigin::Combined, applied, value });
    Some(value)
}

/// Creates a marker for evidence that is expected but was not found.
pub fn mark_missing(expected: Statement, reason: &str) -> EvidenceItem {
    EvidenceItem {
        id: format!("missing:{expected}"),
        kind: EvidenceType::Missing,
        statement: expected,
        source: None,
        observed_at: Timestamp::default(),
        recorded_at: Timestamp::default(),
        credibility: NS,
        provenance_note: reason.to_string(),
        bears_on: Vec::new(),
    }
}

/// Changes that replace every link to the missing item `missing_id` with a link
/// to `found` on the same leaf, keeping side and relevance.
pub fn resolve_missing(
    network: &ArgumentationNetwork,
    missing_id: &str,
    found: &EvidenceItem,
) -> Vec<EvidenceChange> {
    let mut changes = Vec::new();
    for link in network.evidence_links.values().filter(|l| l.evidence == missing_id) {
        changes.push(EvidenceChange::Retract { link: link.id.clone() });
        changes.push(EvidenceChange::Add(EvidenceLink {
            id: format!("{}#{}", link.parent, found.id),
            parent: link.parent.clone(),
            evidence: found.id.clone(),
            side: link.side,
            relevance: link.relevance,
            credibility: found.credibility,
            missing: found.is_missing(),
        }));
    }
    changes
}
