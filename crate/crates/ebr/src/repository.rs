//! The shared evidence repository. Items are assessed against their source's
//! profile when they arrive, and the repository doubles as an evidence source
//! for collection.

use std::collections::BTreeMap;

use ebr_core::collection::{
    hits_for, ChangeKind, EvidenceSource, EvidenceSourceBinding, SourceFailure, SourceHit, SourceKind,
};
use ebr_core::ontology::{
    assess_credibility, Assessment, CredibilityPattern, EvidenceItem, EvidenceType, OntologyError, SourceProfile,
};
use ebr_core::statement::Statement;

use crate::files::EvidenceRepositoryFile;

pub const REPOSITORY_SOURCE_ID: &str = "repository";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RepositoryError {
    #[error(transparent)]
    Invalid(#[from] OntologyError),
    #[error("item {item:?} cites unknown source {source_id:?}; register its profile first")]
    UnknownSource { item: String, source_id: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EvidenceRepository {
    pub items: BTreeMap<String, EvidenceItem>,
    pub profiles: BTreeMap<String, SourceProfile>,
}

/// What storing an item changed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stored {
    pub item: EvidenceItem,
    /// `None` when an identical item was already present.
    pub change: Option<ChangeKind>,
    pub assessment: Option<Assessment>,
}

impl EvidenceRepository {
    pub fn from_file(file: EvidenceRepositoryFile) -> Self {
        Self { items: file.items, profiles: file.source_profiles }
    }

    pub fn to_file(&self) -> EvidenceRepositoryFile {
        EvidenceRepositoryFile { items: self.items.clone(), source_profiles: self.profiles.clone() }
    }

    /// Credibility of `item` under the given patterns. Items whose source has a
    /// profile are assessed with it; testimonial items must have one. Items
    /// without a source keep their stated credibility, except types whose
    /// pattern supplies a default (authoritative records).
    pub fn assess(
        &self,
        item: &EvidenceItem,
        patterns: &BTreeMap<String, CredibilityPattern>,
    ) -> Result<(EvidenceItem, Option<Assessment>), RepositoryError> {
        item.validate()?;
        let mut item = item.clone();
        if item.kind == EvidenceType::Missing {
            return Ok((item, None));
        }
        let pattern = patterns.values().find(|p| p.applicable_type == item.kind);
        let profile = match &item.source {
            Some(source) => match self.profiles.get(source) {
                Some(profile) => Some(profile.clone()),
                None if item.kind.is_testimonial() => {
                    return Err(RepositoryError::UnknownSource { item: item.id.clone(), source_id: source.clone() })
                }
                None => None,
            },
            None if pattern.is_some_and(|p| p.children.is_empty()) => Some(SourceProfile::anonymous()),
            None => None,
        };
        let (Some(pattern), Some(profile)) = (pattern, profile) else {
            return Ok((item, None));
        };
        let assessment = assess_credibility(&item, &profile, pattern)?;
        item.credibility = assessment.credibility;
        Ok((item, Some(assessment)))
    }

    /// Assesses and stores `item`, replacing any item with the same id.
    pub fn store(
        &mut self,
        item: &EvidenceItem,
        patterns: &BTreeMap<String, CredibilityPattern>,
    ) -> Result<Stored, RepositoryError> {
        let (item, assessment) = self.assess(item, patterns)?;
        let change = match self.items.get(&item.id) {
            Some(existing) if *existing == item => None,
            Some(_) => Some(ChangeKind::Revised),
            None => Some(ChangeKind::Added),
        };
        self.items.insert(item.id.clone(), item.clone());
        Ok(Stored { item, change, assessment })
    }

    /// Replaces a profile and re-assesses every item citing it. Returns the
    /// items whose credibility changed.
    pub fn update_profile(
        &mut self,
        profile: SourceProfile,
        patterns: &BTreeMap<String, CredibilityPattern>,
    ) -> Result<Vec<EvidenceItem>, RepositoryError> {
        profile.validate()?;
        self.profiles.insert(profile.id.clone(), profile.clone());
        let citing: Vec<EvidenceItem> =
            self.items.values().filter(|i| i.source.as_deref() == Some(profile.id.as_str())).cloned().collect();
        let mut revised = Vec::new();
        for item in citing {
            let stored = self.store(&item, patterns)?;
            if stored.change.is_some() {
                revised.push(stored.item);
            }
        }
        Ok(revised)
    }
}

impl EvidenceSource for EvidenceRepository {
    fn binding(&self) -> EvidenceSourceBinding {
        EvidenceSourceBinding {
            id: REPOSITORY_SOURCE_ID.into(),
            kind: SourceKind::FileRepository,
            capability: "statement and bearing match over the persisted evidence repository".into(),
        }
    }

    fn query(&self, query: &Statement) -> Result<Vec<SourceHit>, SourceFailure> {
        Ok(hits_for(self.items.values(), query))
    }
}
