//! On-disk documents: knowledge bases, evidence repositories, alerts and
//! networks. All are UTF-8 JSON with kebab-case keys; id-keyed collections are
//! written as arrays sorted by id.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ebr_core::abduction::{KnowledgeBase, Observation};
use ebr_core::id_map;
use ebr_core::ontology::{builtin_patterns, CredibilityPattern, EvidenceItem, SourceProfile};
use ebr_core::statement::Statement;
use ebr_core::Timestamp;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, FileError> {
    let text = fs::read_to_string(path).map_err(|source| FileError::Io { path: path.into(), source })?;
    serde_json::from_str(&text).map_err(|source| FileError::Parse { path: path.into(), source })
}

pub fn to_pretty<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("documents serialize");
    text.push('\n');
    text
}

/// Writes `value` to a sibling temporary file and renames it into place, so a
/// reader never sees a half-written document.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), FileError> {
    write_atomic(path, to_pretty(value).as_bytes())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), FileError> {
    let io = |source| FileError::Io { path: path.into(), source };
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// A versioned knowledge base: abduction and decomposition rules, case records,
/// credibility patterns and source profiles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ReferenceKnowledgeBase {
    pub version: String,
    #[serde(flatten)]
    pub knowledge: KnowledgeBase,
    #[serde(with = "id_map", default)]
    pub credibility_patterns: BTreeMap<String, CredibilityPattern>,
    #[serde(with = "id_map", default)]
    pub source_profiles: BTreeMap<String, SourceProfile>,
}

impl ReferenceKnowledgeBase {
    pub fn new(version: impl Into<String>, knowledge: KnowledgeBase) -> Self {
        Self {
            version: version.into(),
            knowledge,
            credibility_patterns: BTreeMap::new(),
            source_profiles: BTreeMap::new(),
        }
    }

    /// Patterns in force: the built-in ones, replaced by id where the file
    /// supplies its own.
    pub fn patterns(&self) -> BTreeMap<String, CredibilityPattern> {
        let mut patterns: BTreeMap<String, CredibilityPattern> =
            builtin_patterns().into_iter().map(|p| (p.id.clone(), p)).collect();
        patterns.extend(self.credibility_patterns.clone());
        patterns
    }

    /// Every problem found; empty when the knowledge base is usable.
    pub fn problems(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.version.trim().is_empty() {
            problems.push("version is empty".to_string());
        }
        problems.extend(self.knowledge.validate().iter().map(ToString::to_string));
        for pattern in self.credibility_patterns.values() {
            if let Err(e) = pattern.validate() {
                problems.push(e.to_string());
            }
        }
        for profile in self.source_profiles.values() {
            if let Err(e) = profile.validate() {
                problems.push(e.to_string());
            }
        }
        let mut types = BTreeMap::new();
        for pattern in self.patterns().values() {
            if let Some(other) = types.insert(pattern.applicable_type, pattern.id.clone()) {
                problems.push(format!(
                    "patterns {other:?} and {:?} both apply to {}",
                    pattern.id, pattern.applicable_type
                ));
            }
        }
        problems
    }

    pub fn load(path: &Path) -> Result<Self, FileError> {
        read_json(path)
    }
}

/// Evidence items and the profiles of their sources.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EvidenceRepositoryFile {
    #[serde(with = "id_map", default)]
    pub items: BTreeMap<String, EvidenceItem>,
    #[serde(with = "id_map", default)]
    pub source_profiles: BTreeMap<String, SourceProfile>,
}

/// An alert as submitted to the service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Alert {
    pub id: String,
    pub statement: Statement,
    #[serde(default)]
    pub received_at: Timestamp,
    /// Submissions with the same alert, knowledge-base version and key map to
    /// the same analysis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dedup_key: Option<String>,
}

impl Alert {
    pub fn observation(&self) -> Observation {
        Observation { id: self.id.clone(), statement: self.statement.clone(), received_at: self.received_at }
    }

    /// Parses an alert document, rejecting statements with free variables.
    pub fn parse(text: &str) -> Result<Self, String> {
        let alert: Alert = serde_json::from_str(text).map_err(|e| format!("alert does not parse: {e}"))?;
        alert.check()?;
        Ok(alert)
    }

    pub fn check(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("alert id is empty".into());
        }
        let free: Vec<&str> = self.statement.variables().collect();
        if !free.is_empty() {
            return Err(format!("alert statement {} has unbound variables: {}", self.statement, free.join(", ")));
        }
        Ok(())
    }
}
