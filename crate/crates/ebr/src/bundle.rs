//! The analysis bundle: everything one analysis has produced so far. Every
//! pipeline stage reads one version and writes the next.

use std::fmt;
use std::str::FromStr;

use ebr_core::abduction::{AbductionTrace, HypothesisCandidate};
use ebr_core::bias::BiasFinding;
use ebr_core::collection::CollectionRequest;
use ebr_core::network::{ArgumentationNetwork, EvaluationResult, RankedRoot};
use ebr_core::ontology::EvidenceItem;
use serde::{Deserialize, Serialize};

use crate::files::Alert;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Queued,
    Generating,
    Collecting,
    Analyzing,
    AwaitingHuman,
    Concluded,
    Parked,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Queued => "queued",
            Status::Generating => "generating",
            Status::Collecting => "collecting",
            Status::Analyzing => "analyzing",
            Status::AwaitingHuman => "awaiting-human",
            Status::Concluded => "concluded",
            Status::Parked => "parked",
        }
    }

    /// Statuses from which the pipeline continues without outside input.
    pub fn is_runnable(self) -> bool {
        matches!(self, Status::Queued | Status::Generating | Status::Collecting | Status::Analyzing)
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Status {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            Status::Queued,
            Status::Generating,
            Status::Collecting,
            Status::Analyzing,
            Status::AwaitingHuman,
            Status::Concluded,
            Status::Parked,
        ]
        .into_iter()
        .find(|st| st.as_str() == s)
        .ok_or_else(|| format!("unknown status {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Autonomous,
    /// Every stage transition opens a veto window.
    OnTheLoop,
    /// The pipeline halts for approval before pruning and before concluding.
    InTheLoop,
}

/// Where an in-the-loop analysis is waiting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Gate {
    Prune,
    Conclude,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Parked {
    pub reason: String,
    /// Status to return to when the analysis is resumed.
    pub resume_at: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<Gate>,
}

/// One audited transition. Versions, not wall-clock times, order the log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct AuditEvent {
    pub version: u64,
    pub from: Status,
    pub to: Status,
    pub action: String,
}

/// Decomposition and collection results for one candidate, before merging.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CandidateNetwork {
    pub candidate: String,
    pub network: ArgumentationNetwork,
    pub requests: Vec<CollectionRequest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct AnalysisBundle {
    pub id: String,
    pub version: u64,
    pub kb_version: String,
    pub alert: Alert,
    pub mode: Mode,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<Gate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parked: Option<Parked>,
    #[serde(default)]
    pub candidates: Vec<HypothesisCandidate>,
    /// Per-candidate networks while collection is under way.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidate_networks: Vec<CandidateNetwork>,
    /// All developed candidates' networks merged; their roots compete.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<ArgumentationNetwork>,
    #[serde(default)]
    pub requests: Vec<CollectionRequest>,
    /// Items the network links to, as they were when linked or last revised.
    #[serde(default)]
    pub evidence: Vec<EvidenceItem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<EvaluationResult>,
    #[serde(default)]
    pub ranking: Vec<RankedRoot>,
    #[serde(default)]
    pub pruned: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<AbductionTrace>,
    #[serde(default)]
    pub findings: Vec<BiasFinding>,
    /// Last monitor event applied.
    #[serde(default)]
    pub sequence: u64,
    #[serde(default)]
    pub audit: Vec<AuditEvent>,
}

impl AnalysisBundle {
    pub fn new(id: String, kb_version: String, alert: Alert, mode: Mode) -> Self {
        Self {
            id,
            version: 1,
            kb_version,
            alert,
            mode,
            status: Status::Queued,
            gate: None,
            parked: None,
            candidates: Vec::new(),
            candidate_networks: Vec::new(),
            network: None,
            requests: Vec::new(),
            evidence: Vec::new(),
            evaluation: None,
            ranking: Vec::new(),
            pruned: Vec::new(),
            trace: None,
            findings: Vec::new(),
            sequence: 0,
            audit: Vec::new(),
        }
    }

    /// The next version with `status`, recording the transition.
    pub fn advance(&self, status: Status, action: &str) -> Self {
        let mut next = self.clone();
        next.version += 1;
        next.status = status;
        next.audit.push(AuditEvent { version: next.version, from: self.status, to: status, action: action.into() });
        next
    }
}
