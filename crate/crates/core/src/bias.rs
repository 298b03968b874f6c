//! Checks for common reasoning biases. Findings are advisory: they never alter
//! an evaluation.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::abduction::AbductionTrace;
use crate::calculus::L;
use crate::collection::CollectionRequest;
use crate::network::{ArgumentationNetwork, EvaluationResult, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiasKind {
    Confirmation,
    Satisficing,
    AbsenceOfEvidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Severity {
    Advisory,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct BiasFinding {
    pub kind: BiasKind,
    /// Node id or abduction step (`step-<n>`).
    pub location: String,
    pub severity: Severity,
    pub rule: String,
    pub explanation: String,
    /// Node, candidate or leaf ids the finding is about.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cites: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BiasError {
    #[error("coverage threshold {0} must lie in (0, 1]")]
    BadThreshold(f64),
}

/// Default coverage threshold for [`detect_absence_of_evidence`].
pub const DEFAULT_COVERAGE_THRESHOLD: f64 = 0.5;

/// Flags every hypothesis whose subtree gathered favoring evidence while no
/// disfavoring argument, link or collection request exists anywhere beneath it.
pub fn detect_confirmation(network: &ArgumentationNetwork, requests: &[CollectionRequest]) -> Vec<BiasFinding> {
    let mut findings = Vec::new();
    for id in network.nodes.keys() {
        if network.is_leaf(id) && network.parent_arguments(id).next().is_some() {
            continue;
        }
        let subtree = network.subtree(id);
        let favoring: Vec<String> = network
            .evidence_links
            .values()
            .filter(|l| !l.missing && l.side == Side::Favoring && subtree.contains(&l.parent))
            .map(|l| l.id.clone())
            .collect();
        if favoring.is_empty() {
            continue;
        }
        let disfavoring_argument =
            network.arguments.values().any(|a| a.side == Side::Disfavoring && subtree.contains(&a.parent));
        let disfavoring_link = network
            .evidence_links
            .values()
            .any(|l| l.side == Side::Disfavoring && subtree.contains(&l.parent));
        let disfavoring_request =
            requests.iter().any(|r| r.side == Side::Disfavoring && subtree.contains(&r.leaf));
        if disfavoring_argument || disfavoring_link || disfavoring_request {
            continue;
        }
        findings.push(BiasFinding {
            kind: BiasKind::Confirmation,
            location: id.clone(),
            severity: Severity::Warning,
            rule: "favoring-evidence-without-disconfirmation".into(),
            explanation: format!(
                "{} favoring evidence link(s) under {id} and no disfavoring argument or request was ever considered",
                favoring.len()
            ),
            cites: favoring,
        });
    }
    findings
}

/// Flags abduction steps where several candidates were generated but only one
/// was developed. A candidate counts as developed when the step evaluated it or
/// it appears among `competing_roots`.
pub fn detect_satisficing(trace: &AbductionTrace, competing_roots: &BTreeSet<String>) -> Vec<BiasFinding> {
    let mut findings = Vec::new();
    for step in &trace.steps {
        if step.candidates.len() < 2 {
            continue;
        }
        let developed: Vec<&str> = step
            .candidates
            .iter()
            .map(|c| c.id.as_str())
            .filter(|id| step.evaluations.iter().any(|e| e.candidate == *id) || competing_roots.contains(*id))
            .collect();
        if developed.len() != 1 {
            continue;
        }
        let undeveloped: Vec<String> =
            step.candidates.iter().filter(|c| c.id != developed[0]).map(|c| c.id.clone()).collect();
        findings.push(BiasFinding {
            kind: BiasKind::Satisficing,
            location: format!("step-{}", step.index),
            severity: Severity::Warning,
            rule: "single-candidate-developed".into(),
            explanation: format!(
                "{} candidates were generated but only {} was developed; {} alternative(s) were never compared",
                step.candidates.len(),
                developed[0],
                undeveloped.len()
            ),
            cites: undeveloped,
        });
    }
    findings
}

/// Flags roots that reached at least "likely" while fewer than `threshold` of
/// their leaves have been answered.
pub fn detect_absence_of_evidence(
    evaluation: &EvaluationResult,
    threshold: f64,
) -> Result<Vec<BiasFinding>, BiasError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(BiasError::BadThreshold(threshold));
    }
    let mut findings = Vec::new();
    for root in &evaluation.roots {
        let Some(node) = evaluation.nodes.get(root) else { continue };
        if node.probability < L || !node.coverage.is_below(threshold) {
            continue;
        }
        findings.push(BiasFinding {
            kind: BiasKind::AbsenceOfEvidence,
            location: root.clone(),
            severity: Severity::Advisory,
            rule: "conclusion-on-thin-coverage".into(),
            explanation: format!(
                "{root} is rated {} with only {}/{} leaves answered; unanswered leaves are not evidence against it",
                node.probability, node.coverage.answered, node.coverage.total
            ),
            cites: node.unanswered_leaves.clone(),
        });
    }
    Ok(findings)
}

/// Runs every detector.
pub fn detect_all(
    network: &ArgumentationNetwork,
    evaluation: &EvaluationResult,
    requests: &[CollectionRequest],
    trace: Option<&AbductionTrace>,
    threshold: f64,
) -> Result<Vec<BiasFinding>, BiasError> {
    let mut findings = detect_confirmation(network, requests);
    if let Some(trace) = trace {
        findings.extend(detect_satisficing(trace, &network.competing_roots));
    }
    findings.extend(detect_absence_of_evidence(evaluation, threshold)?);
    Ok(findings)
}
