//! Structured reports and their fixed-layout text rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ebr_core::abduction::StopReason;
use ebr_core::bias::BiasFinding;
use ebr_core::calculus::SymbolicProbability;
use ebr_core::network::{
    rank_roots, ArgumentationNetwork, Coverage, EvaluationResult, NetworkError, Operation, Side,
};
use ebr_core::ontology::EvidenceType;
use ebr_core::statement::Statement;
use ebr_core::Timestamp;
use serde::{Deserialize, Serialize};

use crate::bundle::{AnalysisBundle, Status};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("analysis {0:?} has not been evaluated yet")]
    NotEvaluated(String),
    #[error("link {link:?} cites evidence {item:?}, which is not in the analysis")]
    UnresolvedEvidence { link: String, item: String },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Conclusion {
    pub root: String,
    pub statement: Statement,
    pub probability: SymbolicProbability,
    pub favoring: SymbolicProbability,
    pub disfavoring: SymbolicProbability,
    pub coverage: Coverage,
    pub assumption_dependent: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutlineKind {
    Hypothesis,
    Argument,
    Evidence,
}

/// One line of the argument outline, in depth-first order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct OutlineEntry {
    pub depth: usize,
    pub kind: OutlineKind,
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<Side>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statement: Option<Statement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevance: Option<SymbolicProbability>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credibility: Option<SymbolicProbability>,
    /// Probability for hypotheses, force for arguments and evidence.
    pub value: SymbolicProbability,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<Coverage>,
    #[serde(default)]
    pub assumed: bool,
    /// Favoring and disfavoring forces were equal and cancelled out.
    #[serde(default)]
    pub conflict: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Citation {
    pub item: String,
    #[serde(rename = "type")]
    pub kind: EvidenceType,
    pub statement: Statement,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    pub credibility: SymbolicProbability,
    pub recorded_at: Timestamp,
    /// Links through which the item enters the network.
    pub links: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct AssumptionInForce {
    pub node: String,
    pub statement: Statement,
    pub value: SymbolicProbability,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct StructuredReport {
    pub analysis: String,
    pub kb_version: String,
    pub alert: String,
    pub alert_statement: Statement,
    pub status: Status,
    /// Latest time among the alert and the cited evidence, so identical
    /// inputs give identical reports.
    pub generated_at: Timestamp,
    /// Competing roots, strongest first.
    pub conclusions: Vec<Conclusion>,
    /// `None` when the top two roots tie on probability and coverage.
    pub leading: Option<String>,
    pub pruned: Vec<String>,
    pub outline: Vec<OutlineEntry>,
    pub citations: Vec<Citation>,
    pub assumptions: Vec<AssumptionInForce>,
    pub findings: Vec<BiasFinding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_reason: Option<StopReason>,
}

/// Builds the report from the latest evaluation in `bundle`.
pub fn generate_report(bundle: &AnalysisBundle) -> Result<StructuredReport, ReportError> {
    let (Some(network), Some(evaluation)) = (&bundle.network, &bundle.evaluation) else {
        return Err(ReportError::NotEvaluated(bundle.id.clone()));
    };
    let ranking =
        if network.competing_roots.is_empty() { Vec::new() } else { rank_roots(&network.competing_roots, evaluation)? };
    let conclusions: Vec<Conclusion> = ranking
        .iter()
        .map(|r| {
            let node = &evaluation.nodes[&r.root];
            Conclusion {
                root: r.root.clone(),
                statement: network.nodes[&r.root].statement.clone(),
                probability: node.probability,
                favoring: node.favoring,
                disfavoring: node.disfavoring,
                coverage: node.coverage,
                assumption_dependent: node.assumption_dependent,
            }
        })
        .collect();
    let leading = match conclusions.as_slice() {
        [] => None,
        [only] => Some(only.root.clone()),
        [first, second, ..] => {
            let tied = first.probability == second.probability
                && first.coverage.cmp_ratio(&second.coverage).is_eq();
            (!tied).then(|| first.root.clone())
        }
    };

    let items: BTreeMap<&str, _> = bundle.evidence.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut cited: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for link in network.evidence_links.values() {
        if !items.contains_key(link.evidence.as_str()) {
            return Err(ReportError::UnresolvedEvidence { link: link.id.clone(), item: link.evidence.clone() });
        }
        cited.entry(link.evidence.clone()).or_default().push(link.id.clone());
    }
    let citations: Vec<Citation> = cited
        .into_iter()
        .map(|(id, links)| {
            let item = items[id.as_str()];
            Citation {
                item: id,
                kind: item.kind,
                statement: item.statement.clone(),
                source: item.source.clone(),
                credibility: item.credibility,
                recorded_at: item.recorded_at,
                links,
            }
        })
        .collect();
    let generated_at =
        citations.iter().map(|c| c.recorded_at).chain([bundle.alert.received_at]).max().unwrap_or_default();

    let assumptions = network
        .nodes
        .values()
        .filter_map(|n| {
            n.assumption.map(|value| AssumptionInForce { node: n.id.clone(), statement: n.statement.clone(), value })
        })
        .collect();

    let mut outline = Vec::new();
    for conclusion in &conclusions {
        outline_node(network, evaluation, &conclusion.root, 0, &mut outline);
    }

    Ok(StructuredReport {
        analysis: bundle.id.clone(),
        kb_version: bundle.kb_version.clone(),
        alert: bundle.alert.id.clone(),
        alert_statement: bundle.alert.statement.clone(),
        status: bundle.status,
        generated_at,
        conclusions,
        leading,
        pruned: bundle.pruned.clone(),
        outline,
        citations,
        assumptions,
        findings: bundle.findings.clone(),
        stop_reason: bundle.trace.as_ref().map(|t| t.stop_reason),
    })
}

fn outline_node(
    network: &ArgumentationNetwork,
    evaluation: &EvaluationResult,
    id: &str,
    depth: usize,
    out: &mut Vec<OutlineEntry>,
) {
    let node = &network.nodes[id];
    let value = &evaluation.nodes[id];
    let traced = |operation: Operation, subject: Option<&str>| {
        evaluation
            .trace
            .iter()
            .find(|t| t.node == id && t.operation == operation && t.subject.as_deref() == subject)
    };
    out.push(OutlineEntry {
        depth,
        kind: OutlineKind::Hypothesis,
        id: id.to_string(),
        side: None,
        statement: Some(node.statement.clone()),
        relevance: None,
        credibility: None,
        value: value.probability,
        coverage: Some(value.coverage),
        assumed: node.assumption.is_some(),
        conflict: traced(Operation::Balance, None).is_some_and(|t| t.conflict),
    });
    for link in network.links_of(id) {
        out.push(OutlineEntry {
            depth: depth + 1,
            kind: OutlineKind::Evidence,
            id: link.evidence.clone(),
            side: Some(link.side),
            statement: None,
            relevance: Some(link.relevance),
            credibility: Some(link.credibility),
            value: traced(Operation::InferentialForce, Some(&link.id)).map_or(link.credibility.min(link.relevance), |t| t.output),
            coverage: None,
            assumed: false,
            conflict: false,
        });
    }
    for argument in network.child_arguments(id) {
        out.push(OutlineEntry {
            depth: depth + 1,
            kind: OutlineKind::Argument,
            id: argument.id.clone(),
            side: Some(argument.side),
            statement: None,
            relevance: Some(argument.relevance),
            credibility: None,
            value: traced(Operation::ArgumentForce, Some(&argument.id)).map_or(SymbolicProbability::MIN, |t| t.output),
            coverage: None,
            assumed: false,
            conflict: false,
        });
        for child in &argument.children {
            outline_node(network, evaluation, child, depth + 2, out);
        }
    }
}

fn coverage(c: &Coverage) -> String {
    format!("{}/{}", c.answered, c.total)
}

/// Fixed-layout plain text. Equal reports render to identical bytes.
pub fn render_text(report: &StructuredReport) -> String {
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "ANALYSIS REPORT {}", report.analysis);
    let _ = writeln!(w, "alert: {} {}", report.alert, report.alert_statement);
    let _ = writeln!(w, "knowledge base: {}", report.kb_version);
    let _ = writeln!(w, "status: {}", report.status);
    let _ = writeln!(w, "generated at: {}", report.generated_at.0);
    if let Some(reason) = report.stop_reason {
        let _ = writeln!(w, "investigation stopped: {reason}");
    }

    let _ = writeln!(w, "\nCONCLUSIONS");
    if report.conclusions.is_empty() {
        let _ = writeln!(w, "  no hypothesis explains the alert");
    }
    for (rank, c) in report.conclusions.iter().enumerate() {
        let _ = writeln!(
            w,
            "  {}. {} [{}; coverage {}; favoring {}; disfavoring {}]{}",
            rank + 1,
            c.root,
            c.probability,
            coverage(&c.coverage),
            c.favoring,
            c.disfavoring,
            if c.assumption_dependent { " (depends on assumptions)" } else { "" }
        );
        let _ = writeln!(w, "     {}", c.statement);
    }
    match (&report.leading, report.conclusions.first()) {
        (Some(root), Some(first)) => {
            let _ = writeln!(w, "  leading: {root}, {} with coverage {}", first.probability, coverage(&first.coverage));
        }
        (None, Some(_)) => {
            let _ = writeln!(w, "  leading: none; the strongest hypotheses tie");
        }
        _ => {}
    }
    if !report.pruned.is_empty() {
        let _ = writeln!(w, "  pruned: {}", report.pruned.join(", "));
    }

    let _ = writeln!(w, "\nARGUMENT OUTLINE");
    for entry in &report.outline {
        let indent = "  ".repeat(entry.depth + 1);
        let side = |s: Option<Side>| s.map_or(String::new(), |s| format!("{s} "));
        let _ = match entry.kind {
            OutlineKind::Hypothesis => writeln!(
                w,
                "{indent}{} {}: {} [coverage {}]{}{}",
                entry.id,
                entry.statement.as_ref().map(ToString::to_string).unwrap_or_default(),
                entry.value,
                entry.coverage.as_ref().map(coverage).unwrap_or_default(),
                if entry.assumed { " (assumed)" } else { "" },
                if entry.conflict { " (conflicting evidence)" } else { "" },
            ),
            OutlineKind::Argument => writeln!(
                w,
                "{indent}{}argument {} (relevance {}): force {}",
                side(entry.side),
                entry.id,
                entry.relevance.unwrap_or(SymbolicProbability::MIN),
                entry.value
            ),
            OutlineKind::Evidence => writeln!(
                w,
                "{indent}{}evidence {} (credibility {}, relevance {}): force {}",
                side(entry.side),
                entry.id,
                entry.credibility.unwrap_or(SymbolicProbability::MIN),
                entry.relevance.unwrap_or(SymbolicProbability::MIN),
                entry.value
            ),
        };
    }

    let _ = writeln!(w, "\nEVIDENCE");
    if report.citations.is_empty() {
        let _ = writeln!(w, "  none");
    }
    for c in &report.citations {
        let _ = writeln!(
            w,
            "  {} ({}{}): {} [credibility {}; recorded {}]",
            c.item,
            c.kind,
            c.source.as_ref().map_or(String::new(), |s| format!(", source {s}")),
            c.statement,
            c.credibility,
            c.recorded_at.0
        );
    }

    let _ = writeln!(w, "\nASSUMPTIONS");
    if report.assumptions.is_empty() {
        let _ = writeln!(w, "  none");
    }
    for a in &report.assumptions {
        let _ = writeln!(w, "  {} {}: assumed {}", a.node, a.statement, a.value);
    }

    let _ = writeln!(w, "\nBIAS FINDINGS");
    if report.findings.is_empty() {
        let _ = writeln!(w, "  none");
    }
    for f in &report.findings {
        let kind = serde_json::to_value(f.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let severity =
            serde_json::to_value(f.severity).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let _ = writeln!(w, "  [{severity}] {kind} at {}: {}", f.location, f.explanation);
    }
    out
}
