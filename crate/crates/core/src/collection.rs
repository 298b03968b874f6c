//! Hypotheses in search of evidence: decompose a hypothesis into sub-hypotheses,
//! issue collection requests for the leaves, collect from evidence sources, and
//! turn repository changes into network updates.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::abduction::HypothesisCandidate;
use crate::calculus::{SymbolicProbability, C};
use crate::network::{
    ArgumentationNetwork, Argument, EvidenceChange, EvidenceLink, HypothesisNode, NodeRole, Side,
};
use crate::ontology::EvidenceItem;
use crate::statement::{fresh_entity, instantiate, match_in, Atom, Bindings, Statement, Term};
use crate::{Keyed, Timestamp};

/// Default bound on decomposition depth.
pub const DEFAULT_DECOMPOSITION_DEPTH: usize = 5;

/// "If the parent holds, these children must (or would tend to) hold too."
///
/// Necessary conditions, sufficient conditions and mere indicators are all
/// expressed this way and differ only in relevance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct DecompositionRule {
    pub id: String,
    pub parent: Atom,
    pub side: Side,
    pub relevance: SymbolicProbability,
    pub children: Vec<Statement>,
    /// Child variables not bound by the parent; each gets a fresh entity.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fresh: Vec<String>,
}

impl Keyed for DecompositionRule {
    fn key(&self) -> &str {
        &self.id
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CollectionError {
    #[error("decomposition depth must be at least 1")]
    ZeroDepth,
    #[error("rule {0:?} has no children")]
    EmptyRule(String),
    #[error("rule {rule:?}: child variable {var:?} is neither bound by the parent nor declared fresh")]
    UnboundChildVariable { rule: String, var: String },
    #[error("no evidence source registered; register a file repository or fixture source before collecting")]
    NoSources,
    #[error("source {0:?} is not registered")]
    UnknownSource(String),
    #[error("unknown analysis {0:?}")]
    UnknownAnalysis(String),
}

impl DecompositionRule {
    pub fn validate(&self) -> Result<(), CollectionError> {
        if self.children.is_empty() {
            return Err(CollectionError::EmptyRule(self.id.clone()));
        }
        let bound: BTreeSet<&str> = self.parent.variables().chain(self.fresh.iter().map(String::as_str)).collect();
        for child in &self.children {
            if let Some(var) = child.variables().find(|v| !bound.contains(v)) {
                return Err(CollectionError::UnboundChildVariable { rule: self.id.clone(), var: var.to_string() });
            }
        }
        Ok(())
    }
}

/// Which rule, under which unifier, produced an argument.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Justification {
    pub argument: String,
    pub rule: String,
    pub bindings: Bindings,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Decomposition {
    pub network: ArgumentationNetwork,
    pub justifications: Vec<Justification>,
}

/// Builds the network skeleton for `hypothesis` by applying every matching rule,
/// favoring and disfavoring alike, down to `max_depth` levels.
///
/// The root node takes the candidate's id. Children are named `<parent>.<n>` and
/// arguments `<parent>~<rule>`.
pub fn decompose(
    hypothesis: &HypothesisCandidate,
    rules: &[DecompositionRule],
    max_depth: usize,
) -> Result<Decomposition, CollectionError> {
    if max_depth == 0 {
        return Err(CollectionError::ZeroDepth);
    }
    let mut rules: Vec<&DecompositionRule> = rules.iter().collect();
    rules.sort_by(|a, b| a.id.cmp(&b.id));

    let mut network = ArgumentationNetwork::new();
    let mut justifications = Vec::new();
    network.add_node(HypothesisNode::new(hypothesis.id.clone(), hypothesis.statement.clone(), NodeRole::Root));
    network.competing_roots.insert(hypothesis.id.clone());

    let mut queue = alloc::collections::VecDeque::from([(hypothesis.id.clone(), 0usize)]);
    while let Some((node_id, depth)) = queue.pop_front() {
        if depth >= max_depth {
            continue;
        }
        let statement = network.nodes[&node_id].statement.clone();
        let mut child_count = 0usize;
        for rule in &rules {
            let Some(mut bindings) = match_in(&rule.parent, &statement) else {
                continue;
            };
            let unifier = bindings.clone();
            let tag = format!("d{}", depth + 1);
            let mut children = Vec::new();
            for pattern in &rule.children {
                let child_statement = instantiate(pattern, &mut bindings, &mut |var, ty| Term::Const {
                    name: fresh_entity(var, &tag),
                    ty: ty.map(ToString::to_string),
                });
                child_count += 1;
                let child_id = format!("{node_id}.{child_count}");
                network.add_node(HypothesisNode::new(child_id.clone(), child_statement, NodeRole::Leaf));
                queue.push_back((child_id.clone(), depth + 1));
                children.push(child_id);
            }
            let argument_id = format!("{node_id}~{}", rule.id);
            network.add_argument(Argument {
                id: argument_id.clone(),
                parent: node_id.clone(),
                side: rule.side,
                relevance: rule.relevance,
                children,
            });
            justifications.push(Justification { argument: argument_id, rule: rule.id.clone(), bindings: unifier });
        }
    }
    network.refresh_roles();
    Ok(Decomposition { network, justifications })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RequestStatus {
    Open,
    Fulfilled,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CollectionRequest {
    pub id: String,
    pub leaf: String,
    pub source: String,
    pub query: Statement,
    /// Side of the line of inquiry: the side of the argument the leaf serves.
    pub side: Side,
    pub status: RequestStatus,
    pub issued_at: Timestamp,
}

impl Keyed for CollectionRequest {
    fn key(&self) -> &str {
        &self.id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    FileRepository,
    InMemoryFixture,
    ExternalAdapter,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EvidenceSourceBinding {
    pub id: String,
    pub kind: SourceKind,
    pub capability: String,
}

/// An item returned by a source for a query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SourceHit {
    pub item: EvidenceItem,
    pub side: Side,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevance: Option<SymbolicProbability>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("source {source_id:?} failed: {reason}")]
pub struct SourceFailure {
    pub source_id: String,
    pub reason: String,
}

/// Narrow query interface: a statement in, matching items out.
pub trait EvidenceSource {
    fn binding(&self) -> EvidenceSourceBinding;

    /// Every item that answers `query`. One call is the source's final answer.
    fn query(&self, query: &Statement) -> Result<Vec<SourceHit>, SourceFailure>;
}

/// Hits for `query` among `items`, in the given order.
pub fn hits_for<'a>(items: impl IntoIterator<Item = &'a EvidenceItem>, query: &Statement) -> Vec<SourceHit> {
    items
        .into_iter()
        .filter_map(|item| {
            item.bearing_on(query).map(|(side, relevance)| SourceHit { item: item.clone(), side, relevance })
        })
        .collect()
}

/// Fixture source holding items in memory.
#[derive(Debug, Clone, Default)]
pub struct InMemorySource {
    pub id: String,
    pub items: Vec<EvidenceItem>,
}

impl InMemorySource {
    pub fn new(id: impl Into<String>, items: Vec<EvidenceItem>) -> Self {
        Self { id: id.into(), items }
    }
}

impl EvidenceSource for InMemorySource {
    fn binding(&self) -> EvidenceSourceBinding {
        EvidenceSourceBinding {
            id: self.id.clone(),
            kind: SourceKind::InMemoryFixture,
            capability: "statement match over in-memory items".into(),
        }
    }

    fn query(&self, query: &Statement) -> Result<Vec<SourceHit>, SourceFailure> {
        Ok(hits_for(&self.items, query))
    }
}

/// Side of the first argument (by id) that lists `leaf` as a child; favoring for
/// a parentless leaf.
pub fn leaf_side(network: &ArgumentationNetwork, leaf: &str) -> Side {
    network.parent_arguments(leaf).next().map_or(Side::Favoring, |a| a.side)
}

/// Relevance of the first argument (by id) that lists `leaf` as a child; certain
/// for a parentless leaf.
pub fn leaf_relevance(network: &ArgumentationNetwork, leaf: &str) -> SymbolicProbability {
    network.parent_arguments(leaf).next().map_or(C, |a| a.relevance)
}

/// One request per leaf per source, skipping (leaf, source) pairs that already
/// have a request. Ordered by leaf id, then source id.
pub fn generate_requests(
    skeleton: &ArgumentationNetwork,
    sources: &[EvidenceSourceBinding],
    existing: &[CollectionRequest],
    issued_at: Timestamp,
) -> Result<Vec<CollectionRequest>, CollectionError> {
    if sources.is_empty() {
        return Err(CollectionError::NoSources);
    }
    let mut source_ids: Vec<&str> = sources.iter().map(|s| s.id.as_str()).collect();
    source_ids.sort_unstable();
    source_ids.dedup();
    let taken: BTreeSet<(&str, &str)> = existing.iter().map(|r| (r.leaf.as_str(), r.source.as_str())).collect();

    let mut requests = Vec::new();
    for node in skeleton.nodes.values().filter(|n| skeleton.is_leaf(&n.id)) {
        for source in &source_ids {
            if taken.contains(&(node.id.as_str(), source)) {
                continue;
            }
            requests.push(CollectionRequest {
                id: format!("{}@{}", node.id, source),
                leaf: node.id.clone(),
                source: source.to_string(),
                query: node.statement.clone(),
                side: leaf_side(skeleton, &node.id),
                status: RequestStatus::Open,
                issued_at,
            });
        }
    }
    Ok(requests)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CollectedEvidence {
    pub request: String,
    pub item: EvidenceItem,
    pub side: Side,
    pub relevance: SymbolicProbability,
}

impl CollectedEvidence {
    pub fn link_id(&self, leaf: &str) -> String {
        link_id(leaf, &self.item.id)
    }
}

pub fn link_id(leaf: &str, item: &str) -> String {
    format!("{leaf}#{item}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct FailureRecord {
    pub request: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CollectionOutcome {
    pub collected: Vec<CollectedEvidence>,
    /// All input requests with updated status.
    pub requests: Vec<CollectionRequest>,
    pub failures: Vec<FailureRecord>,
}

/// Runs every open request addressed to `source`. Hits fulfil their request,
/// misses exhaust it, failures leave it open.
pub fn collect(
    network: &ArgumentationNetwork,
    requests: &[CollectionRequest],
    source: &dyn EvidenceSource,
) -> CollectionOutcome {
    let source_id = source.binding().id;
    let mut outcome = CollectionOutcome::default();
    for request in requests {
        let mut request = request.clone();
        if request.source == source_id && request.status == RequestStatus::Open {
            match source.query(&request.query) {
                Ok(hits) if hits.is_empty() => request.status = RequestStatus::Exhausted,
                Ok(hits) => {
                    request.status = RequestStatus::Fulfilled;
                    let default_relevance = leaf_relevance(network, &request.leaf);
                    for hit in hits {
                        outcome.collected.push(CollectedEvidence {
                            request: request.id.clone(),
                            relevance: hit.relevance.unwrap_or(default_relevance),
                            side: hit.side,
                            item: hit.item,
                        });
                    }
                }
                Err(failure) => {
                    outcome.failures.push(FailureRecord { request: request.id.clone(), reason: failure.reason })
                }
            }
        }
        outcome.requests.push(request);
    }
    outcome
}

/// Attaches collected items as evidence links on their requests' leaves.
/// Links that already exist are left alone.
pub fn attach(network: &mut ArgumentationNetwork, outcome: &CollectionOutcome) {
    let leaves: BTreeMap<&str, &str> =
        outcome.requests.iter().map(|r| (r.id.as_str(), r.leaf.as_str())).collect();
    for collected in &outcome.collected {
        let Some(leaf) = leaves.get(collected.request.as_str()) else {
            continue;
        };
        let id = collected.link_id(leaf);
        if network.evidence_links.contains_key(&id) {
            continue;
        }
        network.add_link(EvidenceLink {
            id,
            parent: leaf.to_string(),
            evidence: collected.item.id.clone(),
            side: collected.side,
            relevance: collected.relevance,
            credibility: collected.item.credibility,
            missing: collected.item.is_missing(),
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChangeKind {
    Added,
    Revised,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ChangeEvent {
    pub analysis: String,
    pub sequence: u64,
    pub change: ChangeKind,
    pub item: EvidenceItem,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct Watch {
    sequence: u64,
    queries: Vec<Statement>,
}

/// Tracks subscribed queries per analysis and emits numbered change events.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Monitor {
    analyses: BTreeMap<String, Watch>,
}

impl Monitor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, analysis: &str) {
        self.analyses.entry(analysis.to_string()).or_default();
    }

    /// Registers an analysis whose events already reached `sequence`, e.g. after
    /// reloading persisted state. An existing registration is left alone.
    pub fn register_from(&mut self, analysis: &str, sequence: u64) {
        self.analyses.entry(analysis.to_string()).or_insert(Watch { sequence, queries: Vec::new() });
    }

    pub fn is_registered(&self, analysis: &str) -> bool {
        self.analyses.contains_key(analysis)
    }

    pub fn subscribe(&mut self, analysis: &str, query: Statement) -> Result<(), CollectionError> {
        let watch = self
            .analyses
            .get_mut(analysis)
            .ok_or_else(|| CollectionError::UnknownAnalysis(analysis.to_string()))?;
        if !watch.queries.contains(&query) {
            watch.queries.push(query);
        }
        Ok(())
    }

    pub fn sequence(&self, analysis: &str) -> Option<u64> {
        self.analyses.get(analysis).map(|w| w.sequence)
    }

    /// One event per analysis with a subscribed query that `item` answers.
    pub fn observe(&mut self, change: ChangeKind, item: &EvidenceItem) -> Vec<ChangeEvent> {
        let mut events = Vec::new();
        for (analysis, watch) in &mut self.analyses {
            if watch.queries.iter().any(|q| item.bearing_on(q).is_some()) {
                watch.sequence += 1;
                events.push(ChangeEvent {
                    analysis: analysis.clone(),
                    sequence: watch.sequence,
                    change,
                    item: item.clone(),
                });
            }
        }
        events
    }
}

/// Network changes and request updates that bring an analysis up to date with
/// one change event. Every request whose query the item answers is fulfilled.
pub fn changes_for_event(
    network: &ArgumentationNetwork,
    requests: &[CollectionRequest],
    event: &ChangeEvent,
) -> (Vec<EvidenceChange>, Vec<CollectionRequest>) {
    let mut changes = Vec::new();
    let mut updated = Vec::new();
    let mut touched = BTreeSet::new();
    for request in requests {
        let mut request = request.clone();
        if let Some((side, relevance)) = event.item.bearing_on(&request.query) {
            request.status = RequestStatus::Fulfilled;
            if touched.insert(request.leaf.clone()) && network.nodes.contains_key(&request.leaf) {
                let id = link_id(&request.leaf, &event.item.id);
                if network.evidence_links.contains_key(&id) {
                    changes.push(EvidenceChange::ReviseCredibility { link: id, credibility: event.item.credibility });
                } else {
                    changes.push(EvidenceChange::Add(EvidenceLink {
                        id,
                        parent: request.leaf.clone(),
                        evidence: event.item.id.clone(),
                        side,
                        relevance: relevance.unwrap_or_else(|| leaf_relevance(network, &request.leaf)),
                        credibility: event.item.credibility,
                        missing: event.item.is_missing(),
                    }));
                }
            }
        }
        updated.push(request);
    }
    (changes, updated)
}

/// Leaves, in id order.
pub fn leaves(network: &ArgumentationNetwork) -> Vec<String> {
    network.nodes.keys().filter(|id| network.is_leaf(id)).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::abduction::{Coding, Form, Species};
    use crate::calculus::{BL, L, NS, VL};
    use crate::network::{evaluate, validate, EvaluatedNetwork};
    use crate::ontology::EvidenceType;

    fn candidate(id: &str, statement: &str) -> HypothesisCandidate {
        HypothesisCandidate {
            id: id.into(),
            statement: statement.parse().unwrap(),
            rule: "r".into(),
            species: Species { coding: Coding::Overcoded, form: Form::Simple },
            bindings: Bindings::new(),
            fresh_entities: Vec::new(),
            prior_relevance: C,
            step: 1,
        }
    }

    fn rule(id: &str, parent: &str, side: Side, relevance: SymbolicProbability, children: &[&str]) -> DecompositionRule {
        DecompositionRule {
            id: id.into(),
            parent: parent.parse().unwrap(),
            side,
            relevance,
            children: children.iter().map(|c| c.parse().unwrap()).collect(),
            fresh: Vec::new(),
        }
    }

    fn item(id: &str, statement: &str, credibility: SymbolicProbability) -> EvidenceItem {
        EvidenceItem {
            id: id.into(),
            kind: EvidenceType::TangibleReal,
            statement: statement.parse().unwrap(),
            source: None,
            observed_at: Timestamp(0),
            recorded_at: Timestamp(0),
            credibility,
            provenance_note: String::new(),
            bears_on: Vec::new(),
        }
    }

    fn repo() -> EvidenceSourceBinding {
        InMemorySource::new("repo", Vec::new()).binding()
    }

    #[test]
    fn decompose_matches_three_child_tree() {
        let rules = [rule("hk", "hk(?x)", Side::Favoring, VL, &["hk1(?x)", "hk2(?x)", "hk3(?x)"])];
        let d = decompose(&candidate("Hk", "hk(a)"), &rules, 1).unwrap();
        assert!(validate(&d.network).is_empty());
        assert_eq!(d.network.nodes.len(), 4);
        let arg = &d.network.arguments["Hk~hk"];
        assert_eq!(arg.children, ["Hk.1", "Hk.2", "Hk.3"]);
        assert_eq!(d.network.nodes["Hk.2"].statement.to_string(), "hk2(a)");
        assert_eq!(d.justifications.len(), 1);
        assert_eq!(d.justifications[0].bindings["x"], Term::constant("a"));
    }

    #[test]
    fn decompose_without_rules_is_single_node() {
        let d = decompose(&candidate("H", "lonely(a)"), &[], 5).unwrap();
        assert_eq!(d.network.nodes.len(), 1);
        assert!(d.network.arguments.is_empty());
        assert!(validate(&d.network).is_empty());
        assert_eq!(decompose(&candidate("H", "x"), &[], 0), Err(CollectionError::ZeroDepth));
    }

    #[test]
    fn self_recursive_rule_stops_at_depth() {
        let rules = [rule("loop", "p(?x)", Side::Favoring, L, &["p(?x)"])];
        for depth in 1..=4 {
            let d = decompose(&candidate("H", "p(a)"), &rules, depth).unwrap();
            assert!(validate(&d.network).is_empty());
            assert_eq!(d.network.nodes.len(), depth + 1);
            assert_eq!(d.network.arguments.len(), depth);
        }
    }

    #[test]
    fn decompose_applies_both_sides_and_fresh_variables() {
        let mut with_fresh = rule("buyer", "transfer(?s)", Side::Favoring, VL, &["meets(?s, ?Other)"]);
        with_fresh.fresh.push("Other".into());
        with_fresh.validate().unwrap();
        let against = rule("fish", "transfer(?s)", Side::Disfavoring, L, &["fishing-gear(?s)"]);
        let d = decompose(&candidate("H", "transfer(Ship1)"), &[with_fresh, against], 3).unwrap();
        assert_eq!(d.network.nodes["H.1"].statement.to_string(), "meets(Ship1, other-d1)");
        assert_eq!(d.network.arguments["H~fish"].side, Side::Disfavoring);

        let unbound = rule("bad", "transfer(?s)", Side::Favoring, VL, &["meets(?s, ?Other)"]);
        assert!(matches!(unbound.validate(), Err(CollectionError::UnboundChildVariable { .. })));
    }

    #[test]
    fn requests_per_leaf_and_source() {
        let rules = [rule("hk", "hk(?x)", Side::Favoring, VL, &["hk1(?x)", "hk2(?x)", "hk3(?x)"])];
        let skeleton = decompose(&candidate("Hk", "hk(a)"), &rules, 1).unwrap().network;
        let one = generate_requests(&skeleton, &[repo()], &[], Timestamp(1)).unwrap();
        assert_eq!(one.len(), 3);

        let mut second = repo();
        second.id = "archive".into();
        let two = generate_requests(&skeleton, &[repo(), second], &[], Timestamp(1)).unwrap();
        let ids: Vec<_> = two.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["Hk.1@archive", "Hk.1@repo", "Hk.2@archive", "Hk.2@repo", "Hk.3@archive", "Hk.3@repo"]);

        let mut fulfilled = one[0].clone();
        fulfilled.status = RequestStatus::Fulfilled;
        let again = generate_requests(&skeleton, &[repo()], &[fulfilled], Timestamp(2)).unwrap();
        assert_eq!(again.len(), 2);
        assert!(again.iter().all(|r| r.leaf != "Hk.1"));

        assert_eq!(generate_requests(&skeleton, &[], &[], Timestamp(1)), Err(CollectionError::NoSources));
    }

    #[test]
    fn collect_fulfils_exhausts_and_attaches() {
        let rules = [
            rule("t", "transfer(?s)", Side::Favoring, VL, &["loiters-at-night(?s)", "meets-vessel(?s)"]),
            rule("f", "transfer(?s)", Side::Disfavoring, L, &["fishing-gear(?s)"]),
        ];
        let skeleton = decompose(&candidate("H", "transfer(Ship1)"), &rules, 1).unwrap().network;
        let requests = generate_requests(&skeleton, &[repo()], &[], Timestamp(0)).unwrap();

        let mut contrary = item("gear", "fishing-gear(Ship1)", BL);
        contrary.bears_on.clear();
        let source = InMemorySource::new("repo", vec![item("night", "loiters-at-night(Ship1)", VL), contrary]);
        let outcome = collect(&skeleton, &requests, &source);
        let status: BTreeMap<_, _> = outcome.requests.iter().map(|r| (r.leaf.as_str(), r.status)).collect();
        // rules apply in id order: H.1 is fishing-gear, H.2 loiters, H.3 meets
        assert_eq!(status["H.1"], RequestStatus::Fulfilled);
        assert_eq!(status["H.2"], RequestStatus::Fulfilled);
        assert_eq!(status["H.3"], RequestStatus::Exhausted);
        // default relevance comes from the argument the leaf serves
        let night = outcome.collected.iter().find(|c| c.request == "H.2@repo").unwrap();
        assert_eq!(night.relevance, VL);
        let gear = outcome.collected.iter().find(|c| c.request == "H.1@repo").unwrap();
        assert_eq!((gear.relevance, gear.side), (L, Side::Favoring));

        let mut network = skeleton.clone();
        attach(&mut network, &outcome);
        assert_eq!(network.evidence_links.len(), 2);
        assert!(validate(&network).is_empty());

        let empty = collect(&skeleton, &requests, &InMemorySource::new("repo", Vec::new()));
        assert!(empty.collected.is_empty());
        assert!(empty.requests.iter().all(|r| r.status == RequestStatus::Exhausted));
        let result = evaluate(&skeleton).unwrap();
        assert_eq!(result.nodes["H"].coverage.answered, 0);
    }

    #[test]
    fn collect_disfavoring_bearing() {
        let skeleton = decompose(&candidate("H", "fishing(Ship1)"), &[], 1).unwrap().network;
        let requests = generate_requests(&skeleton, &[repo()], &[], Timestamp(0)).unwrap();
        let mut report = item("cargo", "cargo-hold-empty(Ship1)", VL);
        report.bears_on.push(crate::ontology::Bearing {
            pattern: "fishing(?s)".parse().unwrap(),
            side: Side::Disfavoring,
            relevance: Some(L),
        });
        let outcome = collect(&skeleton, &requests, &InMemorySource::new("repo", vec![report]));
        let mut network = skeleton;
        attach(&mut network, &outcome);
        let link = &network.evidence_links["H#cargo"];
        assert_eq!((link.side, link.relevance), (Side::Disfavoring, L));
    }

    struct Failing;

    impl EvidenceSource for Failing {
        fn binding(&self) -> EvidenceSourceBinding {
            EvidenceSourceBinding { id: "repo".into(), kind: SourceKind::ExternalAdapter, capability: String::new() }
        }

        fn query(&self, _: &Statement) -> Result<Vec<SourceHit>, SourceFailure> {
            Err(SourceFailure { source_id: "repo".into(), reason: "connection refused".into() })
        }
    }

    #[test]
    fn source_failure_keeps_request_open() {
        let skeleton = decompose(&candidate("H", "x(a)"), &[], 1).unwrap().network;
        let requests = generate_requests(&skeleton, &[repo()], &[], Timestamp(0)).unwrap();
        let outcome = collect(&skeleton, &requests, &Failing);
        assert_eq!(outcome.requests[0].status, RequestStatus::Open);
        assert_eq!(outcome.failures[0].reason, "connection refused");
    }

    #[test]
    fn monitor_sequences() {
        let mut monitor = Monitor::new();
        assert_eq!(
            monitor.subscribe("a1", "x(a)".parse().unwrap()),
            Err(CollectionError::UnknownAnalysis("a1".into()))
        );
        monitor.register("a1");
        monitor.subscribe("a1", "loiters-at-night(Ship1)".parse().unwrap()).unwrap();
        let mut found = item("night", "loiters-at-night(Ship1)", L);
        let events = monitor.observe(ChangeKind::Added, &found);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].sequence, 1);
        found.credibility = VL;
        let events = monitor.observe(ChangeKind::Revised, &found);
        assert_eq!((events[0].sequence, events[0].change), (2, ChangeKind::Revised));
        assert!(monitor.observe(ChangeKind::Added, &item("x", "unrelated(Ship1)", C)).is_empty());
        assert_eq!(monitor.sequence("a1"), Some(2));
    }

    #[test]
    fn replaying_events_matches_batch_collection() {
        let rules = [rule("t", "transfer(?s)", Side::Favoring, VL, &["loiters-at-night(?s)", "meets-vessel(?s)"])];
        let skeleton = decompose(&candidate("H", "transfer(Ship1)"), &rules, 1).unwrap().network;
        let requests = generate_requests(&skeleton, &[repo()], &[], Timestamp(0)).unwrap();

        // start from an empty repository
        let initial = collect(&skeleton, &requests, &InMemorySource::new("repo", Vec::new()));
        let mut monitor = Monitor::new();
        monitor.register("a");
        for r in &initial.requests {
            monitor.subscribe("a", r.query.clone()).unwrap();
        }
        let mut evaluated = EvaluatedNetwork::new(skeleton.clone()).unwrap();
        let mut live_requests = initial.requests;

        let night = item("night", "loiters-at-night(Ship1)", BL);
        let meet = item("meet", "meets-vessel(Ship1)", L);
        let mut night_revised = night.clone();
        night_revised.credibility = VL;
        let history = [(ChangeKind::Added, &night), (ChangeKind::Added, &meet), (ChangeKind::Revised, &night_revised)];
        for (kind, it) in history {
            for event in monitor.observe(kind, it) {
                let (changes, updated) = changes_for_event(evaluated.network(), &live_requests, &event);
                live_requests = updated;
                for change in &changes {
                    evaluated = evaluated.apply(change).unwrap();
                }
            }
        }

        let final_repo = InMemorySource::new("repo", vec![night_revised, meet]);
        let batch = collect(&skeleton, &requests, &final_repo);
        let mut batch_network = skeleton;
        attach(&mut batch_network, &batch);
        assert_eq!(evaluated.network(), &batch_network);
        assert_eq!(evaluated.result(), &evaluate(&batch_network).unwrap());
        assert_eq!(live_requests, batch.requests);
        assert_eq!(evaluated.result().probability("H"), Some(L));
        assert_ne!(evaluated.result().probability("H"), Some(NS));
    }
}
