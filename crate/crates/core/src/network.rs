//! Wigmorean probabilistic inference networks.
//!
//! A network is a DAG of hypothesis nodes. Each internal node is supported or
//! opposed by [`Argument`]s whose children form a conjunction; leaves carry
//! [`EvidenceLink`]s. Evaluation runs bottom-up with the min/max calculus and
//! tracks Baconian coverage (answered leaves over all leaves) per node.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::calculus::{balance, inferential_force, is_conflict, SymbolicProbability, NS};
use crate::statement::Statement;
use crate::{id_map, is_false, Keyed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Favoring,
    Disfavoring,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Favoring => "favoring",
            Side::Disfavoring => "disfavoring",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeRole {
    Root,
    Intermediate,
    Leaf,
}

impl fmt::Display for NodeRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeRole::Root => "root",
            NodeRole::Intermediate => "intermediate",
            NodeRole::Leaf => "leaf",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct HypothesisNode {
    pub id: String,
    pub statement: Statement,
    pub role: NodeRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assumption: Option<SymbolicProbability>,
}

impl HypothesisNode {
    pub fn new(id: impl Into<String>, statement: Statement, role: NodeRole) -> Self {
        Self { id: id.into(), statement, role, assumption: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Argument {
    pub id: String,
    pub parent: String,
    pub side: Side,
    pub relevance: SymbolicProbability,
    /// Interpreted as a conjunction.
    pub children: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EvidenceLink {
    pub id: String,
    pub parent: String,
    pub evidence: String,
    pub side: Side,
    pub relevance: SymbolicProbability,
    /// Credibility of the linked item at the time it was attached or last revised.
    pub credibility: SymbolicProbability,
    /// The linked item is expected-but-absent evidence; it never answers a leaf.
    #[serde(default, skip_serializing_if = "is_false")]
    pub missing: bool,
}

impl Keyed for HypothesisNode {
    fn key(&self) -> &str {
        &self.id
    }
}

impl Keyed for Argument {
    fn key(&self) -> &str {
        &self.id
    }
}

impl Keyed for EvidenceLink {
    fn key(&self) -> &str {
        &self.id
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ArgumentationNetwork {
    #[serde(with = "id_map", default)]
    pub nodes: BTreeMap<String, HypothesisNode>,
    #[serde(with = "id_map", default)]
    pub arguments: BTreeMap<String, Argument>,
    #[serde(with = "id_map", default)]
    pub evidence_links: BTreeMap<String, EvidenceLink>,
    #[serde(default)]
    pub competing_roots: BTreeSet<String>,
}

/// A structural rule violation, naming the offending id.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum Defect {
    DanglingReference { owner: String, target: String },
    EmptyArgument { argument: String },
    Cycle { argument: String },
    EvidenceOnInternalNode { link: String, node: String },
    RoleMismatch { node: String, declared: NodeRole, expected: NodeRole },
    UnknownCompetingRoot { node: String },
    CompetingRootNotRoot { node: String },
}

impl fmt::Display for Defect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Defect::DanglingReference { owner, target } => {
                write!(f, "{owner}: reference to unknown id {target:?}")
            }
            Defect::EmptyArgument { argument } => write!(f, "{argument}: argument has no children"),
            Defect::Cycle { argument } => write!(f, "{argument}: argument closes a cycle"),
            Defect::EvidenceOnInternalNode { link, node } => {
                write!(f, "{link}: evidence attached to {node}, which has child arguments")
            }
            Defect::RoleMismatch { node, declared, expected } => {
                write!(f, "{node}: declared {declared} but structure makes it {expected}")
            }
            Defect::UnknownCompetingRoot { node } => write!(f, "{node}: unknown competing root"),
            Defect::CompetingRootNotRoot { node } => {
                write!(f, "{node}: competing root has a parent argument")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NetworkError {
    #[error("network has {} structural defect(s); first: {}", .0.len(), .0[0])]
    Invalid(Vec<Defect>),
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("unknown evidence link {0:?}")]
    UnknownLink(String),
    #[error("evidence link {0:?} already exists")]
    DuplicateLink(String),
    #[error("id {0:?} exists in both networks")]
    IdCollision(String),
    #[error("competing-root set is empty")]
    NoCompetingRoots,
}

impl ArgumentationNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, node: HypothesisNode) {
        self.nodes.insert(node.id.clone(), node);
    }

    pub fn add_argument(&mut self, argument: Argument) {
        self.arguments.insert(argument.id.clone(), argument);
    }

    pub fn add_link(&mut self, link: EvidenceLink) {
        self.evidence_links.insert(link.id.clone(), link);
    }

    /// Arguments whose parent is `node`, in id order.
    pub fn child_arguments<'a>(&'a self, node: &'a str) -> impl Iterator<Item = &'a Argument> + 'a {
        self.arguments.values().filter(move |a| a.parent == node)
    }

    /// Arguments that list `node` among their children, in id order.
    pub fn parent_arguments<'a>(&'a self, node: &'a str) -> impl Iterator<Item = &'a Argument> + 'a {
        self.arguments.values().filter(move |a| a.children.iter().any(|c| c == node))
    }

    pub fn links_of<'a>(&'a self, node: &'a str) -> impl Iterator<Item = &'a EvidenceLink> + 'a {
        self.evidence_links.values().filter(move |l| l.parent == node)
    }

    pub fn is_leaf(&self, node: &str) -> bool {
        self.child_arguments(node).next().is_none()
    }

    /// Role implied by structure: no parent argument ⇒ root, otherwise leaf iff it
    /// has no child arguments.
    pub fn structural_role(&self, node: &str) -> NodeRole {
        if self.parent_arguments(node).next().is_none() {
            NodeRole::Root
        } else if self.is_leaf(node) {
            NodeRole::Leaf
        } else {
            NodeRole::Intermediate
        }
    }

    /// Rewrites every node's declared role from structure.
    pub fn refresh_roles(&mut self) {
        let mut has_parent = BTreeSet::new();
        let mut has_children = BTreeSet::new();
        for argument in self.arguments.values() {
            has_children.insert(argument.parent.clone());
            has_parent.extend(argument.children.iter().cloned());
        }
        for node in self.nodes.values_mut() {
            node.role = if !has_parent.contains(&node.id) {
                NodeRole::Root
            } else if has_children.contains(&node.id) {
                NodeRole::Intermediate
            } else {
                NodeRole::Leaf
            };
        }
    }

    /// Leaves (nodes without child arguments) reachable from `node`, including
    /// `node` itself when it is a leaf.
    pub fn subtree_leaves(&self, node: &str) -> BTreeSet<String> {
        let mut leaves = BTreeSet::new();
        let mut seen = BTreeSet::new();
        let mut stack = vec![node.to_string()];
        while let Some(id) = stack.pop() {
            if !seen.insert(id.clone()) {
                continue;
            }
            let mut has_children = false;
            for argument in self.child_arguments(&id) {
                has_children = true;
                stack.extend(argument.children.iter().cloned());
            }
            if !has_children {
                leaves.insert(id);
            }
        }
        leaves
    }

    /// Nodes reachable from `node` (inclusive).
    pub fn subtree(&self, node: &str) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![node.to_string()];
        while let Some(id) = stack.pop() {
            if seen.insert(id.clone()) {
                for argument in self.child_arguments(&id) {
                    stack.extend(argument.children.iter().cloned());
                }
            }
        }
        seen
    }

    /// Moves all of `other` into `self`; ids must not collide.
    pub fn merge(&mut self, other: ArgumentationNetwork) -> Result<(), NetworkError> {
        for id in other.nodes.keys().chain(other.arguments.keys()).chain(other.evidence_links.keys()) {
            if self.nodes.contains_key(id)
                || self.arguments.contains_key(id)
                || self.evidence_links.contains_key(id)
            {
                return Err(NetworkError::IdCollision(id.clone()));
            }
        }
        self.nodes.extend(other.nodes);
        self.arguments.extend(other.arguments);
        self.evidence_links.extend(other.evidence_links);
        self.competing_roots.extend(other.competing_roots);
        Ok(())
    }
}

/// Lists every structural defect; empty iff the network is well formed.
pub fn validate(network: &ArgumentationNetwork) -> Vec<Defect> {
    let mut defects = Vec::new();
    let mut dangling = false;
    let mut has_parent = BTreeSet::new();
    let mut has_children = BTreeSet::new();
    for argument in network.arguments.values() {
        has_children.insert(argument.parent.as_str());
        has_parent.extend(argument.children.iter().map(String::as_str));
        if !network.nodes.contains_key(&argument.parent) {
            dangling = true;
            defects.push(Defect::DanglingReference {
                owner: argument.id.clone(),
                target: argument.parent.clone(),
            });
        }
        if argument.children.is_empty() {
            defects.push(Defect::EmptyArgument { argument: argument.id.clone() });
        }
        for child in &argument.children {
            if !network.nodes.contains_key(child) {
                dangling = true;
                defects.push(Defect::DanglingReference { owner: argument.id.clone(), target: child.clone() });
            }
        }
    }
    for link in network.evidence_links.values() {
        if !network.nodes.contains_key(&link.parent) {
            defects.push(Defect::DanglingReference { owner: link.id.clone(), target: link.parent.clone() });
        } else if has_children.contains(link.parent.as_str()) {
            defects.push(Defect::EvidenceOnInternalNode { link: link.id.clone(), node: link.parent.clone() });
        }
    }
    if !dangling {
        defects.extend(find_cycles(network));
    }
    for node in network.nodes.values() {
        let expected = if !has_parent.contains(node.id.as_str()) {
            NodeRole::Root
        } else if has_children.contains(node.id.as_str()) {
            NodeRole::Intermediate
        } else {
            NodeRole::Leaf
        };
        if expected != node.role {
            defects.push(Defect::RoleMismatch { node: node.id.clone(), declared: node.role, expected });
        }
    }
    for root in &network.competing_roots {
        if !network.nodes.contains_key(root) {
            defects.push(Defect::UnknownCompetingRoot { node: root.clone() });
        } else if has_parent.contains(root.as_str()) {
            defects.push(Defect::CompetingRootNotRoot { node: root.clone() });
        }
    }
    defects
}

fn find_cycles(network: &ArgumentationNetwork) -> Vec<Defect> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        White,
        Gray,
        Black,
    }
    let ids: Vec<&str> = network.nodes.keys().map(String::as_str).collect();
    let pos: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let mut out_edges: Vec<Vec<(&str, usize)>> = vec![Vec::new(); ids.len()];
    for argument in network.arguments.values() {
        let from = pos[argument.parent.as_str()];
        for child in &argument.children {
            out_edges[from].push((argument.id.as_str(), pos[child.as_str()]));
        }
    }
    let mut marks = vec![Mark::White; ids.len()];
    let mut closing = BTreeSet::new();
    for start in 0..ids.len() {
        if marks[start] != Mark::White {
            continue;
        }
        // (node, next edge index)
        let mut stack = vec![(start, 0usize)];
        marks[start] = Mark::Gray;
        while let Some((node, edge)) = stack.last().copied() {
            if let Some(&(argument, child)) = out_edges[node].get(edge) {
                stack.last_mut().unwrap().1 += 1;
                match marks[child] {
                    Mark::White => {
                        marks[child] = Mark::Gray;
                        stack.push((child, 0));
                    }
                    Mark::Gray => {
                        closing.insert(argument);
                    }
                    Mark::Black => {}
                }
            } else {
                marks[node] = Mark::Black;
                stack.pop();
            }
        }
    }
    closing.into_iter().map(|a| Defect::Cycle { argument: a.to_string() }).collect()
}

/// Baconian coverage: how many of a node's leaves have been answered.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Coverage {
    pub answered: usize,
    pub total: usize,
}

impl Coverage {
    /// Compares `answered / total` exactly.
    pub fn cmp_ratio(&self, other: &Coverage) -> Ordering {
        let lhs = self.answered as u128 * other.total as u128;
        let rhs = other.answered as u128 * self.total as u128;
        lhs.cmp(&rhs)
    }

    pub fn is_below(&self, threshold: f64) -> bool {
        if self.total == 0 {
            return threshold > 0.0;
        }
        (self.answered as f64) < threshold * self.total as f64
    }
}

impl fmt::Display for Coverage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.answered, self.total)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct NodeEvaluation {
    pub probability: SymbolicProbability,
    pub favoring: SymbolicProbability,
    pub disfavoring: SymbolicProbability,
    pub coverage: Coverage,
    pub assumption_dependent: bool,
    /// Populated for root nodes only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unanswered_leaves: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Operation {
    /// min(credibility, relevance) for one evidence link.
    InferentialForce,
    /// min(relevance, conjoin(children)) for one argument.
    ArgumentForce,
    FavoringForce,
    DisfavoringForce,
    Balance,
    Assumption,
    Unanswered,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TraceEntry {
    pub node: String,
    pub operation: Operation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    pub inputs: Vec<SymbolicProbability>,
    pub output: SymbolicProbability,
    /// Equal non-trivial favoring and disfavoring forces cancelled out.
    #[serde(default, skip_serializing_if = "is_false")]
    pub conflict: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EvaluationResult {
    pub nodes: BTreeMap<String, NodeEvaluation>,
    /// Nodes without a parent argument, in id order.
    pub roots: Vec<String>,
    /// Applied operations, children before parents.
    pub trace: Vec<TraceEntry>,
}

impl EvaluationResult {
    pub fn probability(&self, node: &str) -> Option<SymbolicProbability> {
        self.nodes.get(node).map(|n| n.probability)
    }

    pub fn coverage(&self, node: &str) -> Option<Coverage> {
        self.nodes.get(node).map(|n| n.coverage)
    }
}

/// Owned adjacency and ordering, reused between full and incremental evaluation.
#[derive(Debug, Clone)]
struct Topology {
    ids: Vec<String>,
    pos: BTreeMap<String, usize>,
    child_args: Vec<Vec<String>>,
    parents: Vec<Vec<usize>>,
    links: Vec<Vec<String>>,
    /// Children before parents; deterministic for a given structure.
    order: Vec<usize>,
    leaves: Vec<Vec<usize>>,
}

impl Topology {
    fn build(network: &ArgumentationNetwork) -> Self {
        let ids: Vec<String> = network.nodes.keys().cloned().collect();
        let pos: BTreeMap<String, usize> = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        let n = ids.len();
        let mut child_args = vec![Vec::new(); n];
        let mut parents: Vec<Vec<usize>> = vec![Vec::new(); n];
        for argument in network.arguments.values() {
            let p = pos[&argument.parent];
            child_args[p].push(argument.id.clone());
            for child in &argument.children {
                let c = pos[child];
                if !parents[c].contains(&p) {
                    parents[c].push(p);
                }
            }
        }
        let mut links = vec![Vec::new(); n];
        for link in network.evidence_links.values() {
            links[pos[&link.parent]].push(link.id.clone());
        }

        let mut order = Vec::with_capacity(n);
        let mut done = vec![false; n];
        for start in 0..n {
            if done[start] {
                continue;
            }
            let mut stack = vec![(start, false)];
            while let Some((node, expanded)) = stack.pop() {
                if done[node] {
                    continue;
                }
                if expanded {
                    done[node] = true;
                    order.push(node);
                    continue;
                }
                stack.push((node, true));
                for arg in child_args[node].iter().rev() {
                    for child in network.arguments[arg].children.iter().rev() {
                        let c = pos[child];
                        if !done[c] {
                            stack.push((c, false));
                        }
                    }
                }
            }
        }

        let mut leaves: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &node in &order {
            if child_args[node].is_empty() {
                leaves[node] = vec![node];
                continue;
            }
            let mut set = BTreeSet::new();
            for arg in &child_args[node] {
                for child in &network.arguments[arg].children {
                    set.extend(leaves[pos[child]].iter().copied());
                }
            }
            leaves[node] = set.into_iter().collect();
        }

        Self { ids, pos, child_args, parents, links, order, leaves }
    }

    /// `node` and all its ancestors.
    fn ancestors(&self, node: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            if seen.insert(n) {
                stack.extend(self.parents[n].iter().copied());
            }
        }
        seen
    }
}

fn compute_node(
    network: &ArgumentationNetwork,
    topo: &Topology,
    idx: usize,
    values: &[Option<NodeEvaluation>],
) -> (NodeEvaluation, Vec<TraceEntry>) {
    let id = &topo.ids[idx];
    let node = &network.nodes[id];
    let mut trace = Vec::new();
    let entry = |operation, subject: Option<&str>, inputs: Vec<SymbolicProbability>, output| TraceEntry {
        node: id.clone(),
        operation,
        subject: subject.map(ToString::to_string),
        inputs,
        output,
        conflict: false,
    };
    let child = |c: &String| values[topo.pos[c]].as_ref().expect("children evaluated first");

    let mut favoring = NS;
    let mut disfavoring = NS;
    let mut dependent = node.assumption.is_some();
    let mut forces: [Vec<SymbolicProbability>; 2] = [Vec::new(), Vec::new()];
    let is_leaf = topo.child_args[idx].is_empty();

    if is_leaf {
        for link_id in &topo.links[idx] {
            let link = &network.evidence_links[link_id];
            let force = inferential_force(link.credibility, link.relevance);
            trace.push(entry(
                Operation::InferentialForce,
                Some(link_id),
                vec![link.credibility, link.relevance],
                force,
            ));
            forces[(link.side == Side::Disfavoring) as usize].push(force);
        }
    } else {
        for arg_id in &topo.child_args[idx] {
            let argument = &network.arguments[arg_id];
            let mut inputs = vec![argument.relevance];
            let mut force = argument.relevance;
            for c in &argument.children {
                let value = child(c);
                dependent |= value.assumption_dependent;
                inputs.push(value.probability);
                force = force.min(value.probability);
            }
            trace.push(entry(Operation::ArgumentForce, Some(arg_id), inputs, force));
            forces[(argument.side == Side::Disfavoring) as usize].push(force);
        }
    }

    let has_forces = !forces[0].is_empty() || !forces[1].is_empty();
    if has_forces {
        favoring = forces[0].iter().copied().max().unwrap_or(NS);
        disfavoring = forces[1].iter().copied().max().unwrap_or(NS);
        if !forces[0].is_empty() {
            trace.push(entry(Operation::FavoringForce, None, forces[0].clone(), favoring));
        }
        if !forces[1].is_empty() {
            trace.push(entry(Operation::DisfavoringForce, None, forces[1].clone(), disfavoring));
        }
    }
    let computed = balance(favoring, disfavoring);
    if has_forces {
        let mut balanced = entry(Operation::Balance, None, vec![favoring, disfavoring], computed);
        balanced.conflict = is_conflict(favoring, disfavoring);
        trace.push(balanced);
    }

    let probability = match node.assumption {
        Some(assumed) => {
            trace.push(entry(Operation::Assumption, None, vec![computed], assumed));
            assumed
        }
        None => computed,
    };

    let coverage = if is_leaf {
        let answered = node.assumption.is_some()
            || topo.links[idx].iter().any(|l| !network.evidence_links[l].missing);
        if !answered {
            trace.push(entry(Operation::Unanswered, None, Vec::new(), probability));
        }
        Coverage { answered: answered as usize, total: 1 }
    } else {
        let leaves = &topo.leaves[idx];
        let answered = leaves
            .iter()
            .filter(|&&l| values[l].as_ref().is_some_and(|v| v.coverage.answered == 1))
            .count();
        Coverage { answered, total: leaves.len() }
    };

    let unanswered_leaves = if node.role == NodeRole::Root {
        if is_leaf {
            if coverage.answered == 0 { vec![id.clone()] } else { Vec::new() }
        } else {
            topo.leaves[idx]
                .iter()
                .filter(|&&l| values[l].as_ref().is_some_and(|v| v.coverage.answered == 0))
                .map(|&l| topo.ids[l].clone())
                .collect()
        }
    } else {
        Vec::new()
    };

    (
        NodeEvaluation {
            probability,
            favoring,
            disfavoring,
            coverage,
            assumption_dependent: dependent,
            unanswered_leaves,
        },
        trace,
    )
}

/// A network together with its evaluation and the caches needed to update it
/// incrementally.
#[derive(Debug, Clone)]
pub struct EvaluatedNetwork {
    network: ArgumentationNetwork,
    topo: Topology,
    values: Vec<NodeEvaluation>,
    traces: Vec<Vec<TraceEntry>>,
    result: EvaluationResult,
}

impl EvaluatedNetwork {
    pub fn new(network: ArgumentationNetwork) -> Result<Self, NetworkError> {
        let defects = validate(&network);
        if !defects.is_empty() {
            return Err(NetworkError::Invalid(defects));
        }
        let topo = Topology::build(&network);
        let mut values: Vec<Option<NodeEvaluation>> = vec![None; topo.ids.len()];
        let mut traces = vec![Vec::new(); topo.ids.len()];
        for &idx in &topo.order {
            let (value, trace) = compute_node(&network, &topo, idx, &values);
            values[idx] = Some(value);
            traces[idx] = trace;
        }
        let values: Vec<NodeEvaluation> = values.into_iter().map(|v| v.expect("all nodes ordered")).collect();
        let result = assemble(&topo, &values, &traces);
        Ok(Self { network, topo, values, traces, result })
    }

    pub fn network(&self) -> &ArgumentationNetwork {
        &self.network
    }

    pub fn result(&self) -> &EvaluationResult {
        &self.result
    }

    pub fn into_parts(self) -> (ArgumentationNetwork, EvaluationResult) {
        (self.network, self.result)
    }

    /// Applies one evidence change and recomputes only the touched leaf and its
    /// ancestors. `self` is left untouched.
    pub fn apply(&self, change: &EvidenceChange) -> Result<EvaluatedNetwork, NetworkError> {
        let mut network = self.network.clone();
        let leaf = match change {
            EvidenceChange::Add(link) => {
                if network.evidence_links.contains_key(&link.id) {
                    return Err(NetworkError::DuplicateLink(link.id.clone()));
                }
                if !network.nodes.contains_key(&link.parent) {
                    return Err(NetworkError::UnknownNode(link.parent.clone()));
                }
                if !network.is_leaf(&link.parent) {
                    return Err(NetworkError::Invalid(vec![Defect::EvidenceOnInternalNode {
                        link: link.id.clone(),
                        node: link.parent.clone(),
                    }]));
                }
                network.add_link(link.clone());
                link.parent.clone()
            }
            EvidenceChange::ReviseCredibility { link, credibility } => {
                let existing =
                    network.evidence_links.get_mut(link).ok_or_else(|| NetworkError::UnknownLink(link.clone()))?;
                existing.credibility = *credibility;
                existing.parent.clone()
            }
            EvidenceChange::Retract { link } => {
                let removed =
                    network.evidence_links.remove(link).ok_or_else(|| NetworkError::UnknownLink(link.clone()))?;
                removed.parent
            }
        };

        let mut topo = self.topo.clone();
        let leaf_idx = topo.pos[&leaf];
        topo.links[leaf_idx] = network.links_of(&leaf).map(|l| l.id.clone()).collect();

        let dirty = topo.ancestors(leaf_idx);
        let mut values: Vec<Option<NodeEvaluation>> = self.values.iter().cloned().map(Some).collect();
        let mut traces = self.traces.clone();
        for &idx in topo.order.iter().filter(|i| dirty.contains(i)) {
            let (value, trace) = compute_node(&network, &topo, idx, &values);
            values[idx] = Some(value);
            traces[idx] = trace;
        }
        let values: Vec<NodeEvaluation> = values.into_iter().map(|v| v.expect("cached")).collect();
        let result = assemble(&topo, &values, &traces);
        Ok(Self { network, topo, values, traces, result })
    }
}

fn assemble(topo: &Topology, values: &[NodeEvaluation], traces: &[Vec<TraceEntry>]) -> EvaluationResult {
    EvaluationResult {
        nodes: topo.ids.iter().cloned().zip(values.iter().cloned()).collect(),
        roots: (0..topo.ids.len()).filter(|&i| topo.parents[i].is_empty()).map(|i| topo.ids[i].clone()).collect(),
        trace: topo.order.iter().flat_map(|&i| traces[i].iter().cloned()).collect(),
    }
}

/// Bottom-up evaluation of a valid network.
pub fn evaluate(network: &ArgumentationNetwork) -> Result<EvaluationResult, NetworkError> {
    EvaluatedNetwork::new(network.clone()).map(|e| e.result)
}

/// Evaluates a copy of `network` with assumptions set (`Some`) or cleared (`None`).
pub fn what_if(
    network: &ArgumentationNetwork,
    overrides: &BTreeMap<String, Option<SymbolicProbability>>,
) -> Result<EvaluationResult, NetworkError> {
    evaluate(&with_assumptions(network, overrides)?)
}

/// Returns a copy of `network` with assumptions set or cleared.
pub fn with_assumptions(
    network: &ArgumentationNetwork,
    overrides: &BTreeMap<String, Option<SymbolicProbability>>,
) -> Result<ArgumentationNetwork, NetworkError> {
    let mut copy = network.clone();
    for (id, value) in overrides {
        copy.nodes.get_mut(id).ok_or_else(|| NetworkError::UnknownNode(id.clone()))?.assumption = *value;
    }
    Ok(copy)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "change", rename_all = "kebab-case")]
pub enum EvidenceChange {
    Add(EvidenceLink),
    ReviseCredibility { link: String, credibility: SymbolicProbability },
    Retract { link: String },
}

/// Applies one evidence change to an evaluated network, recomputing only the
/// ancestor chain of the touched leaf.
pub fn apply_evidence_change(
    evaluated: &EvaluatedNetwork,
    change: &EvidenceChange,
) -> Result<EvaluatedNetwork, NetworkError> {
    evaluated.apply(change)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RankedRoot {
    pub root: String,
    pub probability: SymbolicProbability,
    pub coverage: Coverage,
}

/// Probability descending, then coverage ratio descending, then id ascending.
pub fn competing_order(a: &RankedRoot, b: &RankedRoot) -> Ordering {
    b.probability
        .cmp(&a.probability)
        .then_with(|| b.coverage.cmp_ratio(&a.coverage))
        .then_with(|| a.root.cmp(&b.root))
}

/// Orders the given roots of an evaluated network.
pub fn rank_roots<'a>(
    roots: impl IntoIterator<Item = &'a String>,
    result: &EvaluationResult,
) -> Result<Vec<RankedRoot>, NetworkError> {
    let mut ranked = roots
        .into_iter()
        .map(|root| {
            let value = result.nodes.get(root).ok_or_else(|| NetworkError::UnknownNode(root.clone()))?;
            Ok(RankedRoot { root: root.clone(), probability: value.probability, coverage: value.coverage })
        })
        .collect::<Result<Vec<_>, NetworkError>>()?;
    if ranked.is_empty() {
        return Err(NetworkError::NoCompetingRoots);
    }
    ranked.sort_by(competing_order);
    Ok(ranked)
}

/// Evaluates the network and orders its competing roots.
pub fn compare_competing(network: &ArgumentationNetwork) -> Result<Vec<RankedRoot>, NetworkError> {
    if network.competing_roots.is_empty() {
        return Err(NetworkError::NoCompetingRoots);
    }
    let result = evaluate(network)?;
    rank_roots(&network.competing_roots, &result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{AC, BL, C, L, VL};

    fn st(s: &str) -> Statement {
        s.parse().unwrap()
    }

    fn link(id: &str, parent: &str, side: Side, credibility: SymbolicProbability, relevance: SymbolicProbability) -> EvidenceLink {
        EvidenceLink {
            id: id.into(),
            parent: parent.into(),
            evidence: id.into(),
            side,
            relevance,
            credibility,
            missing: false,
        }
    }

    /// H2a alone with E1, E2 favoring and E3 disfavoring.
    fn h2a() -> ArgumentationNetwork {
        let mut n = ArgumentationNetwork::new();
        n.add_node(HypothesisNode::new("H2a", st("h2a"), NodeRole::Root));
        n.add_link(link("E1", "H2a", Side::Favoring, VL, C));
        n.add_link(link("E2", "H2a", Side::Favoring, L, L));
        n.add_link(link("E3", "H2a", Side::Disfavoring, BL, VL));
        n
    }

    fn chain() -> ArgumentationNetwork {
        let mut n = ArgumentationNetwork::new();
        n.add_node(HypothesisNode::new("H", st("h"), NodeRole::Root));
        n.add_node(HypothesisNode::new("H1", st("h1"), NodeRole::Leaf));
        n.add_argument(Argument {
            id: "A".into(),
            parent: "H".into(),
            side: Side::Favoring,
            relevance: C,
            children: vec!["H1".into()],
        });
        n.competing_roots.insert("H".into());
        n
    }

    #[test]
    fn h2a_example() {
        let r = evaluate(&h2a()).unwrap();
        let h = &r.nodes["H2a"];
        assert_eq!((h.favoring, h.disfavoring, h.probability), (VL, BL, L));
        assert_eq!(h.coverage, Coverage { answered: 1, total: 1 });
        let forces: Vec<_> = r
            .trace
            .iter()
            .filter(|t| t.operation == Operation::InferentialForce)
            .map(|t| t.output)
            .collect();
        assert_eq!(forces, [VL, L, BL]);
    }

    #[test]
    fn identity_chain_and_bottom() {
        let mut n = chain();
        let r = evaluate(&n).unwrap();
        assert_eq!(r.probability("H"), Some(NS));
        assert_eq!(r.nodes["H"].unanswered_leaves, ["H1"]);
        n.nodes.get_mut("H1").unwrap().assumption = Some(C);
        let r = evaluate(&n).unwrap();
        assert_eq!(r.probability("H"), Some(C));
        assert!(r.nodes["H"].assumption_dependent);
        assert_eq!(r.coverage("H"), Some(Coverage { answered: 1, total: 1 }));
    }

    #[test]
    fn validate_reports_defects() {
        assert!(validate(&h2a()).is_empty());
        assert!(validate(&chain()).is_empty());

        let mut cyc = chain();
        cyc.add_argument(Argument {
            id: "B".into(),
            parent: "H1".into(),
            side: Side::Favoring,
            relevance: C,
            children: vec!["H".into()],
        });
        let defects = validate(&cyc);
        assert!(defects.contains(&Defect::Cycle { argument: "B".into() }), "{defects:?}");

        let mut internal = chain();
        internal.add_link(link("E", "H", Side::Favoring, C, C));
        assert_eq!(
            validate(&internal),
            [Defect::EvidenceOnInternalNode { link: "E".into(), node: "H".into() }]
        );

        let mut dangling = chain();
        dangling.arguments.get_mut("A").unwrap().children.push("ghost".into());
        assert!(validate(&dangling).contains(&Defect::DanglingReference { owner: "A".into(), target: "ghost".into() }));

        let mut role = chain();
        role.nodes.get_mut("H1").unwrap().role = NodeRole::Root;
        assert!(matches!(validate(&role)[..], [Defect::RoleMismatch { .. }]));

        let mut empty = chain();
        empty.arguments.get_mut("A").unwrap().children.clear();
        assert!(validate(&empty).contains(&Defect::EmptyArgument { argument: "A".into() }));

        assert!(matches!(evaluate(&cyc), Err(NetworkError::Invalid(_))));
    }

    #[test]
    fn what_if_examples() {
        let n = chain();
        let mut overrides = BTreeMap::new();
        overrides.insert("H1".to_string(), Some(C));
        assert_eq!(what_if(&n, &overrides).unwrap().probability("H"), Some(C));
        assert_eq!(n.nodes["H1"].assumption, None);

        let assumed = with_assumptions(&n, &overrides).unwrap();
        let mut clear = BTreeMap::new();
        clear.insert("H1".to_string(), None);
        assert_eq!(what_if(&assumed, &clear).unwrap(), evaluate(&n).unwrap());

        let mut unknown = BTreeMap::new();
        unknown.insert("nope".to_string(), Some(C));
        assert_eq!(what_if(&n, &unknown), Err(NetworkError::UnknownNode("nope".into())));
    }

    #[test]
    fn evidence_changes() {
        let base = EvaluatedNetwork::new(h2a()).unwrap();
        let retracted = base.apply(&EvidenceChange::Retract { link: "E3".into() }).unwrap();
        assert_eq!(retracted.result().probability("H2a"), Some(VL));

        let revised = base
            .apply(&EvidenceChange::ReviseCredibility { link: "E1".into(), credibility: BL })
            .unwrap();
        assert_eq!(revised.result().probability("H2a"), Some(BL));

        let added = base.apply(&EvidenceChange::Add(link("E4", "H2a", Side::Favoring, AC, AC))).unwrap();
        let back = added.apply(&EvidenceChange::Retract { link: "E4".into() }).unwrap();
        assert_eq!(back.result(), base.result());
        assert_eq!(back.network(), base.network());

        assert!(matches!(
            base.apply(&EvidenceChange::Retract { link: "nope".into() }),
            Err(NetworkError::UnknownLink(_))
        ));
        assert!(matches!(
            base.apply(&EvidenceChange::Add(link("E1", "H2a", Side::Favoring, C, C))),
            Err(NetworkError::DuplicateLink(_))
        ));
    }

    #[test]
    fn missing_evidence_keeps_leaf_unanswered() {
        let mut n = chain();
        let mut missing = link("M", "H1", Side::Favoring, NS, C);
        missing.missing = true;
        n.add_link(missing);
        let r = evaluate(&n).unwrap();
        assert_eq!(r.coverage("H"), Some(Coverage { answered: 0, total: 1 }));
    }

    #[test]
    fn conflict_is_traced() {
        let mut n = h2a();
        n.evidence_links.get_mut("E3").unwrap().credibility = VL;
        let r = evaluate(&n).unwrap();
        assert_eq!(r.probability("H2a"), Some(NS));
        assert!(r.trace.iter().any(|t| t.operation == Operation::Balance && t.conflict));
    }

    #[test]
    fn compare_competing_examples() {
        let result = EvaluationResult {
            nodes: [("A", L, 3, 3), ("B", L, 1, 4), ("C", BL, 2, 2)]
                .into_iter()
                .map(|(id, p, a, t)| {
                    (
                        id.to_string(),
                        NodeEvaluation {
                            probability: p,
                            favoring: p,
                            disfavoring: NS,
                            coverage: Coverage { answered: a, total: t },
                            assumption_dependent: false,
                            unanswered_leaves: Vec::new(),
                        },
                    )
                })
                .collect(),
            roots: Vec::new(),
            trace: Vec::new(),
        };
        let roots: Vec<String> = ["C", "B", "A"].map(String::from).into();
        let order: Vec<_> = rank_roots(&roots, &result).unwrap().into_iter().map(|r| r.root).collect();
        assert_eq!(order, ["A", "B", "C"]);

        assert_eq!(compare_competing(&chain()).unwrap().len(), 1);

        let mut ties = ArgumentationNetwork::new();
        for id in ["z", "m", "a"] {
            ties.add_node(HypothesisNode::new(id, st(id), NodeRole::Root));
            ties.competing_roots.insert(id.into());
        }
        let order: Vec<_> = compare_competing(&ties).unwrap().into_iter().map(|r| r.root).collect();
        assert_eq!(order, ["a", "m", "z"]);

        assert_eq!(compare_competing(&h2a()), Err(NetworkError::NoCompetingRoots));
    }

    #[test]
    fn serialization_is_sorted_and_round_trips() {
        let n = h2a();
        let json = serde_json::to_string(&n).unwrap();
        let e1 = json.find("\"E1\"").unwrap();
        let e3 = json.find("\"E3\"").unwrap();
        assert!(e1 < e3);
        assert!(json.contains("\"evidence-links\""));
        let back: ArgumentationNetwork = serde_json::from_str(&json).unwrap();
        assert_eq!(back, n);

        let dup = r#"{"nodes":[{"id":"a","statement":"a","role":"root"},{"id":"a","statement":"a","role":"root"}]}"#;
        assert!(serde_json::from_str::<ArgumentationNetwork>(dup).is_err());
    }
}
