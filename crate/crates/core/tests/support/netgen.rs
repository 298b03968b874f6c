//! Random valid networks for property tests.
//!
//! Node `i` may only point at nodes with a larger index, so every generated
//! network is acyclic. Evidence lands on nodes without child arguments.

#![allow(dead_code)]

use ebr_core::calculus::{SymbolicProbability, NS};
use ebr_core::network::{Argument, ArgumentationNetwork, EvidenceChange, EvidenceLink, HypothesisNode, NodeRole, Side};
use ebr_core::statement::Statement;
use proptest::prelude::*;

pub fn probability() -> impl Strategy<Value = SymbolicProbability> {
    (0u8..6).prop_map(|r| SymbolicProbability::from_rank(r).unwrap())
}

pub fn side() -> impl Strategy<Value = Side> {
    any::<bool>().prop_map(|b| if b { Side::Favoring } else { Side::Disfavoring })
}

#[derive(Debug, Clone)]
pub struct ArgSpec {
    pub side: Side,
    pub relevance: SymbolicProbability,
    pub children: Vec<u16>,
}

#[derive(Debug, Clone)]
pub struct LinkSpec {
    pub side: Side,
    pub credibility: SymbolicProbability,
    pub relevance: SymbolicProbability,
    pub missing: bool,
}

#[derive(Debug, Clone)]
pub struct NodeSpec {
    pub arguments: Vec<ArgSpec>,
    pub links: Vec<LinkSpec>,
    pub assumption: Option<SymbolicProbability>,
}

fn arg_spec() -> impl Strategy<Value = ArgSpec> {
    (side(), probability(), prop::collection::vec(any::<u16>(), 1..=3))
        .prop_map(|(side, relevance, children)| ArgSpec { side, relevance, children })
}

pub fn link_spec() -> impl Strategy<Value = LinkSpec> {
    (side(), probability(), probability(), prop::bool::weighted(0.1))
        .prop_map(|(side, credibility, relevance, missing)| LinkSpec { side, credibility, relevance, missing })
}

fn node_spec() -> impl Strategy<Value = NodeSpec> {
    (
        prop::collection::vec(arg_spec(), 0..=2),
        prop::collection::vec(link_spec(), 0..=3),
        prop::option::weighted(0.1, probability()),
    )
        .prop_map(|(arguments, links, assumption)| NodeSpec { arguments, links, assumption })
}

pub fn node_id(i: usize) -> String {
    format!("N{i:02}")
}

pub fn build(specs: &[NodeSpec]) -> ArgumentationNetwork {
    let n = specs.len();
    let mut network = ArgumentationNetwork::new();
    for (i, spec) in specs.iter().enumerate() {
        let statement: Statement = format!("claim(C{i})").parse().unwrap();
        let mut node = HypothesisNode::new(node_id(i), statement, NodeRole::Leaf);
        node.assumption = spec.assumption;
        network.add_node(node);
    }
    for (i, spec) in specs.iter().enumerate() {
        let span = n - 1 - i;
        if span == 0 {
            continue;
        }
        for (a, arg) in spec.arguments.iter().enumerate() {
            let mut children: Vec<String> =
                arg.children.iter().map(|o| node_id(i + 1 + (*o as usize) % span)).collect();
            children.sort();
            children.dedup();
            network.add_argument(Argument {
                id: format!("{}~a{a}", node_id(i)),
                parent: node_id(i),
                side: arg.side,
                relevance: arg.relevance,
                children,
            });
        }
    }
    for (i, spec) in specs.iter().enumerate() {
        let id = node_id(i);
        if network.child_arguments(&id).next().is_some() {
            continue;
        }
        for (l, link) in spec.links.iter().enumerate() {
            network.add_link(EvidenceLink {
                id: format!("{id}#e{l}"),
                parent: id.clone(),
                evidence: format!("e{i}-{l}"),
                side: link.side,
                relevance: link.relevance,
                credibility: if link.missing { NS } else { link.credibility },
                missing: link.missing,
            });
        }
    }
    network.refresh_roles();
    let roots: Vec<String> = network
        .nodes
        .values()
        .filter(|n| n.role == NodeRole::Root)
        .map(|n| n.id.clone())
        .collect();
    network.competing_roots.extend(roots);
    network
}

pub fn network(max_nodes: usize) -> impl Strategy<Value = ArgumentationNetwork> {
    prop::collection::vec(node_spec(), 1..=max_nodes).prop_map(|specs| build(&specs))
}

/// Picks an add, revise or retract from raw choice values. Retract and revise
/// fall back to add when the network has no link.
pub fn change(
    network: &ArgumentationNetwork,
    kind: u8,
    pick: usize,
    link: &LinkSpec,
) -> EvidenceChange {
    let links: Vec<&EvidenceLink> = network.evidence_links.values().collect();
    if links.is_empty() || kind % 3 == 0 {
        let leaves: Vec<&String> = network
            .nodes
            .keys()
            .filter(|id| network.child_arguments(id).next().is_none())
            .collect();
        let leaf = leaves[pick % leaves.len()];
        return EvidenceChange::Add(EvidenceLink {
            id: format!("{leaf}#new"),
            parent: leaf.clone(),
            evidence: "new".into(),
            side: link.side,
            relevance: link.relevance,
            credibility: if link.missing { NS } else { link.credibility },
            missing: link.missing,
        });
    }
    let target = links[pick % links.len()].id.clone();
    if kind % 3 == 1 {
        EvidenceChange::ReviseCredibility { link: target, credibility: link.credibility }
    } else {
        EvidenceChange::Retract { link: target }
    }
}

pub fn change_strategy(
    max_nodes: usize,
) -> impl Strategy<Value = (ArgumentationNetwork, EvidenceChange)> {
    (network(max_nodes), any::<u8>(), any::<usize>(), link_spec())
        .prop_map(|(network, kind, pick, link)| {
            let change = change(&network, kind, pick, &link);
            (network, change)
        })
}
