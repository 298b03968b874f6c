mod support;

use std::collections::{BTreeMap, BTreeSet};

use ebr_core::abduction::{abduce, Coding, ExplanationRule, Form, Observation};
use ebr_core::calculus::{
    balance, combined_indicator, conjoin, disjoin, IndicatorCombination, SymbolicProbability, BL, C, L, NS,
};
use ebr_core::collection::{decompose, generate_requests, InMemorySource, EvidenceSource};
use ebr_core::network::{
    evaluate, validate, what_if, ArgumentationNetwork, EvaluatedNetwork, EvidenceChange, EvidenceLink, Side,
};
use ebr_core::ontology::{assess_credibility, builtin_patterns, indicators, EvidenceItem, EvidenceType, SourceProfile};
use ebr_core::statement::{Atom, Statement, Term};
use ebr_core::Timestamp;
use proptest::prelude::*;
use support::netgen;

fn top_level() -> Vec<IndicatorCombination> {
    vec![
        IndicatorCombination::new([indicators::COMPETENCE, indicators::VERACITY, indicators::ACCURACY], C),
        IndicatorCombination::new([indicators::COMPETENCE, indicators::VERACITY], L),
        IndicatorCombination::new([indicators::VERACITY], BL),
    ]
}

fn present_map() -> impl Strategy<Value = BTreeMap<String, SymbolicProbability>> {
    let names = [indicators::COMPETENCE, indicators::VERACITY, indicators::ACCURACY];
    prop::collection::vec(prop::option::of(netgen::probability()), 3).prop_map(move |values| {
        names
            .iter()
            .zip(values)
            .filter_map(|(n, v)| v.map(|v| (n.to_string(), v)))
            .collect()
    })
}

proptest! {
    #[test]
    fn conjoin_disjoin_are_order_free(mut values in prop::collection::vec(netgen::probability(), 1..12), seed in any::<u64>()) {
        let min = conjoin(&values).unwrap();
        let max = disjoin(&values).unwrap();
        prop_assert_eq!(Some(min), values.iter().copied().min());
        prop_assert_eq!(Some(max), values.iter().copied().max());
        let len = values.len();
        values.rotate_left((seed as usize) % len);
        values.reverse();
        prop_assert_eq!(conjoin(&values).unwrap(), min);
        prop_assert_eq!(disjoin(&values).unwrap(), max);
        let (left, right) = values.split_at(len / 2);
        if !left.is_empty() {
            prop_assert_eq!(conjoin(&[conjoin(left).unwrap(), conjoin(right).unwrap()]).unwrap(), min);
            prop_assert_eq!(disjoin(&[disjoin(left).unwrap(), disjoin(right).unwrap()]).unwrap(), max);
        }
    }

    #[test]
    fn balance_is_monotone(f1 in netgen::probability(), f2 in netgen::probability(), d1 in netgen::probability(), d2 in netgen::probability()) {
        let (flo, fhi) = (f1.min(f2), f1.max(f2));
        let (dlo, dhi) = (d1.min(d2), d1.max(d2));
        prop_assert!(balance(flo, d1) <= balance(fhi, d1));
        prop_assert!(balance(f1, dlo) >= balance(f1, dhi));
        prop_assert_eq!(balance(f1, NS), f1);
        if d1 >= f1 {
            prop_assert_eq!(balance(f1, d1), NS);
        }
    }

    #[test]
    fn combined_indicator_is_monotone(present in present_map(), which in 0usize..3, raise in netgen::probability()) {
        let names = [indicators::COMPETENCE, indicators::VERACITY, indicators::ACCURACY];
        let before = combined_indicator(&top_level(), &present);
        let mut raised = present.clone();
        let slot = raised.entry(names[which].to_string()).or_insert(raise);
        if *slot < raise {
            *slot = raise;
        }
        prop_assert!(combined_indicator(&top_level(), &raised) >= before);
    }

    #[test]
    fn generated_networks_are_valid(network in netgen::network(50)) {
        prop_assert_eq!(validate(&network), vec![]);
        let result = evaluate(&network).unwrap();
        for (id, node) in &result.nodes {
            prop_assert!(node.coverage.answered <= node.coverage.total);
            prop_assert_eq!(node.coverage.total, network.subtree_leaves(id).len());
        }
        prop_assert_eq!(evaluate(&network).unwrap(), result);
    }

    #[test]
    fn serialization_does_not_change_evaluation(network in netgen::network(30)) {
        let text = serde_json::to_string(&network).unwrap();
        let back: ArgumentationNetwork = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &network);
        prop_assert_eq!(serde_json::to_string(&back).unwrap(), text);
        let a = serde_json::to_string(&evaluate(&network).unwrap()).unwrap();
        let b = serde_json::to_string(&evaluate(&back).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn incremental_matches_full((network, change) in netgen::change_strategy(50)) {
        let evaluated = EvaluatedNetwork::new(network).unwrap();
        let updated = evaluated.apply(&change).unwrap();
        let full = evaluate(updated.network()).unwrap();
        prop_assert_eq!(updated.result(), &full);
    }

    #[test]
    fn credibility_moves_ancestors_by_path_polarity(network in netgen::network(40), pick in any::<usize>()) {
        let Some(link) = network.evidence_links.values().nth(pick % network.evidence_links.len().max(1)).cloned() else {
            return Ok(());
        };
        let before = evaluate(&network).unwrap();
        let mut raised = network.clone();
        raised.evidence_links.get_mut(&link.id).unwrap().credibility = C;
        let after = evaluate(&raised).unwrap();
        let polarity = path_polarities(&network, &link.parent);
        for (id, signs) in polarity {
            // a favoring link pushes its leaf up, a disfavoring one pushes it down
            let up = signs.iter().all(|s| *s == (link.side == Side::Favoring));
            let down = signs.iter().all(|s| *s != (link.side == Side::Favoring));
            let (b, a) = (before.nodes[&id].probability, after.nodes[&id].probability);
            if up {
                prop_assert!(a >= b, "{} fell from {} to {}", id, b, a);
            }
            if down {
                prop_assert!(a <= b, "{} rose from {} to {}", id, b, a);
            }
        }
    }

    #[test]
    fn coverage_rises_along_ancestors(network in netgen::network(40), pick in any::<usize>()) {
        let result = evaluate(&network).unwrap();
        let unanswered: Vec<&String> = result
            .nodes
            .iter()
            .filter(|(id, n)| network.is_leaf(id) && n.coverage.answered == 0)
            .map(|(id, _)| id)
            .collect();
        if unanswered.is_empty() {
            return Ok(());
        }
        let leaf = unanswered[pick % unanswered.len()].clone();
        let mut changed = network.clone();
        changed.add_link(EvidenceLink {
            id: format!("{leaf}#fresh"),
            parent: leaf.clone(),
            evidence: "fresh".into(),
            side: Side::Favoring,
            relevance: C,
            credibility: L,
            missing: false,
        });
        let after = evaluate(&changed).unwrap();
        let ancestors = path_polarities(&network, &leaf);
        for (id, node) in &result.nodes {
            let new = &after.nodes[id];
            prop_assert_eq!(new.coverage.total, node.coverage.total);
            let expected = node.coverage.answered + ancestors.contains_key(id) as usize;
            prop_assert_eq!(new.coverage.answered, expected, "node {}", id);
        }
    }

    #[test]
    fn assumption_round_trip(network in netgen::network(30), pick in any::<usize>(), value in netgen::probability()) {
        let ids: Vec<&String> = network.nodes.keys().collect();
        let id = ids[pick % ids.len()].clone();
        let baseline = evaluate(&network).unwrap();
        let set = what_if(&network, &BTreeMap::from([(id.clone(), Some(value))])).unwrap();
        prop_assert_eq!(set.nodes[&id].probability, value);
        prop_assert!(set.nodes[&id].assumption_dependent);
        for ancestor in path_polarities(&network, &id).keys() {
            prop_assert!(set.nodes[ancestor].assumption_dependent);
        }
        let original = network.nodes[&id].assumption;
        let restored = what_if(&network, &BTreeMap::from([(id.clone(), original)])).unwrap();
        prop_assert_eq!(restored, baseline);
    }

    #[test]
    fn bare_networks_evaluate_to_no_support(network in netgen::network(30)) {
        let mut bare = network.clone();
        bare.evidence_links.clear();
        for node in bare.nodes.values_mut() {
            node.assumption = None;
        }
        let result = evaluate(&bare).unwrap();
        prop_assert!(result.nodes.values().all(|n| n.probability == NS && n.coverage.answered == 0));
    }
}

/// For every node whose subtree contains `leaf`, the set of path signs from it
/// down to `leaf` (true = even number of disfavoring arguments).
fn path_polarities(network: &ArgumentationNetwork, leaf: &str) -> BTreeMap<String, BTreeSet<bool>> {
    let mut memo: BTreeMap<String, BTreeSet<bool>> = BTreeMap::new();
    fn walk(
        network: &ArgumentationNetwork,
        node: &str,
        leaf: &str,
        memo: &mut BTreeMap<String, BTreeSet<bool>>,
    ) -> BTreeSet<bool> {
        if node == leaf {
            return BTreeSet::from([true]);
        }
        if let Some(known) = memo.get(node) {
            return known.clone();
        }
        let mut signs = BTreeSet::new();
        for argument in network.child_arguments(node) {
            for child in &argument.children {
                for sign in walk(network, child, leaf, memo) {
                    signs.insert(if argument.side == Side::Disfavoring { !sign } else { sign });
                }
            }
        }
        memo.insert(node.to_string(), signs.clone());
        signs
    }
    let mut out = BTreeMap::new();
    for id in network.nodes.keys() {
        let signs = walk(network, id, leaf, &mut memo);
        if !signs.is_empty() {
            out.insert(id.clone(), signs);
        }
    }
    out
}

// ---- credibility: recursive assessment against a flattened brute force ----

const REDUCED: [Option<SymbolicProbability>; 4] = [None, Some(NS), Some(L), Some(C)];

/// Literal reading of the pattern: for each parent, try every subset of its
/// present children, keep the subsets that appear in the table, and take the
/// best capped conjunction.
fn brute_force(
    pattern: &ebr_core::ontology::CredibilityPattern,
    leaves: &BTreeMap<String, SymbolicProbability>,
    indicator: &str,
) -> Option<SymbolicProbability> {
    if let Some(v) = leaves.get(indicator) {
        return Some(*v);
    }
    let children = pattern.children.get(indicator)?;
    let values: Vec<(String, Option<SymbolicProbability>)> =
        children.iter().map(|c| (c.clone(), brute_force(pattern, leaves, c))).collect();
    if values.iter().all(|(_, v)| v.is_none()) {
        return None;
    }
    let table = &pattern.combinations[indicator];
    let mut best: Option<SymbolicProbability> = None;
    for mask in 1u32..(1 << values.len()) {
        let subset: BTreeSet<&str> =
            (0..values.len()).filter(|i| mask & (1 << i) != 0).map(|i| values[i].0.as_str()).collect();
        let Some(combo) = table.iter().find(|c| c.indicators.iter().map(String::as_str).collect::<BTreeSet<_>>() == subset)
        else {
            continue;
        };
        let mut conj = combo.relevance;
        let mut ok = true;
        for i in 0..values.len() {
            if mask & (1 << i) != 0 {
                match values[i].1 {
                    Some(v) => conj = conj.min(v),
                    None => ok = false,
                }
            }
        }
        if ok {
            best = Some(best.map_or(conj, |b| b.max(conj)));
        }
    }
    Some(best.unwrap_or(NS))
}

#[test]
fn nested_credibility_matches_flattened_enumeration() {
    let pattern = builtin_patterns().into_iter().find(|p| p.applicable_type == EvidenceType::TestimonialDirect).unwrap();
    let leaves = pattern.leaf_indicators();
    assert_eq!(leaves.len(), 7);
    let item = EvidenceItem {
        id: "t".into(),
        kind: EvidenceType::TestimonialDirect,
        statement: "saw(Ship1)".parse().unwrap(),
        source: Some("s".into()),
        observed_at: Timestamp(0),
        recorded_at: Timestamp(0),
        credibility: NS,
        provenance_note: String::new(),
        bears_on: Vec::new(),
    };
    let mut checked = 0;
    for code in 0..4usize.pow(leaves.len() as u32) {
        let mut profile = SourceProfile::new("s", "source");
        let mut assigned = BTreeMap::new();
        let mut rest = code;
        for leaf in &leaves {
            if let Some(v) = REDUCED[rest % 4] {
                profile = profile.assess(leaf.clone(), v, "note");
                assigned.insert(leaf.clone(), v);
            }
            rest /= 4;
        }
        let engine = assess_credibility(&item, &profile, &pattern).unwrap().credibility;
        let oracle = brute_force(&pattern, &assigned, &pattern.root).unwrap_or(pattern.default_credibility);
        assert_eq!(engine, oracle, "assignment {assigned:?}");
        checked += 1;
    }
    assert_eq!(checked, 16_384);
}

#[test]
fn credibility_never_drops_when_an_indicator_is_added() {
    let pattern = builtin_patterns().into_iter().find(|p| p.applicable_type == EvidenceType::TestimonialDirect).unwrap();
    let item = EvidenceItem {
        id: "t".into(),
        kind: EvidenceType::TestimonialDirect,
        statement: "saw(Ship1)".parse().unwrap(),
        source: Some("s".into()),
        observed_at: Timestamp(0),
        recorded_at: Timestamp(0),
        credibility: NS,
        provenance_note: String::new(),
        bears_on: Vec::new(),
    };
    let names = [indicators::COMPETENCE, indicators::VERACITY, indicators::ACCURACY];
    let options: Vec<Option<SymbolicProbability>> =
        std::iter::once(None).chain(SymbolicProbability::ALL.into_iter().map(Some)).collect();
    let assess = |values: &[Option<SymbolicProbability>]| {
        let mut profile = SourceProfile::new("s", "source");
        for (name, v) in names.iter().zip(values) {
            if let Some(v) = v {
                profile = profile.assess(*name, *v, "note");
            }
        }
        assess_credibility(&item, &profile, &pattern).unwrap().credibility
    };
    for a in &options {
        for b in &options {
            for c in &options {
                let base = [*a, *b, *c];
                let value = assess(&base);
                for slot in 0..3 {
                    for raised in SymbolicProbability::ALL {
                        if base[slot].is_some_and(|v| v > raised) {
                            continue;
                        }
                        let mut up = base;
                        up[slot] = Some(raised);
                        assert!(assess(&up) >= value, "{base:?} -> {up:?}");
                    }
                }
            }
        }
    }
}

// ---- abduction ----

fn term(var: bool, name: u8, ty: Option<u8>) -> Term {
    let ty = ty.map(|t| ["ship", "time"][t as usize % 2].to_string());
    if var {
        Term::Var { name: format!("V{}", name % 3), ty }
    } else {
        Term::Const { name: format!("K{}", name % 3), ty }
    }
}

fn pattern_atom() -> impl Strategy<Value = Atom> {
    (0u8..3, prop::collection::vec((any::<bool>(), any::<u8>(), prop::option::of(0u8..2)), 1..=2)).prop_map(
        |(p, args)| Atom::new(format!("p{p}"), args.into_iter().map(|(v, n, t)| term(v, n, t)).collect()),
    )
}

fn ground_atom() -> impl Strategy<Value = Atom> {
    (0u8..3, prop::collection::vec((any::<u8>(), prop::option::of(0u8..2)), 1..=2))
        .prop_map(|(p, args)| Atom::new(format!("p{p}"), args.into_iter().map(|(n, t)| term(false, n, t)).collect()))
}

/// Independent syntactic matcher: same predicate and arity, constants equal,
/// each variable bound to one constant name, types equal when both present.
fn oracle_matches(pattern: &Atom, ground: &Atom) -> bool {
    if pattern.predicate != ground.predicate || pattern.args.len() != ground.args.len() {
        return false;
    }
    // a variable stands for one name, and every type seen at its positions must agree
    let mut names: BTreeMap<&str, &str> = BTreeMap::new();
    let mut types: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for (p, g) in pattern.args.iter().zip(&ground.args) {
        if let (Some(a), Some(b)) = (p.ty(), g.ty()) {
            if a != b {
                return false;
            }
        }
        if p.is_var() {
            if *names.entry(p.name()).or_insert(g.name()) != g.name() {
                return false;
            }
            types.entry(p.name()).or_default().extend(p.ty().into_iter().chain(g.ty()));
        } else if p.name() != g.name() {
            return false;
        }
    }
    types.values().all(|t| t.len() <= 1)
}

fn explanation_rules() -> impl Strategy<Value = Vec<ExplanationRule>> {
    prop::collection::vec((pattern_atom(), pattern_atom(), netgen::probability()), 0..6).prop_map(|rules| {
        rules
            .into_iter()
            .enumerate()
            .map(|(i, (hypothesis, observable, prior))| ExplanationRule {
                id: format!("r{i}"),
                hypothesis: Statement::atom(hypothesis),
                observable,
                species_hints: BTreeSet::new(),
                prior_relevance: prior,
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn abduce_is_complete_and_consistently_tagged(rules in explanation_rules(), atoms in prop::collection::vec(ground_atom(), 1..=2)) {
        let observation = Observation {
            id: "obs".into(),
            statement: Statement::new(atoms.clone()).unwrap(),
            received_at: Timestamp(0),
        };
        let candidates = abduce(&observation, &rules).unwrap();
        let expected: BTreeSet<&str> = rules
            .iter()
            .filter(|r| atoms.iter().any(|a| oracle_matches(&r.observable, a)))
            .map(|r| r.id.as_str())
            .collect();
        let produced: BTreeSet<&str> = candidates.iter().map(|c| c.rule.as_str()).collect();
        prop_assert_eq!(&produced, &expected);
        prop_assert_eq!(candidates.len(), expected.len());
        for pair in candidates.windows(2) {
            prop_assert!((pair[0].prior_relevance, std::cmp::Reverse(&pair[0].rule)) >= (pair[1].prior_relevance, std::cmp::Reverse(&pair[1].rule)));
        }
        for c in &candidates {
            prop_assert_eq!(c.species.coding == Coding::Undercoded, candidates.len() >= 2);
            prop_assert_eq!(c.species.form == Form::Existential, !c.fresh_entities.is_empty());
            prop_assert!(c.statement.is_ground());
        }
        prop_assert_eq!(abduce(&observation, &rules).unwrap(), candidates);
    }

    #[test]
    fn requests_cover_every_leaf_once_per_source(depth in 1usize..4, fanout in 1usize..4) {
        let rules: Vec<_> = (0..fanout)
            .map(|i| ebr_core::collection::DecompositionRule {
                id: format!("d{i}"),
                parent: "p(?x)".parse().unwrap(),
                side: if i % 2 == 0 { Side::Favoring } else { Side::Disfavoring },
                relevance: L,
                children: vec![format!("p(?x) & q{i}(?x)").parse().unwrap()],
                fresh: Vec::new(),
            })
            .collect();
        let root = abduce(
            &Observation { id: "o".into(), statement: "e(A)".parse().unwrap(), received_at: Timestamp(0) },
            &[ExplanationRule {
                id: "h".into(),
                hypothesis: "p(?x)".parse().unwrap(),
                observable: "e(?x)".parse().unwrap(),
                species_hints: BTreeSet::new(),
                prior_relevance: C,
            }],
        )
        .unwrap()
        .remove(0);
        let decomposition = decompose(&root, &rules, depth).unwrap();
        prop_assert_eq!(validate(&decomposition.network), vec![]);
        prop_assert_eq!(decomposition.justifications.len(), decomposition.network.arguments.len());
        let sources = [InMemorySource::new("a", Vec::new()).binding(), InMemorySource::new("b", Vec::new()).binding()];
        let requests = generate_requests(&decomposition.network, &sources, &[], Timestamp(0)).unwrap();
        let leaves = ebr_core::collection::leaves(&decomposition.network);
        prop_assert_eq!(leaves.len(), fanout.pow(depth as u32));
        for source in &sources {
            let per: Vec<&str> = requests.iter().filter(|r| r.source == source.id).map(|r| r.leaf.as_str()).collect();
            prop_assert_eq!(per, leaves.iter().map(String::as_str).collect::<Vec<_>>());
        }
    }
}

#[test]
fn change_round_trip() {
    let mut runner = proptest::test_runner::TestRunner::default();
    runner
        .run(&(netgen::network(30), netgen::link_spec(), any::<usize>()), |(network, link, pick)| {
            let evaluated = EvaluatedNetwork::new(network).unwrap();
            let EvidenceChange::Add(added) = netgen::change(evaluated.network(), 0, pick, &link) else {
                unreachable!()
            };
            let id = added.id.clone();
            let there = evaluated.apply(&EvidenceChange::Add(added)).unwrap();
            let back = there.apply(&EvidenceChange::Retract { link: id }).unwrap();
            prop_assert_eq!(back.result(), evaluated.result());
            Ok(())
        })
        .unwrap();
}

#[test]
fn item_with_source_binding_is_queryable() {
    let item = EvidenceItem {
        id: "i".into(),
        kind: EvidenceType::TangibleReal,
        statement: "p(A)".parse().unwrap(),
        source: None,
        observed_at: Timestamp(0),
        recorded_at: Timestamp(0),
        credibility: L,
        provenance_note: String::new(),
        bears_on: Vec::new(),
    };
    let source = InMemorySource::new("s", vec![item]);
    assert_eq!(source.query(&"p(A)".parse().unwrap()).unwrap().len(), 1);
    assert!(source.query(&"p(B)".parse().unwrap()).unwrap().is_empty());
}
