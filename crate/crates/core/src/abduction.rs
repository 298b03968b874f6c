//! Rule-based hypothesis generation.
//!
//! [`abduce`] finds every explanation rule whose observable pattern matches an
//! observation. Each candidate is classified along two axes: how many rules
//! competed ([`Coding`]) and what was abduced ([`Form`]). [`multi_step_investigate`]
//! alternates abduction with evidence collection and testing, keeping only the
//! most promising candidates at each step.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::calculus::{SymbolicProbability, AC};
use crate::collection::{
    attach, collect, decompose, generate_requests, CollectionError, CollectionRequest, DecompositionRule,
    EvidenceSource,
};
use crate::network::{competing_order, ArgumentationNetwork, Coverage, EvaluatedNetwork, EvaluationResult, NetworkError, RankedRoot};
use crate::statement::{fresh_entity, instantiate, match_in, Atom, Bindings, Statement, Term};
use crate::{id_map, Keyed, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coding {
    /// Exactly one rule explained the observation.
    Overcoded,
    /// Several rules competed.
    Undercoded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Form {
    Simple,
    /// Posits an entity that was not part of the observation.
    Existential,
    /// Refined with a co-occurring condition from a past case.
    Analogical,
}

/// A cell of the abduction-species table, serialized as e.g. `"existential-undercoded"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Species {
    pub coding: Coding,
    pub form: Form,
}

impl fmt::Display for Species {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let form = match self.form {
            Form::Simple => "simple",
            Form::Existential => "existential",
            Form::Analogical => "analogical",
        };
        let coding = match self.coding {
            Coding::Overcoded => "overcoded",
            Coding::Undercoded => "undercoded",
        };
        write!(f, "{form}-{coding}")
    }
}

impl FromStr for Species {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (form, coding) = s.split_once('-').ok_or_else(|| format!("bad species {s:?}"))?;
        let form = match form {
            "simple" => Form::Simple,
            "existential" => Form::Existential,
            "analogical" => Form::Analogical,
            _ => return Err(format!("bad species {s:?}")),
        };
        let coding = match coding {
            "overcoded" => Coding::Overcoded,
            "undercoded" => Coding::Undercoded,
            _ => return Err(format!("bad species {s:?}")),
        };
        Ok(Species { coding, form })
    }
}

impl Serialize for Species {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Species {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = <alloc::borrow::Cow<'de, str>>::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Prior knowledge "hypothesis → observable".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ExplanationRule {
    pub id: String,
    pub hypothesis: Statement,
    pub observable: Atom,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub species_hints: BTreeSet<Form>,
    pub prior_relevance: SymbolicProbability,
}

impl Keyed for ExplanationRule {
    fn key(&self) -> &str {
        &self.id
    }
}

impl ExplanationRule {
    /// Variables that occur in the hypothesis but not in the observable.
    pub fn existential_variables(&self) -> BTreeSet<&str> {
        let observed: BTreeSet<&str> = self.observable.variables().collect();
        self.hypothesis.variables().filter(|v| !observed.contains(v)).collect()
    }

    pub fn is_existential(&self) -> bool {
        !self.existential_variables().is_empty()
    }
}

/// "In the past when H was true, K was also true."
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CaseRecord {
    pub id: String,
    pub hypothesis: Atom,
    pub co_occurring: Atom,
    #[serde(default)]
    pub note: String,
}

impl Keyed for CaseRecord {
    fn key(&self) -> &str {
        &self.id
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Observation {
    pub id: String,
    pub statement: Statement,
    #[serde(default)]
    pub received_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct HypothesisCandidate {
    pub id: String,
    pub statement: Statement,
    /// Generating explanation rule.
    pub rule: String,
    pub species: Species,
    #[serde(default)]
    pub bindings: Bindings,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fresh_entities: Vec<String>,
    pub prior_relevance: SymbolicProbability,
    /// 1-based abduction step that produced the candidate.
    pub step: usize,
}

impl Keyed for HypothesisCandidate {
    fn key(&self) -> &str {
        &self.id
    }
}

/// Explanation rules, decomposition rules and case records.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct KnowledgeBase {
    #[serde(with = "id_map", default)]
    pub explanation_rules: BTreeMap<String, ExplanationRule>,
    #[serde(with = "id_map", default)]
    pub decomposition_rules: BTreeMap<String, DecompositionRule>,
    #[serde(with = "id_map", default)]
    pub cases: BTreeMap<String, CaseRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AbductionError {
    #[error("observation {0:?} is not ground")]
    NotGround(String),
    #[error("investigation limits must be positive")]
    ZeroLimit,
    #[error("rule {rule:?}: species hints {hints:?} contradict the rule's form {form:?}")]
    InconsistentHints { rule: String, hints: Vec<Form>, form: Form },
    #[error("case {0:?}: hypothesis and co-occurring patterns share no variable")]
    UnlinkedCase(String),
    #[error(transparent)]
    Collection(#[from] CollectionError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

impl KnowledgeBase {
    pub fn validate(&self) -> Vec<AbductionError> {
        let mut problems = Vec::new();
        for rule in self.explanation_rules.values() {
            let form = if rule.is_existential() { Form::Existential } else { Form::Simple };
            let hints = &rule.species_hints;
            let consistent = hints.is_empty()
                || hints.contains(&form)
                || (form == Form::Simple && hints.iter().all(|h| *h != Form::Existential));
            if !consistent {
                problems.push(AbductionError::InconsistentHints {
                    rule: rule.id.clone(),
                    hints: hints.iter().copied().collect(),
                    form,
                });
            }
        }
        for rule in self.decomposition_rules.values() {
            if let Err(e) = rule.validate() {
                problems.push(e.into());
            }
        }
        for case in self.cases.values() {
            let h: BTreeSet<&str> = case.hypothesis.variables().collect();
            if !case.co_occurring.variables().any(|v| h.contains(v)) {
                problems.push(AbductionError::UnlinkedCase(case.id.clone()));
            }
        }
        problems
    }

    pub fn decomposition_rules(&self) -> Vec<DecompositionRule> {
        self.decomposition_rules.values().cloned().collect()
    }
}

/// One candidate per rule whose observable pattern matches the observation,
/// ordered by prior relevance (descending) then rule id.
pub fn abduce(
    observation: &Observation,
    rules: &[ExplanationRule],
) -> Result<Vec<HypothesisCandidate>, AbductionError> {
    abduce_at_step(observation, rules, 1)
}

/// [`abduce`] with fresh entities tagged by `step`.
pub fn abduce_at_step(
    observation: &Observation,
    rules: &[ExplanationRule],
    step: usize,
) -> Result<Vec<HypothesisCandidate>, AbductionError> {
    if !observation.statement.is_ground() {
        return Err(AbductionError::NotGround(observation.id.clone()));
    }
    let matched: Vec<(&ExplanationRule, Bindings)> = rules
        .iter()
        .filter_map(|rule| match_in(&rule.observable, &observation.statement).map(|b| (rule, b)))
        .collect();
    let coding = if matched.len() == 1 { Coding::Overcoded } else { Coding::Undercoded };
    let tag = step.to_string();

    let mut candidates: Vec<HypothesisCandidate> = matched
        .into_iter()
        .map(|(rule, mut bindings)| {
            let observed = bindings.clone();
            let mut fresh_entities = Vec::new();
            let statement = instantiate(&rule.hypothesis, &mut bindings, &mut |var, ty| {
                let name = fresh_entity(var, &tag);
                fresh_entities.push(name.clone());
                Term::Const { name, ty: ty.map(ToString::to_string) }
            });
            let form = if fresh_entities.is_empty() { Form::Simple } else { Form::Existential };
            // keep only the variables the observation bound; fresh ones are listed separately
            bindings.retain(|k, _| observed.contains_key(k));
            HypothesisCandidate {
                id: format!("{}/{}", observation.id, rule.id),
                statement,
                rule: rule.id.clone(),
                species: Species { coding, form },
                bindings,
                fresh_entities,
                prior_relevance: rule.prior_relevance,
                step,
            }
        })
        .collect();
    candidates.sort_by(|a, b| b.prior_relevance.cmp(&a.prior_relevance).then_with(|| a.rule.cmp(&b.rule)));
    Ok(candidates)
}

/// The candidate itself followed by one analogical refinement `H & K` per case
/// whose hypothesis pattern matches it, in case order.
pub fn analogical_refine(candidate: &HypothesisCandidate, cases: &[CaseRecord]) -> Vec<HypothesisCandidate> {
    let mut out = alloc::vec![candidate.clone()];
    let tag = candidate.step.to_string();
    for case in cases {
        let Some(mut bindings) = match_in(&case.hypothesis, &candidate.statement) else {
            continue;
        };
        let mut fresh_entities = candidate.fresh_entities.clone();
        let k = instantiate(&Statement::atom(case.co_occurring.clone()), &mut bindings, &mut |var, ty| {
            let name = fresh_entity(var, &tag);
            fresh_entities.push(name.clone());
            Term::Const { name, ty: ty.map(ToString::to_string) }
        });
        let statement = candidate.statement.conjoin(&k);
        if statement == candidate.statement {
            continue;
        }
        let mut merged = candidate.bindings.clone();
        merged.extend(bindings);
        out.push(HypothesisCandidate {
            id: format!("{}+{}", candidate.id, case.id),
            statement,
            rule: candidate.rule.clone(),
            species: Species { coding: candidate.species.coding, form: Form::Analogical },
            bindings: merged,
            fresh_entities,
            prior_relevance: candidate.prior_relevance,
            step: candidate.step,
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct InvestigationLimits {
    pub max_depth: usize,
    /// `usize::MAX` keeps every candidate.
    pub beam_width: usize,
    pub decomposition_depth: usize,
}

impl Default for InvestigationLimits {
    fn default() -> Self {
        Self { max_depth: 3, beam_width: 1, decomposition_depth: crate::collection::DEFAULT_DECOMPOSITION_DEPTH }
    }
}

/// A candidate after its network has been built, evidenced and evaluated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CandidateAnalysis {
    pub candidate: HypothesisCandidate,
    pub network: ArgumentationNetwork,
    pub requests: Vec<CollectionRequest>,
    pub evaluation: EvaluationResult,
}

impl CandidateAnalysis {
    pub fn ranked(&self) -> RankedRoot {
        let root = &self.evaluation.nodes[&self.candidate.id];
        RankedRoot { root: self.candidate.id.clone(), probability: root.probability, coverage: root.coverage }
    }
}

/// Decomposes a candidate, collects evidence for its leaves from `source`, and
/// evaluates the result.
pub fn analyze_candidate(
    candidate: &HypothesisCandidate,
    rules: &[DecompositionRule],
    decomposition_depth: usize,
    source: &dyn EvidenceSource,
    issued_at: Timestamp,
) -> Result<CandidateAnalysis, AbductionError> {
    let mut network = decompose(candidate, rules, decomposition_depth)?.network;
    let requests = generate_requests(&network, &[source.binding()], &[], issued_at)?;
    let outcome = collect(&network, &requests, source);
    attach(&mut network, &outcome);
    let evaluated = EvaluatedNetwork::new(network)?;
    let (network, evaluation) = evaluated.into_parts();
    Ok(CandidateAnalysis { candidate: candidate.clone(), network, requests: outcome.requests, evaluation })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CandidateSummary {
    pub candidate: String,
    pub probability: SymbolicProbability,
    pub coverage: Coverage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct AbductionStep {
    pub index: usize,
    /// Ids of the observations abduced from: the alert, then the previous survivors.
    pub observations: Vec<String>,
    pub candidates: Vec<HypothesisCandidate>,
    /// Evidence item ids found while testing this step's candidates.
    pub evidence_consulted: Vec<String>,
    /// In competing order.
    pub evaluations: Vec<CandidateSummary>,
    pub selected: Vec<String>,
    pub pruned: Vec<String>,
    /// False when no selected candidate had any answered leaf: the step was
    /// accepted without verification.
    pub verified: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    NoExplanationInKb,
    NoFurtherExplanation,
    DepthLimit,
    Conclusive,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::NoExplanationInKb => "no explanation in KB",
            StopReason::NoFurtherExplanation => "no further explanation",
            StopReason::DepthLimit => "depth limit reached",
            StopReason::Conclusive => "a survivor reached almost certain",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct AbductionTrace {
    pub steps: Vec<AbductionStep>,
    pub stop_reason: StopReason,
    pub candidates_examined: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Investigation {
    pub trace: AbductionTrace,
    /// Final-step survivors in competing order.
    pub survivors: Vec<CandidateAnalysis>,
}

/// Abduce, collect, test and prune, repeatedly: each survivor's statement is the
/// next observation. Stops at `max_depth`, when nothing more can be abduced, or
/// when a survivor reaches "almost certain".
pub fn multi_step_investigate(
    observation: &Observation,
    kb: &KnowledgeBase,
    source: &dyn EvidenceSource,
    limits: InvestigationLimits,
) -> Result<Investigation, AbductionError> {
    if limits.max_depth == 0 || limits.beam_width == 0 || limits.decomposition_depth == 0 {
        return Err(AbductionError::ZeroLimit);
    }
    let rules: Vec<ExplanationRule> = kb.explanation_rules.values().cloned().collect();
    let cases: Vec<CaseRecord> = kb.cases.values().cloned().collect();
    let decomposition = kb.decomposition_rules();

    let mut steps = Vec::new();
    let mut examined = 0usize;
    let mut observations = alloc::vec![observation.clone()];
    let mut survivors: Vec<CandidateAnalysis> = Vec::new();

    for index in 1..=limits.max_depth {
        let mut candidates = Vec::new();
        for obs in &observations {
            for candidate in abduce_at_step(obs, &rules, index)? {
                candidates.extend(analogical_refine(&candidate, &cases));
            }
        }
        if candidates.is_empty() {
            let stop_reason =
                if index == 1 { StopReason::NoExplanationInKb } else { StopReason::NoFurtherExplanation };
            return Ok(Investigation {
                trace: AbductionTrace { steps, stop_reason, candidates_examined: examined },
                survivors,
            });
        }
        examined += candidates.len();

        let mut analyses = candidates
            .iter()
            .map(|c| analyze_candidate(c, &decomposition, limits.decomposition_depth, source, observation.received_at))
            .collect::<Result<Vec<_>, _>>()?;
        analyses.sort_by(|a, b| competing_order(&a.ranked(), &b.ranked()));

        let summaries: Vec<CandidateSummary> = analyses
            .iter()
            .map(|a| {
                let r = a.ranked();
                CandidateSummary { candidate: r.root, probability: r.probability, coverage: r.coverage }
            })
            .collect();
        let keep = limits.beam_width.min(analyses.len());
        let pruned: Vec<String> = analyses[keep..].iter().map(|a| a.candidate.id.clone()).collect();
        analyses.truncate(keep);

        let mut evidence: Vec<String> = Vec::new();
        for analysis in &analyses {
            for link in analysis.network.evidence_links.values() {
                if !link.missing && !evidence.contains(&link.evidence) {
                    evidence.push(link.evidence.clone());
                }
            }
        }
        evidence.sort();
        let verified = analyses.iter().any(|a| a.ranked().coverage.answered > 0);

        steps.push(AbductionStep {
            index,
            observations: observations.iter().map(|o| o.id.clone()).collect(),
            candidates,
            evidence_consulted: evidence,
            evaluations: summaries,
            selected: analyses.iter().map(|a| a.candidate.id.clone()).collect(),
            pruned,
            verified,
        });

        let conclusive = analyses.iter().any(|a| a.ranked().probability >= AC);
        survivors = analyses;
        if conclusive {
            return Ok(Investigation {
                trace: AbductionTrace { steps, stop_reason: StopReason::Conclusive, candidates_examined: examined },
                survivors,
            });
        }
        observations = survivors
            .iter()
            .map(|s| Observation {
                id: s.candidate.id.clone(),
                statement: s.candidate.statement.clone(),
                received_at: observation.received_at,
            })
            .collect();
    }
    Ok(Investigation {
        trace: AbductionTrace { steps, stop_reason: StopReason::DepthLimit, candidates_examined: examined },
        survivors,
    })
}
