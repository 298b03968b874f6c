//! Pipeline stages. Each takes one bundle version and returns the next; none
//! touches storage, so the service can persist every version before moving on.
//!
//! queued -> generating: abduce candidates from the alert.
//! generating -> collecting: decompose and collect evidence per candidate, on a
//! pool of workers.
//! collecting -> analyzing: merge the candidate networks, evaluate, rank.
//! analyzing -> concluded: prune to the beam, record the trace, detect biases.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::panic::{self, AssertUnwindSafe};
use std::sync::Mutex;

use ebr_core::abduction::{
    abduce_at_step, analogical_refine, analyze_candidate, AbductionError, AbductionStep, AbductionTrace,
    CandidateSummary, CaseRecord, ExplanationRule, HypothesisCandidate, StopReason,
};
use ebr_core::bias::{detect_all, BiasError};
use ebr_core::collection::DEFAULT_DECOMPOSITION_DEPTH;
use ebr_core::network::{rank_roots, ArgumentationNetwork, EvaluatedNetwork, NetworkError};

use crate::bundle::{AnalysisBundle, CandidateNetwork, Gate, Mode, Status};
use crate::files::ReferenceKnowledgeBase;
use crate::repository::EvidenceRepository;

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub workers: usize,
    /// Candidates kept after analysis; `usize::MAX` keeps all.
    pub beam_width: usize,
    pub decomposition_depth: usize,
    pub coverage_threshold: f64,
    /// Dispatches per candidate before the stage gives up.
    pub max_attempts: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            workers: 1,
            beam_width: usize::MAX,
            decomposition_depth: DEFAULT_DECOMPOSITION_DEPTH,
            coverage_threshold: ebr_core::bias::DEFAULT_COVERAGE_THRESHOLD,
            max_attempts: 3,
        }
    }
}

/// Test hook: the named candidate's worker panics on its first dispatch.
#[derive(Debug, Default)]
pub struct PanicOnce {
    candidate: Mutex<Option<String>>,
}

impl PanicOnce {
    pub fn new(candidate: Option<String>) -> Self {
        Self { candidate: Mutex::new(candidate) }
    }

    fn trip(&self, candidate: &str) {
        let mut armed = self.candidate.lock().unwrap_or_else(|e| e.into_inner());
        if armed.as_deref() == Some(candidate) {
            *armed = None;
            drop(armed);
            panic!("injected worker crash on {candidate}");
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StageError {
    #[error(transparent)]
    Abduction(#[from] AbductionError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Bias(#[from] BiasError),
    #[error("candidate {candidate:?} failed on all {attempts} dispatches: {reason}")]
    WorkerFailed { candidate: String, attempts: usize, reason: String },
    #[error("stage {0} has nothing to do")]
    NotRunnable(Status),
}

/// Candidates for the alert: one per matching explanation rule, plus any
/// analogical refinements.
pub fn generate(bundle: &AnalysisBundle, kb: &ReferenceKnowledgeBase) -> Result<AnalysisBundle, StageError> {
    let rules: Vec<ExplanationRule> = kb.knowledge.explanation_rules.values().cloned().collect();
    let cases: Vec<CaseRecord> = kb.knowledge.cases.values().cloned().collect();
    let mut candidates = Vec::new();
    for candidate in abduce_at_step(&bundle.alert.observation(), &rules, 1)? {
        candidates.extend(analogical_refine(&candidate, &cases));
    }
    let mut next = bundle.advance(Status::Generating, "generate");
    next.candidates = candidates;
    Ok(next)
}

/// Builds, evidences and evaluates every candidate's network. Candidates are
/// dispatched to `settings.workers` threads; a worker that panics has its
/// candidate put back on the queue.
pub fn collect(
    bundle: &AnalysisBundle,
    kb: &ReferenceKnowledgeBase,
    repository: &EvidenceRepository,
    settings: &Settings,
    fault: &PanicOnce,
) -> Result<AnalysisBundle, StageError> {
    let rules = kb.knowledge.decomposition_rules();
    let results = run_workers(&bundle.candidates, settings, |candidate| {
        fault.trip(&candidate.id);
        analyze_candidate(candidate, &rules, settings.decomposition_depth, repository, bundle.alert.received_at)
    })?;

    let mut next = bundle.advance(Status::Collecting, "collect");
    let mut evidence = BTreeMap::new();
    next.candidate_networks = Vec::with_capacity(results.len());
    for analysis in results.into_values() {
        for link in analysis.network.evidence_links.values() {
            if let Some(item) = repository.items.get(&link.evidence) {
                evidence.insert(item.id.clone(), item.clone());
            }
        }
        next.candidate_networks.push(CandidateNetwork {
            candidate: analysis.candidate.id.clone(),
            network: analysis.network,
            requests: analysis.requests,
        });
    }
    next.evidence = evidence.into_values().collect();
    Ok(next)
}

type Job<'a> = (usize, &'a HypothesisCandidate);

fn run_workers<T: Send>(
    candidates: &[HypothesisCandidate],
    settings: &Settings,
    work: impl Fn(&HypothesisCandidate) -> Result<T, AbductionError> + Sync,
) -> Result<BTreeMap<String, T>, StageError> {
    let queue: Mutex<VecDeque<Job<'_>>> = Mutex::new(candidates.iter().map(|c| (1, c)).collect());
    let results: Mutex<BTreeMap<String, T>> = Mutex::new(BTreeMap::new());
    let failure: Mutex<Option<StageError>> = Mutex::new(None);
    let workers = settings.workers.max(1).min(candidates.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if failure.lock().unwrap_or_else(|e| e.into_inner()).is_some() {
                    return;
                }
                let Some((attempt, candidate)) = queue.lock().unwrap_or_else(|e| e.into_inner()).pop_front() else {
                    return;
                };
                match panic::catch_unwind(AssertUnwindSafe(|| work(candidate))) {
                    Ok(Ok(value)) => {
                        results.lock().unwrap_or_else(|e| e.into_inner()).insert(candidate.id.clone(), value);
                    }
                    Ok(Err(e)) => {
                        failure.lock().unwrap_or_else(|e| e.into_inner()).get_or_insert(e.into());
                    }
                    Err(payload) => {
                        let reason = panic_message(payload.as_ref());
                        tracing::warn!(candidate = %candidate.id, attempt, %reason, "worker crashed; re-dispatching");
                        if attempt >= settings.max_attempts {
                            failure.lock().unwrap_or_else(|e| e.into_inner()).get_or_insert(StageError::WorkerFailed {
                                candidate: candidate.id.clone(),
                                attempts: attempt,
                                reason,
                            });
                        } else {
                            queue.lock().unwrap_or_else(|e| e.into_inner()).push_back((attempt + 1, candidate));
                        }
                    }
                }
            });
        }
    });

    if let Some(e) = failure.into_inner().unwrap_or_else(|e| e.into_inner()) {
        return Err(e);
    }
    Ok(results.into_inner().unwrap_or_else(|e| e.into_inner()))
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "worker panicked".into()
    }
}

/// Merges the candidate networks so their roots compete, then evaluates.
pub fn analyze(bundle: &AnalysisBundle) -> Result<AnalysisBundle, StageError> {
    let mut network = ArgumentationNetwork::new();
    let mut requests = Vec::new();
    for part in &bundle.candidate_networks {
        network.merge(part.network.clone())?;
        requests.extend(part.requests.iter().cloned());
    }
    requests.sort_by(|a, b| a.id.cmp(&b.id));
    let evaluation = EvaluatedNetwork::new(network.clone())?.into_parts().1;
    let ranking =
        if network.competing_roots.is_empty() { Vec::new() } else { rank_roots(&network.competing_roots, &evaluation)? };

    let mut next = bundle.advance(Status::Analyzing, "analyze");
    next.candidate_networks.clear();
    next.network = Some(network);
    next.requests = requests;
    next.evaluation = Some(evaluation);
    next.ranking = ranking;
    Ok(next)
}

/// Keeps the best `beam_width` roots, drops the others' subtrees and requests,
/// and records the abduction step.
pub fn prune(bundle: &mut AnalysisBundle, settings: &Settings) -> Result<(), StageError> {
    let mut network = bundle.network.clone().ok_or(StageError::NotRunnable(bundle.status))?;
    let keep = settings.beam_width.min(bundle.ranking.len());
    let pruned: Vec<String> = bundle.ranking[keep..].iter().map(|r| r.root.clone()).collect();

    let mut removed = BTreeSet::new();
    for root in &pruned {
        removed.extend(network.subtree(root));
        network.competing_roots.remove(root);
    }
    network.nodes.retain(|id, _| !removed.contains(id));
    network.arguments.retain(|_, a| !removed.contains(&a.parent));
    network.evidence_links.retain(|_, l| !removed.contains(&l.parent));
    bundle.requests.retain(|r| !removed.contains(&r.leaf));
    let linked: BTreeSet<String> = network.evidence_links.values().map(|l| l.evidence.clone()).collect();
    bundle.evidence.retain(|i| linked.contains(&i.id));

    let consulted: Vec<String> = network
        .evidence_links
        .values()
        .filter(|l| !l.missing)
        .map(|l| l.evidence.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    bundle.trace = Some(if bundle.candidates.is_empty() {
        AbductionTrace { steps: Vec::new(), stop_reason: StopReason::NoExplanationInKb, candidates_examined: 0 }
    } else {
        AbductionTrace {
            steps: vec![AbductionStep {
                index: 1,
                observations: vec![bundle.alert.id.clone()],
                candidates: bundle.candidates.clone(),
                evidence_consulted: consulted,
                evaluations: bundle
                    .ranking
                    .iter()
                    .map(|r| CandidateSummary { candidate: r.root.clone(), probability: r.probability, coverage: r.coverage })
                    .collect(),
                selected: bundle.ranking[..keep].iter().map(|r| r.root.clone()).collect(),
                pruned: pruned.clone(),
                verified: bundle.ranking[..keep].iter().any(|r| r.coverage.answered > 0),
            }],
            stop_reason: StopReason::DepthLimit,
            candidates_examined: bundle.candidates.len(),
        }
    });

    let evaluation = EvaluatedNetwork::new(network.clone())?.into_parts().1;
    bundle.ranking =
        if network.competing_roots.is_empty() { Vec::new() } else { rank_roots(&network.competing_roots, &evaluation)? };
    bundle.network = Some(network);
    bundle.evaluation = Some(evaluation);
    bundle.pruned = pruned;
    Ok(())
}

/// Bias findings over the pruned analysis.
pub fn findings(bundle: &mut AnalysisBundle, settings: &Settings) -> Result<(), StageError> {
    let (Some(network), Some(evaluation)) = (&bundle.network, &bundle.evaluation) else {
        return Err(StageError::NotRunnable(bundle.status));
    };
    bundle.findings =
        detect_all(network, evaluation, &bundle.requests, bundle.trace.as_ref(), settings.coverage_threshold)?;
    Ok(())
}

/// Everything a stage may read besides the bundle.
pub struct StageInputs<'a> {
    pub kb: &'a ReferenceKnowledgeBase,
    pub repository: &'a EvidenceRepository,
    pub settings: &'a Settings,
    pub fault: &'a PanicOnce,
}

/// Runs the stage the bundle's status calls for. `None` when the bundle waits
/// for a person or is finished.
pub fn step(bundle: &AnalysisBundle, inputs: &StageInputs<'_>) -> Result<Option<AnalysisBundle>, StageError> {
    let next = match bundle.status {
        Status::Queued => generate(bundle, inputs.kb)?,
        Status::Generating => collect(bundle, inputs.kb, inputs.repository, inputs.settings, inputs.fault)?,
        Status::Collecting => analyze(bundle)?,
        Status::Analyzing if bundle.mode == Mode::InTheLoop => {
            let mut next = bundle.advance(Status::AwaitingHuman, "await approval to prune");
            next.gate = Some(Gate::Prune);
            next
        }
        Status::Analyzing => {
            let mut next = bundle.advance(Status::Concluded, "prune and conclude");
            prune(&mut next, inputs.settings)?;
            findings(&mut next, inputs.settings)?;
            next
        }
        Status::AwaitingHuman | Status::Concluded | Status::Parked => return Ok(None),
    };
    Ok(Some(next))
}

/// Approval of an in-the-loop gate: pruning, then conclusion.
pub fn approve(bundle: &AnalysisBundle, settings: &Settings) -> Result<AnalysisBundle, StageError> {
    match (bundle.status, bundle.gate) {
        (Status::AwaitingHuman, Some(Gate::Prune)) => {
            let mut next = bundle.advance(Status::AwaitingHuman, "approved: prune");
            prune(&mut next, settings)?;
            next.gate = Some(Gate::Conclude);
            Ok(next)
        }
        (Status::AwaitingHuman, Some(Gate::Conclude)) => {
            let mut next = bundle.advance(Status::Concluded, "approved: conclude");
            next.gate = None;
            findings(&mut next, settings)?;
            Ok(next)
        }
        (status, _) => Err(StageError::NotRunnable(status)),
    }
}
