//! The analysis service: alert intake, the staged pipeline with its human
//! gates, persistence, evidence ingestion and reports.
//!
//! Layout under the data directory:
//! `kb/<version>.json` and `kb/current`, `repository.json`, and
//! `bundles/<id>.log` plus `bundles/<id>.json`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use ebr_core::calculus::SymbolicProbability;
use ebr_core::collection::{changes_for_event, ChangeEvent, ChangeKind, Monitor};
use ebr_core::network::{rank_roots, with_assumptions, EvaluatedNetwork, EvaluationResult, NetworkError};
use ebr_core::ontology::{assess_credibility, Assessment, CredibilityPattern, EvidenceItem, SourceProfile};
use serde::{Deserialize, Serialize};

use crate::bundle::{AnalysisBundle, Mode, Parked, Status};
use crate::files::{read_json, write_atomic, write_json_atomic, Alert, EvidenceRepositoryFile, FileError, ReferenceKnowledgeBase};
use crate::pipeline::{self, PanicOnce, Settings, StageInputs};
use crate::report::{generate_report, render_text, ReportError, StructuredReport};
use crate::repository::{EvidenceRepository, RepositoryError};
use crate::store::{BundleStore, StoreError};

/// Veto window in on-the-loop mode unless configured otherwise.
pub const DEFAULT_ON_THE_LOOP_WINDOW: Duration = Duration::from_secs(30);

/// Fault injection for crash-safety tests.
#[derive(Debug, Clone, Default)]
pub struct Faults {
    /// Stop right after a version with this status has been persisted.
    pub crash_after: Option<Status>,
    /// Abort the process at that point instead of shutting the service down.
    pub abort_process: bool,
    /// The named candidate's first worker dispatch panics.
    pub panic_once: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Config {
    pub data_dir: PathBuf,
    pub mode: Mode,
    pub settings: Settings,
    /// On-the-loop veto window; `None` uses [`DEFAULT_ON_THE_LOOP_WINDOW`].
    pub veto_window: Option<Duration>,
    /// Run pipelines on background threads instead of the calling thread.
    pub background: bool,
    pub faults: Faults,
}

impl Config {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            mode: Mode::Autonomous,
            settings: Settings::default(),
            veto_window: None,
            background: false,
            faults: Faults::default(),
        }
    }

    fn window(&self, mode: Mode) -> Duration {
        match mode {
            Mode::OnTheLoop => self.veto_window.unwrap_or(DEFAULT_ON_THE_LOOP_WINDOW),
            Mode::Autonomous | Mode::InTheLoop => Duration::ZERO,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Conflict(String),
    #[error("no knowledge base is loaded")]
    NoKnowledgeBase,
    #[error("service stopped by an injected crash")]
    Crashed,
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    File(#[from] FileError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl From<RepositoryError> for ServiceError {
    fn from(e: RepositoryError) -> Self {
        ServiceError::BadRequest(e.to_string())
    }
}

impl From<ReportError> for ServiceError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::NotEvaluated(_) => ServiceError::Conflict(e.to_string()),
            other => ServiceError::BadRequest(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Submitted {
    pub id: String,
    /// False when an identical earlier submission was found.
    pub created: bool,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct AnalysisSummary {
    pub id: String,
    pub version: u64,
    pub status: Status,
    pub mode: Mode,
    pub kb_version: String,
    pub alert: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct VetoState {
    pub open: bool,
    /// Milliseconds left in the open window.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remaining_ms: Option<u64>,
}

#[derive(Debug)]
struct VetoWindow {
    closes: Instant,
    reason: Option<String>,
}

#[derive(Debug, Default)]
struct KbState {
    current: Option<String>,
    loaded: BTreeMap<String, Arc<ReferenceKnowledgeBase>>,
}

#[derive(Debug, Default)]
struct Index {
    dedup: BTreeMap<String, String>,
    next: u64,
}

struct Inner {
    config: Config,
    store: BundleStore,
    kbs: Mutex<KbState>,
    repository: Mutex<EvidenceRepository>,
    monitor: Mutex<Monitor>,
    index: Mutex<Index>,
    locks: Mutex<BTreeMap<String, Arc<Mutex<()>>>>,
    cache: Mutex<BTreeMap<String, (u64, Arc<EvaluatedNetwork>)>>,
    vetoes: Mutex<BTreeMap<String, VetoWindow>>,
    veto_signal: Condvar,
    running: Mutex<BTreeSet<String>>,
    crashed: AtomicBool,
    fault: PanicOnce,
}

#[derive(Clone)]
pub struct Service {
    inner: Arc<Inner>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

fn dedup_key(alert: &Alert, kb_version: &str) -> String {
    format!("{kb_version}\n{}", serde_json::to_string(alert).expect("alerts serialize"))
}

fn valid_version(version: &str) -> bool {
    !version.is_empty()
        && version.len() <= 64
        && version.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_'))
        && !version.starts_with('.')
}

impl Service {
    /// Opens (or initializes) the data directory and rebuilds in-memory state
    /// from it. Interrupted analyses are not restarted until
    /// [`Service::resume_pending`] is called.
    pub fn open(config: Config) -> Result<Self, ServiceError> {
        let root = config.data_dir.clone();
        fs::create_dir_all(root.join("kb")).map_err(|source| ServiceError::Io { path: root.join("kb"), source })?;
        let store = BundleStore::open(&root)?;

        let mut kbs = KbState::default();
        let current_path = root.join("kb/current");
        if current_path.exists() {
            let version = fs::read_to_string(&current_path)
                .map_err(|source| ServiceError::Io { path: current_path.clone(), source })?
                .trim()
                .to_string();
            kbs.current = Some(version);
        }

        let repo_path = root.join("repository.json");
        let repository = if repo_path.exists() {
            EvidenceRepository::from_file(read_json::<EvidenceRepositoryFile>(&repo_path)?)
        } else {
            EvidenceRepository::default()
        };

        let mut index = Index::default();
        let mut monitor = Monitor::new();
        for id in store.ids()? {
            let Some(bundle) = store.latest(&id)? else { continue };
            if let Some(n) = id.strip_prefix('A').and_then(|n| n.parse::<u64>().ok()) {
                index.next = index.next.max(n);
            }
            index.dedup.insert(dedup_key(&bundle.alert, &bundle.kb_version), id.clone());
            if bundle.network.is_some() {
                monitor.register_from(&id, bundle.sequence);
                for request in &bundle.requests {
                    monitor.subscribe(&id, request.query.clone()).expect("registered above");
                }
            }
        }

        let fault = PanicOnce::new(config.faults.panic_once.clone());
        let service = Service {
            inner: Arc::new(Inner {
                config,
                store,
                kbs: Mutex::new(kbs),
                repository: Mutex::new(repository),
                monitor: Mutex::new(monitor),
                index: Mutex::new(index),
                locks: Mutex::new(BTreeMap::new()),
                cache: Mutex::new(BTreeMap::new()),
                vetoes: Mutex::new(BTreeMap::new()),
                veto_signal: Condvar::new(),
                running: Mutex::new(BTreeSet::new()),
                crashed: AtomicBool::new(false),
                fault,
            }),
        };
        if let Some(version) = service.current_kb_version() {
            service.kb_version(&version)?;
        }
        Ok(service)
    }

    pub fn config(&self) -> &Config {
        &self.inner.config
    }

    fn data(&self, rel: &str) -> PathBuf {
        self.inner.config.data_dir.join(rel)
    }

    fn check_alive(&self) -> Result<(), ServiceError> {
        if self.inner.crashed.load(Ordering::SeqCst) {
            Err(ServiceError::Crashed)
        } else {
            Ok(())
        }
    }

    // ---- knowledge bases ----

    pub fn current_kb_version(&self) -> Option<String> {
        lock(&self.inner.kbs).current.clone()
    }

    /// The knowledge base with the given version, loading it on first use.
    pub fn kb_version(&self, version: &str) -> Result<Arc<ReferenceKnowledgeBase>, ServiceError> {
        if let Some(kb) = lock(&self.inner.kbs).loaded.get(version) {
            return Ok(kb.clone());
        }
        if !valid_version(version) {
            return Err(ServiceError::NotFound(format!("knowledge base version {version:?}")));
        }
        let path = self.data(&format!("kb/{version}.json"));
        if !path.exists() {
            return Err(ServiceError::NotFound(format!("knowledge base version {version:?}")));
        }
        let kb = Arc::new(ReferenceKnowledgeBase::load(&path)?);
        lock(&self.inner.kbs).loaded.insert(version.to_string(), kb.clone());
        Ok(kb)
    }

    pub fn kb(&self) -> Result<Arc<ReferenceKnowledgeBase>, ServiceError> {
        let version = self.current_kb_version().ok_or(ServiceError::NoKnowledgeBase)?;
        self.kb_version(&version)
    }

    /// Stores a new knowledge-base version and makes it current. Versions are
    /// immutable: re-sending an identical one is accepted, changing one is not.
    pub fn put_kb(&self, kb: ReferenceKnowledgeBase) -> Result<String, ServiceError> {
        if !valid_version(&kb.version) {
            return Err(ServiceError::BadRequest(format!(
                "version {:?} must be 1-64 characters from [A-Za-z0-9._-]",
                kb.version
            )));
        }
        let problems = kb.problems();
        if !problems.is_empty() {
            return Err(ServiceError::BadRequest(format!("knowledge base is invalid: {}", problems.join("; "))));
        }
        let version = kb.version.clone();
        match self.kb_version(&version) {
            Ok(existing) if *existing != kb => {
                return Err(ServiceError::Conflict(format!(
                    "knowledge base version {version:?} already exists with different content"
                )))
            }
            Ok(_) => {}
            Err(ServiceError::NotFound(_)) => {
                write_json_atomic(&self.data(&format!("kb/{version}.json")), &kb)?;
            }
            Err(e) => return Err(e),
        }
        write_atomic(&self.data("kb/current"), format!("{version}\n").as_bytes())?;

        {
            let mut repository = lock(&self.inner.repository);
            let mut changed = false;
            for (id, profile) in &kb.source_profiles {
                if !repository.profiles.contains_key(id) {
                    repository.profiles.insert(id.clone(), profile.clone());
                    changed = true;
                }
            }
            if changed {
                write_json_atomic(&self.data("repository.json"), &repository.to_file())?;
            }
        }
        let mut kbs = lock(&self.inner.kbs);
        kbs.loaded.insert(version.clone(), Arc::new(kb));
        kbs.current = Some(version.clone());
        Ok(version)
    }

    /// Credibility patterns of the current knowledge base, or the built-in
    /// ones when none is loaded.
    pub fn patterns(&self) -> BTreeMap<String, CredibilityPattern> {
        match self.kb() {
            Ok(kb) => kb.patterns(),
            Err(_) => ReferenceKnowledgeBase::new("", Default::default()).patterns(),
        }
    }

    // ---- evidence repository ----

    /// Replaces the repository with the file's profiles and items, assessing
    /// each item. No monitor events are emitted.
    pub fn import_repository(&self, file: EvidenceRepositoryFile) -> Result<(), ServiceError> {
        let patterns = self.patterns();
        let mut repository = EvidenceRepository { items: BTreeMap::new(), profiles: file.source_profiles };
        if let Ok(kb) = self.kb() {
            for (id, profile) in &kb.source_profiles {
                repository.profiles.entry(id.clone()).or_insert_with(|| profile.clone());
            }
        }
        for item in file.items.values() {
            repository.store(item, &patterns)?;
        }
        write_json_atomic(&self.data("repository.json"), &repository.to_file())?;
        *lock(&self.inner.repository) = repository;
        Ok(())
    }

    pub fn repository(&self) -> EvidenceRepository {
        lock(&self.inner.repository).clone()
    }

    /// Credibility of `item` under `profile` (or its source's stored profile).
    pub fn assess(&self, item: &EvidenceItem, profile: Option<SourceProfile>) -> Result<Assessment, ServiceError> {
        let patterns = self.patterns();
        let pattern = patterns
            .values()
            .find(|p| p.applicable_type == item.kind)
            .ok_or_else(|| ServiceError::BadRequest(format!("no credibility pattern applies to {}", item.kind)))?;
        let profile = match profile {
            Some(p) => p,
            None => match &item.source {
                Some(source) => lock(&self.inner.repository)
                    .profiles
                    .get(source)
                    .cloned()
                    .ok_or_else(|| ServiceError::NotFound(format!("source profile {source:?}")))?,
                None => SourceProfile::anonymous(),
            },
        };
        assess_credibility(item, &profile, pattern).map_err(|e| ServiceError::BadRequest(e.to_string()))
    }

    /// Stores an item and brings every analysis it bears on up to date.
    /// Returns the ids of those analyses.
    pub fn ingest_evidence(&self, item: EvidenceItem) -> Result<Vec<String>, ServiceError> {
        self.check_alive()?;
        let patterns = self.patterns();
        let stored = {
            let mut repository = lock(&self.inner.repository);
            let mut updated = repository.clone();
            let stored = updated.store(&item, &patterns)?;
            if stored.change.is_some() {
                write_json_atomic(&self.data("repository.json"), &updated.to_file())?;
                *repository = updated;
            }
            stored
        };
        let Some(change) = stored.change else { return Ok(Vec::new()) };
        self.dispatch(change, &[stored.item])
    }

    /// Replaces a source profile, re-assesses the items citing it and updates
    /// the analyses those items bear on.
    pub fn update_profile(&self, profile: SourceProfile) -> Result<Vec<String>, ServiceError> {
        self.check_alive()?;
        let patterns = self.patterns();
        let revised = {
            let mut repository = lock(&self.inner.repository);
            let mut updated = repository.clone();
            let revised = updated.update_profile(profile, &patterns)?;
            write_json_atomic(&self.data("repository.json"), &updated.to_file())?;
            *repository = updated;
            revised
        };
        self.dispatch(ChangeKind::Revised, &revised)
    }

    fn dispatch(&self, change: ChangeKind, items: &[EvidenceItem]) -> Result<Vec<String>, ServiceError> {
        let mut affected = BTreeSet::new();
        for item in items {
            let events = lock(&self.inner.monitor).observe(change, item);
            for event in events {
                self.apply_event(&event)?;
                affected.insert(event.analysis.clone());
            }
        }
        Ok(affected.into_iter().collect())
    }

    fn apply_event(&self, event: &ChangeEvent) -> Result<(), ServiceError> {
        let analysis_lock = self.analysis_lock(&event.analysis);
        let _guard = lock(&analysis_lock);
        let bundle = self.latest(&event.analysis)?;
        if event.sequence <= bundle.sequence || bundle.network.is_none() {
            return Ok(());
        }
        let mut evaluated = self.evaluated(&bundle)?;
        let network = evaluated.network().clone();
        let (changes, requests) = changes_for_event(&network, &bundle.requests, event);
        for change in &changes {
            evaluated = Arc::new(evaluated.apply(change).map_err(|e| ServiceError::Conflict(e.to_string()))?);
        }
        let verb = match event.change {
            ChangeKind::Added => "added",
            ChangeKind::Revised => "revised",
        };
        let mut next = bundle.advance(bundle.status, &format!("evidence {} {verb}", event.item.id));
        next.sequence = event.sequence;
        next.requests = requests;
        if !changes.is_empty() {
            next.evidence.retain(|i| i.id != event.item.id);
            next.evidence.push(event.item.clone());
            next.evidence.sort_by(|a, b| a.id.cmp(&b.id));
        }
        self.install(&mut next, evaluated)?;
        self.persist(&next)
    }

    // ---- analyses ----

    /// Creates a queued analysis for `alert` against the current knowledge
    /// base, or returns the existing one for an identical submission.
    pub fn submit_alert(&self, alert: Alert) -> Result<Submitted, ServiceError> {
        self.check_alive()?;
        alert.check().map_err(ServiceError::BadRequest)?;
        let kb_version = self.current_kb_version().ok_or(ServiceError::NoKnowledgeBase)?;
        let key = dedup_key(&alert, &kb_version);
        let mut index = lock(&self.inner.index);
        if let Some(id) = index.dedup.get(&key) {
            let status = self.latest(id)?.status;
            return Ok(Submitted { id: id.clone(), created: false, status });
        }
        let id = format!("A{:04}", index.next + 1);
        let bundle = AnalysisBundle::new(id.clone(), kb_version, alert, self.inner.config.mode);
        self.inner.store.append(&bundle)?;
        index.next += 1;
        index.dedup.insert(key, id.clone());
        Ok(Submitted { id, created: true, status: bundle.status })
    }

    pub fn get_analysis(&self, id: &str) -> Result<AnalysisBundle, ServiceError> {
        self.latest(id)
    }

    pub fn history(&self, id: &str) -> Result<Vec<AnalysisBundle>, ServiceError> {
        let history = self.inner.store.history(id)?;
        if history.is_empty() {
            return Err(ServiceError::NotFound(format!("analysis {id:?}")));
        }
        Ok(history)
    }

    pub fn list(&self) -> Result<Vec<AnalysisSummary>, ServiceError> {
        let mut out = Vec::new();
        for id in self.inner.store.ids()? {
            if let Some(b) = self.inner.store.latest(&id)? {
                out.push(AnalysisSummary {
                    id: b.id,
                    version: b.version,
                    status: b.status,
                    mode: b.mode,
                    kb_version: b.kb_version,
                    alert: b.alert.id,
                });
            }
        }
        Ok(out)
    }

    fn latest(&self, id: &str) -> Result<AnalysisBundle, ServiceError> {
        self.inner.store.latest(id)?.ok_or_else(|| ServiceError::NotFound(format!("analysis {id:?}")))
    }

    fn analysis_lock(&self, id: &str) -> Arc<Mutex<()>> {
        lock(&self.inner.locks).entry(id.to_string()).or_default().clone()
    }

    fn evaluated(&self, bundle: &AnalysisBundle) -> Result<Arc<EvaluatedNetwork>, ServiceError> {
        if let Some((version, cached)) = lock(&self.inner.cache).get(&bundle.id) {
            if *version == bundle.version {
                return Ok(cached.clone());
            }
        }
        let network = bundle.network.clone().ok_or_else(|| {
            ServiceError::Conflict(format!("analysis {:?} has not been evaluated yet", bundle.id))
        })?;
        Ok(Arc::new(EvaluatedNetwork::new(network).map_err(|e| ServiceError::Conflict(e.to_string()))?))
    }

    /// Puts an evaluated network into `next`, re-ranking and, for concluded
    /// analyses, re-running bias detection.
    fn install(&self, next: &mut AnalysisBundle, evaluated: Arc<EvaluatedNetwork>) -> Result<(), ServiceError> {
        let network = evaluated.network().clone();
        let evaluation = evaluated.result().clone();
        next.ranking = if network.competing_roots.is_empty() {
            Vec::new()
        } else {
            rank_roots(&network.competing_roots, &evaluation).map_err(|e| ServiceError::Conflict(e.to_string()))?
        };
        next.network = Some(network);
        next.evaluation = Some(evaluation);
        if next.status == Status::Concluded {
            pipeline::findings(next, &self.inner.config.settings)
                .map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        }
        lock(&self.inner.cache).insert(next.id.clone(), (next.version, evaluated));
        Ok(())
    }

    fn persist(&self, bundle: &AnalysisBundle) -> Result<(), ServiceError> {
        self.inner.store.append(bundle)?;
        Ok(())
    }

    /// Sets (`Some`) or clears (`None`) an assumption on a node and
    /// re-evaluates. Returns the new evaluation.
    pub fn post_assumption(
        &self,
        id: &str,
        node: &str,
        value: Option<SymbolicProbability>,
    ) -> Result<EvaluationResult, ServiceError> {
        self.check_alive()?;
        let analysis_lock = self.analysis_lock(id);
        let _guard = lock(&analysis_lock);
        let bundle = self.latest(id)?;
        let network = bundle
            .network
            .as_ref()
            .ok_or_else(|| ServiceError::Conflict(format!("analysis {id:?} has not been evaluated yet")))?;
        let overrides = BTreeMap::from([(node.to_string(), value)]);
        let network = with_assumptions(network, &overrides).map_err(|e| match e {
            NetworkError::UnknownNode(n) => ServiceError::NotFound(format!("node {n:?} in analysis {id:?}")),
            other => ServiceError::BadRequest(other.to_string()),
        })?;
        let evaluated =
            Arc::new(EvaluatedNetwork::new(network).map_err(|e| ServiceError::Conflict(e.to_string()))?);
        let action = match value {
            Some(v) => format!("assume {node} = {v}"),
            None => format!("clear assumption on {node}"),
        };
        let mut next = bundle.advance(bundle.status, &action);
        self.install(&mut next, evaluated)?;
        self.persist(&next)?;
        Ok(next.evaluation.expect("installed"))
    }

    pub fn report(&self, id: &str) -> Result<StructuredReport, ServiceError> {
        Ok(generate_report(&self.latest(id)?)?)
    }

    pub fn report_text(&self, id: &str) -> Result<String, ServiceError> {
        Ok(render_text(&self.report(id)?))
    }

    pub fn biases(&self, id: &str) -> Result<Vec<ebr_core::bias::BiasFinding>, ServiceError> {
        Ok(self.latest(id)?.findings)
    }

    // ---- the pipeline ----

    /// Runs the pipeline for `id` on this thread or in the background,
    /// depending on configuration. Returns the latest bundle when run inline.
    pub fn start(&self, id: &str) -> Result<Option<AnalysisBundle>, ServiceError> {
        if !self.inner.config.background {
            return self.run_pipeline(id).map(Some);
        }
        if !lock(&self.inner.running).insert(id.to_string()) {
            return Ok(None);
        }
        let service = self.clone();
        let id = id.to_string();
        std::thread::spawn(move || {
            if let Err(e) = service.run_pipeline(&id) {
                tracing::error!(analysis = %id, error = %e, "pipeline stopped");
            }
            lock(&service.inner.running).remove(&id);
        });
        Ok(None)
    }

    /// Restarts every analysis left in a runnable state.
    pub fn resume_pending(&self) -> Result<Vec<String>, ServiceError> {
        let mut resumed = Vec::new();
        for id in self.inner.store.ids()? {
            if self.latest(&id)?.status.is_runnable() {
                tracing::info!(analysis = %id, "resuming interrupted analysis");
                self.start(&id)?;
                resumed.push(id);
            }
        }
        Ok(resumed)
    }

    /// Runs stages until the analysis concludes, waits for a person, or is
    /// parked. Every stage's output is persisted before the next begins.
    pub fn run_pipeline(&self, id: &str) -> Result<AnalysisBundle, ServiceError> {
        loop {
            self.check_alive()?;
            let analysis_lock = self.analysis_lock(id);
            let guard = lock(&analysis_lock);
            let bundle = self.latest(id)?;
            if !bundle.status.is_runnable() {
                return Ok(bundle);
            }
            let kb = self.kb_version(&bundle.kb_version)?;
            let repository = self.repository();
            let inputs = StageInputs {
                kb: &kb,
                repository: &repository,
                settings: &self.inner.config.settings,
                fault: &self.inner.fault,
            };
            let next = match pipeline::step(&bundle, &inputs) {
                Ok(Some(next)) => next,
                Ok(None) => return Ok(bundle),
                Err(e) => return self.park(&bundle, &bundle, &format!("{} failed: {e}", stage_name(bundle.status))),
            };
            self.persist(&next)?;
            self.after_stage(&next)?;
            drop(guard);

            let window = self.inner.config.window(next.mode);
            if !window.is_zero() {
                if let Some(reason) = self.veto_window(id, window) {
                    let _guard = lock(&analysis_lock);
                    let latest = self.latest(id)?;
                    return self.park(&latest, &bundle, &format!("vetoed: {reason}"));
                }
            }
        }
    }

    fn after_stage(&self, next: &AnalysisBundle) -> Result<(), ServiceError> {
        if next.status == Status::Analyzing {
            let mut monitor = lock(&self.inner.monitor);
            monitor.register_from(&next.id, next.sequence);
            for request in &next.requests {
                monitor.subscribe(&next.id, request.query.clone()).expect("registered above");
            }
        }
        if self.inner.config.faults.crash_after == Some(next.status) {
            tracing::warn!(analysis = %next.id, status = %next.status, "injected crash");
            if self.inner.config.faults.abort_process {
                std::process::abort();
            }
            self.inner.crashed.store(true, Ordering::SeqCst);
            return Err(ServiceError::Crashed);
        }
        Ok(())
    }

    /// Parks the analysis with the content of `restore`, so a resume re-runs
    /// from there.
    fn park(
        &self,
        latest: &AnalysisBundle,
        restore: &AnalysisBundle,
        reason: &str,
    ) -> Result<AnalysisBundle, ServiceError> {
        tracing::warn!(analysis = %latest.id, %reason, "parking analysis");
        let mut parked = restore.clone();
        parked.version = latest.version;
        parked.audit = latest.audit.clone();
        parked.status = latest.status;
        let mut parked = parked.advance(Status::Parked, reason);
        parked.parked = Some(Parked { reason: reason.to_string(), resume_at: restore.status, gate: restore.gate });
        self.persist(&parked)?;
        Ok(parked)
    }

    /// Waits out a veto window. Returns the veto reason if one arrived.
    fn veto_window(&self, id: &str, window: Duration) -> Option<String> {
        let mut vetoes = lock(&self.inner.vetoes);
        vetoes.insert(id.to_string(), VetoWindow { closes: Instant::now() + window, reason: None });
        let (mut vetoes, _) = self
            .inner
            .veto_signal
            .wait_timeout_while(vetoes, window, |v| v.get(id).is_some_and(|w| w.reason.is_none()))
            .unwrap_or_else(|e| e.into_inner());
        vetoes.remove(id).and_then(|w| w.reason)
    }

    pub fn veto_state(&self, id: &str) -> Result<VetoState, ServiceError> {
        self.latest(id)?;
        let vetoes = lock(&self.inner.vetoes);
        Ok(match vetoes.get(id) {
            Some(w) if w.reason.is_none() => VetoState {
                open: true,
                remaining_ms: Some(w.closes.saturating_duration_since(Instant::now()).as_millis() as u64),
            },
            _ => VetoState { open: false, remaining_ms: None },
        })
    }

    /// Vetoes the transition whose window is open; the analysis is parked.
    pub fn veto(&self, id: &str, reason: &str) -> Result<(), ServiceError> {
        self.latest(id)?;
        let mut vetoes = lock(&self.inner.vetoes);
        match vetoes.get_mut(id) {
            Some(w) if w.reason.is_none() && Instant::now() < w.closes => {
                w.reason = Some(if reason.trim().is_empty() { "no reason given".into() } else { reason.into() });
                self.inner.veto_signal.notify_all();
                Ok(())
            }
            _ => Err(ServiceError::Conflict(format!("no veto window is open for {id:?}; it has closed or never opened"))),
        }
    }

    /// In-the-loop approval, or retry of a parked analysis.
    pub fn resume(&self, id: &str) -> Result<AnalysisBundle, ServiceError> {
        self.check_alive()?;
        {
            let analysis_lock = self.analysis_lock(id);
            let _guard = lock(&analysis_lock);
            let bundle = self.latest(id)?;
            let next = match (bundle.status, &bundle.parked) {
                (Status::AwaitingHuman, _) => pipeline::approve(&bundle, &self.inner.config.settings)
                    .map_err(|e| ServiceError::Conflict(e.to_string()))?,
                (Status::Parked, Some(parked)) => {
                    let mut next = bundle.advance(parked.resume_at, "resume");
                    next.gate = parked.gate;
                    next.parked = None;
                    next
                }
                (status, _) => return Err(ServiceError::Conflict(format!("analysis {id:?} is {status}; nothing to resume"))),
            };
            self.persist(&next)?;
        }
        match self.start(id)? {
            Some(bundle) => Ok(bundle),
            None => self.latest(id),
        }
    }
}

fn stage_name(status: Status) -> &'static str {
    match status {
        Status::Queued => "hypothesis generation",
        Status::Generating => "evidence collection",
        Status::Collecting => "hypothesis analysis",
        Status::Analyzing => "conclusion",
        _ => "stage",
    }
}

/// Loads a knowledge base and evidence file into a fresh or existing data
/// directory and runs one alert to its end.
pub fn analyze_once(
    config: Config,
    kb: ReferenceKnowledgeBase,
    evidence: EvidenceRepositoryFile,
    alert: Alert,
) -> Result<(Service, AnalysisBundle), ServiceError> {
    let service = Service::open(config)?;
    service.put_kb(kb)?;
    service.import_repository(evidence)?;
    service.resume_pending()?;
    let submitted = service.submit_alert(alert)?;
    let bundle = service.run_pipeline(&submitted.id)?;
    Ok((service, bundle))
}
