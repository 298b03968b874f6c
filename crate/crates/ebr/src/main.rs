use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use ebr::bundle::{Mode, Status};
use ebr::files::{read_json, to_pretty, write_atomic, Alert, EvidenceRepositoryFile, ReferenceKnowledgeBase};
use ebr::pipeline::Settings;
use ebr::report::render_text;
use ebr::service::{analyze_once, Config, Faults, Service};
use ebr_core::network::{validate, ArgumentationNetwork, EvaluatedNetwork};
use tracing_subscriber::EnvFilter;

/// Evidence-based reasoning: abduce competing hypotheses from an alert, collect
/// evidence for them and weigh it.
///
/// Every option can also be set through an environment variable with the
/// `EBR_` prefix, shown next to it.
#[derive(Debug, Parser)]
#[command(name = "ebr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one alert through the whole pipeline and write its report.
    Analyze {
        #[arg(long, env = "EBR_KB")]
        kb: PathBuf,
        #[arg(long, env = "EBR_ALERT")]
        alert: PathBuf,
        #[arg(long, env = "EBR_EVIDENCE")]
        evidence: PathBuf,
        /// Where to write the text report.
        #[arg(long, env = "EBR_OUT")]
        out: PathBuf,
        /// Data directory to keep; a temporary one is used otherwise. Re-running
        /// with the same directory resumes an interrupted analysis.
        #[arg(long, env = "EBR_DATA")]
        data: Option<PathBuf>,
        #[arg(long, env = "EBR_WORKERS", default_value_t = 1)]
        workers: usize,
        /// Also write the concluded analysis bundle as JSON.
        #[arg(long)]
        bundle_out: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, env = "EBR_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "EBR_DATA")]
        data: PathBuf,
        #[arg(long, env = "EBR_MODE", value_enum, default_value_t = Mode::Autonomous)]
        mode: Mode,
        #[arg(long, env = "EBR_WORKERS", default_value_t = 4)]
        workers: usize,
        /// Veto window for on-the-loop mode, in milliseconds [default: 30000].
        #[arg(long, env = "EBR_VETO_WINDOW_MS")]
        veto_window_ms: Option<u64>,
        /// Candidates kept after analysis [default: all].
        #[arg(long, env = "EBR_BEAM_WIDTH")]
        beam_width: Option<usize>,
        /// Knowledge base to load (and make current) at startup.
        #[arg(long, env = "EBR_KB")]
        kb: Option<PathBuf>,
        /// Evidence repository to load at startup, replacing the stored one.
        #[arg(long, env = "EBR_EVIDENCE")]
        evidence: Option<PathBuf>,
    },
    /// Check a knowledge-base file; exits 1 if it has problems.
    ValidateKb { file: PathBuf },
    /// Evaluate an argumentation-network file and print the result as JSON.
    EvalNetwork { file: PathBuf },
}

fn faults_from_env() -> Result<Faults, String> {
    let crash_after = match std::env::var("EBR_CRASH_AFTER") {
        Ok(s) if !s.is_empty() => Some(s.parse::<Status>()?),
        _ => None,
    };
    Ok(Faults { crash_after, abort_process: true, panic_once: std::env::var("EBR_PANIC_ONCE").ok() })
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("EBR_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(3)
        }
    }
}

fn load<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, String> {
    read_json(path).map_err(|e| e.to_string())
}

fn run(command: Command) -> Result<ExitCode, String> {
    match command {
        Command::Analyze { kb, alert, evidence, out, data, workers, bundle_out } => {
            let kb: ReferenceKnowledgeBase = load(&kb)?;
            let evidence: EvidenceRepositoryFile = load(&evidence)?;
            let alert_text = std::fs::read_to_string(&alert).map_err(|e| format!("{}: {e}", alert.display()))?;
            let alert = Alert::parse(&alert_text).map_err(|e| format!("{}: {e}", alert.display()))?;
            let scratch;
            let data = match data {
                Some(d) => d,
                None => {
                    scratch = tempfile::tempdir().map_err(|e| e.to_string())?;
                    scratch.path().to_path_buf()
                }
            };
            let mut config = Config::new(data);
            config.settings = Settings { workers, ..Settings::default() };
            config.faults = faults_from_env()?;
            let (service, bundle) = analyze_once(config, kb, evidence, alert).map_err(|e| e.to_string())?;
            if let Some(path) = bundle_out {
                write_atomic(&path, to_pretty(&bundle).as_bytes()).map_err(|e| e.to_string())?;
            }
            if bundle.status != Status::Concluded {
                let reason = bundle.parked.as_ref().map_or(String::new(), |p| format!(": {}", p.reason));
                eprintln!("analysis {} stopped at {}{reason}", bundle.id, bundle.status);
                return Ok(ExitCode::from(1));
            }
            let report = service.report(&bundle.id).map_err(|e| e.to_string())?;
            write_atomic(&out, render_text(&report).as_bytes()).map_err(|e| e.to_string())?;
            match report.conclusions.first() {
                Some(first) if report.leading.is_some() => println!(
                    "{}: leading {} ({}, coverage {}/{})",
                    bundle.id, first.root, first.probability, first.coverage.answered, first.coverage.total
                ),
                Some(_) => println!("{}: no single leading hypothesis", bundle.id),
                None => println!("{}: no hypothesis explains the alert", bundle.id),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve { port, data, mode, workers, veto_window_ms, beam_width, kb, evidence } => {
            let mut config = Config::new(data);
            config.mode = mode;
            config.background = true;
            config.veto_window = veto_window_ms.map(Duration::from_millis);
            config.settings = Settings {
                workers,
                beam_width: beam_width.unwrap_or(usize::MAX),
                ..Settings::default()
            };
            config.faults = faults_from_env()?;
            let service = Service::open(config).map_err(|e| e.to_string())?;
            if let Some(kb) = kb {
                service.put_kb(load(&kb)?).map_err(|e| e.to_string())?;
            }
            if let Some(evidence) = evidence {
                service.import_repository(load(&evidence)?).map_err(|e| e.to_string())?;
            }
            service.resume_pending().map_err(|e| e.to_string())?;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
            runtime.block_on(async {
                let listener =
                    tokio::net::TcpListener::bind(("127.0.0.1", port)).await.map_err(|e| format!("port {port}: {e}"))?;
                let addr = listener.local_addr().map_err(|e| e.to_string())?;
                println!("listening on http://{addr}");
                ebr::http::serve(service, listener).await.map_err(|e| e.to_string())
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Command::ValidateKb { file } => {
            let kb: ReferenceKnowledgeBase = load(&file)?;
            let problems = kb.problems();
            if problems.is_empty() {
                println!(
                    "{}: ok ({} explanation rules, {} decomposition rules, {} cases)",
                    kb.version,
                    kb.knowledge.explanation_rules.len(),
                    kb.knowledge.decomposition_rules.len(),
                    kb.knowledge.cases.len()
                );
                Ok(ExitCode::SUCCESS)
            } else {
                for p in &problems {
                    println!("{p}");
                }
                Ok(ExitCode::from(1))
            }
        }
        Command::EvalNetwork { file } => {
            let network: ArgumentationNetwork = load(&file)?;
            let defects = validate(&network);
            if !defects.is_empty() {
                for d in &defects {
                    println!("{d}");
                }
                return Ok(ExitCode::from(1));
            }
            let (network, evaluation) =
                EvaluatedNetwork::new(network).map_err(|e| e.to_string())?.into_parts();
            let ranking = if network.competing_roots.is_empty() {
                Vec::new()
            } else {
                ebr_core::network::rank_roots(&network.competing_roots, &evaluation).map_err(|e| e.to_string())?
            };
            print!("{}", to_pretty(&serde_json::json!({ "evaluation": evaluation, "ranking": ranking })));
            Ok(ExitCode::SUCCESS)
        }
    }
}
