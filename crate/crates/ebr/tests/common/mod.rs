#![allow(dead_code)]

use std::path::{Path, PathBuf};

use ebr::files::{read_json, Alert, EvidenceRepositoryFile, ReferenceKnowledgeBase};
use ebr::service::{Config, Service};

pub const COVERT: &str = "ship1-ais-loss/covert-transfer";
pub const PIRATES: &str = "ship1-ais-loss/avoids-pirates";
pub const FISHING: &str = "ship1-ais-loss/illegal-fishing";

pub fn capip_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/capip")
}

pub fn kb() -> ReferenceKnowledgeBase {
    read_json(&capip_dir().join("kb.json")).unwrap()
}

pub fn evidence() -> EvidenceRepositoryFile {
    read_json(&capip_dir().join("evidence.json")).unwrap()
}

pub fn alert() -> Alert {
    Alert::parse(&std::fs::read_to_string(capip_dir().join("alert.json")).unwrap()).unwrap()
}

pub fn golden() -> String {
    std::fs::read_to_string(capip_dir().join("report.golden.txt")).unwrap()
}

/// A service over `dir` with the CAPIP knowledge base and evidence loaded.
pub fn service(dir: &Path, tweak: impl FnOnce(&mut Config)) -> Service {
    let mut config = Config::new(dir);
    tweak(&mut config);
    let service = Service::open(config).unwrap();
    service.put_kb(kb()).unwrap();
    service.import_repository(evidence()).unwrap();
    service
}
