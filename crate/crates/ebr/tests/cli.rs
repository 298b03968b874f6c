mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{capip_dir, golden, kb};
use ebr::files::to_pretty;
use ebr_core::calculus::{BL, C, L, VL};
use ebr_core::network::{ArgumentationNetwork, EvidenceLink, HypothesisNode, NodeRole, Side};
use serde_json::Value;

fn ebr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ebr")).args(args).env_remove("EBR_CRASH_AFTER").output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_kb_reports_problems() {
    let ok = ebr(&["validate-kb", path(&capip_dir().join("kb.json"))]);
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).starts_with("capip-1: ok"));

    let dir = tempfile::tempdir().unwrap();
    let mut broken = kb();
    let rule = broken.knowledge.decomposition_rules.get_mut("covert-meeting").unwrap();
    rule.children.clear();
    let file = dir.path().join("broken.json");
    std::fs::write(&file, to_pretty(&broken)).unwrap();
    let bad = ebr(&["validate-kb", path(&file)]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("covert-meeting"));

    let missing = ebr(&["validate-kb", path(&dir.path().join("absent.json"))]);
    assert_eq!(missing.status.code(), Some(3));
}

fn link(id: &str, side: Side, credibility: ebr_core::calculus::SymbolicProbability, relevance: ebr_core::calculus::SymbolicProbability) -> EvidenceLink {
    EvidenceLink {
        id: id.into(),
        parent: "H2a".into(),
        evidence: id.into(),
        side,
        relevance,
        credibility,
        missing: false,
    }
}

#[test]
fn eval_network_prints_evaluation_and_ranking() {
    let mut network = ArgumentationNetwork::new();
    network.add_node(HypothesisNode::new("H2a", "h2a(X)".parse().unwrap(), NodeRole::Root));
    network.add_link(link("E1", Side::Favoring, VL, C));
    network.add_link(link("E2", Side::Favoring, L, L));
    network.add_link(link("E3", Side::Disfavoring, BL, VL));
    network.competing_roots.insert("H2a".into());
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("net.json");
    std::fs::write(&file, to_pretty(&network)).unwrap();

    let out = ebr(&["eval-network", path(&file)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let printed: Value = serde_json::from_slice(&out.stdout).unwrap();
    // max(min(VL, C), min(L, L)) = VL, less BL: one step down
    assert_eq!(printed["evaluation"]["nodes"]["H2a"]["probability"], "likely");
    assert_eq!(printed["ranking"][0]["root"], "H2a");

    network.add_link(EvidenceLink { parent: "nowhere".into(), ..link("E4", Side::Favoring, C, C) });
    std::fs::write(&file, to_pretty(&network)).unwrap();
    assert_eq!(ebr(&["eval-network", path(&file)]).status.code(), Some(1));
}

#[test]
fn analyze_writes_the_golden_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.txt");
    let bundle = dir.path().join("bundle.json");
    let run = ebr(&[
        "analyze",
        "--kb",
        path(&capip_dir().join("kb.json")),
        "--alert",
        path(&capip_dir().join("alert.json")),
        "--evidence",
        path(&capip_dir().join("evidence.json")),
        "--out",
        path(&out),
        "--workers",
        "4",
        "--bundle-out",
        path(&bundle),
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(std::fs::read_to_string(&out).unwrap(), golden());
    assert!(String::from_utf8_lossy(&run.stdout).contains("leading ship1-ais-loss/covert-transfer"));
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(&bundle).unwrap()).unwrap();
    assert_eq!(saved["status"], "concluded");
}
