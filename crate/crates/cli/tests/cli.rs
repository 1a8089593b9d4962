use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn awdl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_awdl")).args(args).output().expect("spawn awdl")
}

fn ok(args: &[&str]) -> String {
    let out = awdl(args);
    assert!(out.status.success(), "awdl {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn json_lines(text: &str) -> Vec<Value> {
    text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

/// Runs a scenario file and returns the path of its capture.
fn simulate(dir: &Path, name: &str) -> PathBuf {
    let pcap = dir.join("sim.pcap");
    let trace = dir.join("trace.jsonl");
    ok(&[
        "sim",
        "--scenario",
        scenario(name).to_str().unwrap(),
        "--pcap-out",
        pcap.to_str().unwrap(),
        "--trace-out",
        trace.to_str().unwrap(),
    ]);
    pcap
}

#[test]
fn sim_dissect_and_analyze_agree() {
    let dir = tempfile::tempdir().unwrap();
    let pcap = simulate(dir.path(), "two_nodes.toml");
    let trace = json_lines(&std::fs::read_to_string(dir.path().join("trace.jsonl")).unwrap());
    let af_sent = trace.iter().filter(|e| e["kind"] == "af_sent").count();
    let data_sent = trace.iter().filter(|e| e["kind"] == "data_sent").count();

    let records = json_lines(&ok(&["dissect", pcap.to_str().unwrap(), "--json"]));
    assert_eq!(records.len(), af_sent + data_sent);
    assert_eq!(records.iter().filter(|r| r["class"] == "awdl_action").count(), af_sent);
    for (i, r) in records.iter().enumerate() {
        assert_eq!(r["index"], i);
        assert_eq!(r["parse_errors"].as_array().unwrap().len(), 0);
    }

    let report: Value = serde_json::from_str(&ok(&["analyze", pcap.to_str().unwrap(), "--json"])).unwrap();
    assert_eq!(report["frames"], records.len());
    assert_eq!(report["nodes"].as_array().unwrap().len(), 2);
    let pair = &report["sync"]["pairs"][0];
    assert!(pair["samples"].as_u64().unwrap() > 10);
    assert!(pair["max_us"].as_u64().unwrap() <= 2048);

    let table = ok(&["analyze", pcap.to_str().unwrap()]);
    assert!(table.contains("election timeline"));
    assert!(table.contains("synchronization accuracy"));
    let table = ok(&["dissect", pcap.to_str().unwrap()]);
    assert_eq!(table.lines().count(), records.len() + 1);
}

#[test]
fn sim_reports_echo_and_stream_results() {
    let out = awdl(&["sim", "--scenario", scenario("two_nodes.toml").to_str().unwrap()]);
    assert!(out.status.success());
    let trace = json_lines(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(trace.iter().filter(|e| e["kind"] == "echo_replied").count(), 5);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("65536/65536 bytes intact"), "{stderr}");
}

#[test]
fn sim_is_reproducible() {
    let a = ok(&["sim", "--scenario", scenario("line_lossy.toml").to_str().unwrap()]);
    let b = ok(&["sim", "--scenario", scenario("line_lossy.toml").to_str().unwrap()]);
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn daemon_over_pcap_replay_matches_analyzer_peer_count() {
    let dir = tempfile::tempdir().unwrap();
    let pcap = simulate(dir.path(), "line_lossy.toml");
    let report: Value = serde_json::from_str(&ok(&["analyze", pcap.to_str().unwrap(), "--json"])).unwrap();
    let analyzer_nodes: Vec<String> =
        report["nodes"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    assert_eq!(analyzer_nodes.len(), 4);

    let stats = dir.path().join("stats.jsonl");
    let own = dir.path().join("own.pcap");
    let iface = format!("pcap:{},{}", pcap.display(), own.display());
    ok(&[
        "daemon",
        "--iface",
        &iface,
        "--mac",
        "02:00:00:00:00:99",
        "--metric",
        "50",
        "--stats-out",
        stats.to_str().unwrap(),
    ]);
    let log = json_lines(&std::fs::read_to_string(&stats).unwrap());

    let mut daemon_peers: Vec<String> =
        log.iter().filter(|r| r["event"] == "peer").map(|r| r["mac"].as_str().unwrap().to_string()).collect();
    daemon_peers.sort();
    assert_eq!(daemon_peers, analyzer_nodes);
    let added = log.iter().filter(|r| r["event"] == "peer_added").count();
    assert_eq!(added, analyzer_nodes.len());

    let shutdown = log.iter().find(|r| r["event"] == "shutdown").unwrap();
    assert_eq!(shutdown["reason"], "link_closed");
    assert_eq!(shutdown["peers"], 4);

    // The daemon's own transmissions go to the output capture only.
    let own_records = json_lines(&ok(&["dissect", own.to_str().unwrap(), "--json"]));
    assert!(!own_records.is_empty());
    assert!(own_records.iter().all(|r| r["src"] == "02:00:00:00:00:99"));
    let af_sent = log.iter().filter(|r| r["event"] == "af_sent").count();
    assert_eq!(own_records.len(), af_sent);
    // Node 1 has the highest metric; the replayed node defers to it.
    let last = own_records.last().unwrap();
    assert_eq!(last["action"]["election"]["master_address"], "02:00:00:00:00:01");
}

#[test]
fn daemon_null_port_runs_in_real_time() {
    let out = ok(&["daemon", "--iface", "null", "--seed", "3", "--metric", "7", "--duration-ms", "300"]);
    let log = json_lines(&out);
    let sent: Vec<&Value> = log.iter().filter(|r| r["event"] == "af_sent").collect();
    assert_eq!(sent.len(), 2);
    assert!(sent.iter().all(|r| r["master"] == "02:00:00:00:00:03"));
    assert_eq!(log.last().unwrap()["event"], "shutdown");
}

#[test]
fn rejects_bad_arguments() {
    assert!(!awdl(&["daemon", "--iface", "null", "--channel", "7"]).status.success());
    assert!(!awdl(&["daemon", "--iface", "wifi0"]).status.success());
    assert!(!awdl(&["daemon", "--iface", "pcap:"]).status.success());
    assert!(!awdl(&["daemon", "--iface", "null:out.pcap"]).status.success());
    assert!(!awdl(&["daemon", "--iface", "pcap:/nonexistent.pcap"]).status.success());
    assert!(!awdl(&["dissect", "/nonexistent.pcap"]).status.success());
}

#[test]
fn invalid_scenario_names_the_location() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "duration_ms = 1000\n[[node]]\nmac = \"02:00:00:00:00:01\"\n[[traffic]]\nkind = \"ping\"\nfrom = \"02:00:00:00:00:01\"\nto = \"02:00:00:00:00:09\"\nat_ms = 10\n").unwrap();
    let out = awdl(&["sim", "--scenario", path.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("traffic[0].to"), "{err}");
}

#[test]
fn analyze_single_node_capture_explains_missing_sync() {
    let dir = tempfile::tempdir().unwrap();
    let stats = dir.path().join("s.jsonl");
    let pcap = simulate(dir.path(), "two_nodes.toml");
    let own = dir.path().join("own.pcap");
    let iface = format!("pcap:{},{}", pcap.display(), own.display());
    ok(&["daemon", "--iface", &iface, "--duration-ms", "1000", "--stats-out", stats.to_str().unwrap()]);
    let report: Value = serde_json::from_str(&ok(&["analyze", own.to_str().unwrap(), "--json"])).unwrap();
    assert!(report["sync"].is_null());
    assert!(report["sync_unavailable"].as_str().unwrap().contains('1'));
}
