use std::fs;
use std::process::{Command, Output};

use quicprobe::faultsrv::{serve, Fault, ServerConfig};

fn quicprobe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quicprobe")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn lists_scenarios_with_codes() {
    let out = quicprobe(&["scenarios"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("flow_control (version 1, requires a handshake)"));
    assert!(text.contains("  203  "));
}

#[test]
fn dissects_a_hex_packet() {
    // Short header, 8-byte DCID, PN 7, PING.
    let out = quicprobe(&["dissect", "--hex", "40 c1c1c1c1c1c1c1c1 07 01", "--dcid-len", "8"]);
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("packet_number [9..10) = 07 (1 bytes)"), "{text}");
    assert!(text.contains("ping [11..11)"), "{text}");

    let bad = quicprobe(&["dissect", "--hex", "zz"]);
    assert!(!bad.status.success());
}

#[test]
fn unknown_scenario_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let targets = dir.path().join("targets.txt");
    fs::write(&targets, "a,127.0.0.1:9\n").unwrap();
    let out = quicprobe(&[
        "run",
        "--targets",
        targets.to_str().unwrap(),
        "--scenarios",
        "handshake,nope",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown scenario `nope`"));
}

#[test]
fn run_then_postprocess_against_a_local_server() {
    let server = serve(ServerConfig::new("127.0.0.1:0".parse().unwrap(), Fault::EmptyStreamFrames)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let targets = dir.path().join("targets.txt");
    fs::write(&targets, format!("# local\nlocal,{}\n", server.local_addr())).unwrap();
    let corpus = dir.path().join("traces");
    let out = quicprobe(&[
        "run",
        "--targets",
        targets.to_str().unwrap(),
        "--scenarios",
        "handshake,flow_control",
        "--timeout-ms",
        "3000",
        "--out",
        corpus.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    assert!(text.lines().any(|l| l.contains("handshake") && l.split_whitespace().nth(2) == Some("0")), "{text}");
    assert!(text.lines().any(|l| l.contains("flow_control") && l.split_whitespace().nth(2) == Some("8")), "{text}");
    server.stop().unwrap();

    let out = quicprobe(&["postprocess", corpus.to_str().unwrap()]);
    assert!(out.status.success(), "{out:?}");
    for name in ["versions.csv", "handshake.csv", "outcomes.csv"] {
        assert!(corpus.join(name).is_file(), "{name}");
    }
    let date = fs::read_dir(&corpus)
        .unwrap()
        .filter_map(|e| e.ok())
        .find(|e| e.path().is_dir())
        .unwrap()
        .file_name()
        .into_string()
        .unwrap();
    let grid = fs::read_to_string(corpus.join(format!("grid-{date}.html"))).unwrap();
    assert!(grid.contains("data-outcome=\"failure\""));
    let page = fs::read_to_string(corpus.join(&date).join("local__flow_control.html")).unwrap();
    assert!(page.contains("error code <b>8</b>"));
    assert!(page.contains("stream_data"));

    let trace = corpus.join(&date).join("local__flow_control.json");
    let out = quicprobe(&["dissect", trace.to_str().unwrap(), "--packet", "0"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("#0 Tx"));
}

#[test]
fn faultsrv_lists_faults() {
    let out = Command::new(env!("CARGO_BIN_EXE_faultsrv")).arg("--list-faults").output().unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 13);
    assert!(text.contains("ack_gap_overflow         stream_opening_reordering 13"));
}
