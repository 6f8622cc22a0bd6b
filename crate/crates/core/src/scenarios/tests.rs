use std::collections::BTreeSet;

use super::*;
use crate::faultsrv::{serve, Fault, ServerConfig};

fn local(fault: Fault) -> (crate::faultsrv::ServerHandle, Target) {
    let server = serve(ServerConfig::new("127.0.0.1:0".parse().unwrap(), fault)).unwrap();
    let target = Target::new("local", "127.0.0.1", server.local_addr().port());
    (server, target)
}

fn options() -> RunOptions {
    RunOptions { timeout: Duration::from_secs(4), ..RunOptions::default() }
}

#[test]
fn registry_names_are_unique_and_codes_described() {
    let names = scenario_names();
    assert_eq!(names.len(), 7);
    assert_eq!(names.iter().collect::<BTreeSet<_>>().len(), 7);
    for s in registry() {
        for &(code, text) in s.codes() {
            assert!(code != 0 && !text.is_empty());
            assert_eq!(describe(s.name(), code), Some(text));
        }
        assert_eq!(describe(s.name(), 0), Some("success"));
        assert!(describe(s.name(), 205).is_some());
    }
    let needing: Vec<_> = registry().into_iter().filter(|s| s.requires_handshake()).map(|s| s.name()).collect();
    assert_eq!(needing, ["transport_parameters", "flow_control", "stream_opening_reordering", "zero_rtt"]);
}

#[test]
fn target_lines_parse() {
    let text = "# comment\nalpha, example.org:443\n\nv6,[::1]:4433\n";
    let targets = parse_targets(text).unwrap();
    assert_eq!(targets, [Target::new("alpha", "example.org", 443), Target::new("v6", "::1", 4433)]);
    assert_eq!(targets[1].address(), "[::1]:4433");
    assert_eq!(parse_targets("x\n").unwrap_err().line, 1);
    assert_eq!(parse_targets("a,b:1\nc,d:notaport").unwrap_err().line, 2);
}

#[test]
fn order_is_a_seeded_permutation() {
    assert_eq!(suite_order(42, 7), suite_order(42, 7));
    let mut sorted = suite_order(7, 7);
    sorted.sort();
    assert_eq!(sorted, (0..7).collect::<Vec<_>>());
    assert!(suite_order(0, 0).is_empty());
}

#[test]
fn compliant_server_passes_each_scenario() {
    let (_server, target) = local(Fault::None);
    for s in registry() {
        let trace = run_scenario(s.as_ref(), &target, &options());
        assert_eq!(trace.error_code, 0, "{}: {:?}", s.name(), trace.results);
        assert!(!trace.packets.is_empty());
        assert!(trace.packets.windows(2).all(|w| w[0].timestamp_ms <= w[1].timestamp_ms));
    }
}

#[test]
fn unresolvable_target_gets_prerequisite_codes() {
    let target = Target::new("nowhere", "host.invalid", 443);
    for s in registry() {
        let trace = run_scenario(s.as_ref(), &target, &options());
        assert_eq!(trace.error_code, RESOLVE_FAILED);
        assert!(trace.target.ip.is_none());
    }
}

struct Exploding;

impl Scenario for Exploding {
    fn name(&self) -> &'static str {
        "exploding"
    }
    fn version(&self) -> u32 {
        1
    }
    fn requires_handshake(&self) -> bool {
        false
    }
    fn codes(&self) -> &'static [(u16, &'static str)] {
        &[]
    }
    fn run(&self, _: &mut ScenarioContext) -> u16 {
        panic!("boom")
    }
}

#[test]
fn panicking_scenario_is_an_internal_error() {
    let target = Target::new("self", "127.0.0.1", 9);
    let trace = run_scenario(&Exploding, &target, &options());
    assert_eq!(trace.error_code, INTERNAL_ERROR);
    assert_eq!(trace.results["internal_error"], "boom");
}

#[test]
fn suite_yields_one_trace_per_target_and_scenario() {
    let targets = vec![Target::new("a", "host.invalid", 1), Target::new("b", "host.invalid", 2)];
    let plan = SuitePlan { seed: 5, parallel: 2, timeout: Duration::from_millis(200), ..SuitePlan::new(targets) };
    let seen = std::sync::Mutex::new(0);
    let traces = run_suite(&plan, &|_| *seen.lock().unwrap() += 1);
    assert_eq!(traces.len(), 14);
    assert_eq!(*seen.lock().unwrap(), 14);
    let order = suite_order(5, 7);
    let names = scenario_names();
    for (i, t) in traces.iter().enumerate() {
        assert_eq!(t.target.name, if i < 7 { "a" } else { "b" });
        assert_eq!(t.scenario, names[order[i % 7]]);
    }
}
