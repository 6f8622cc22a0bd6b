//! The scenario engine and the conformance scenarios.
//!
//! A scenario opens its own connection(s) to a target, drives them through
//! one protocol mechanism and condenses the outcome into an error code:
//! 0 is success, 1-199 a scenario-specific conformance failure and 200-255
//! a missing prerequisite, after which the scenario could not judge.

mod catalog;
mod suite;

use std::net::SocketAddr;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use serde_json::{Map, Value};

use crate::conn::{resolve, Command, Connection, ConnectionConfig, HandshakeOutcome, HandshakeStage};
use crate::protection::{sha256, NullConfig, NullHandshakeProvider};
use crate::traces::{PacketLog, TargetInfo, Trace, TRACE_FORMAT};

pub use catalog::{
    AddressValidation, FlowControl, Handshake, StreamOpeningReordering, TransportParametersCheck,
    VersionNegotiationCheck, ZeroRtt, REQUEST,
};
pub use suite::{parse_targets, run_suite, suite_order, SuitePlan, Target, TargetParseError};

pub const SUCCESS: u16 = 0;
pub const RESOLVE_FAILED: u16 = 200;
pub const VN_NO_RESPONSE: u16 = 201;
pub const NO_RESPONSE: u16 = 202;
pub const HANDSHAKE_FAILED: u16 = 203;
pub const FEATURE_UNAVAILABLE: u16 = 204;
pub const INTERNAL_ERROR: u16 = 205;

/// Codes any scenario may return.
pub const COMMON_CODES: &[(u16, &str)] = &[
    (SUCCESS, "success"),
    (RESOLVE_FAILED, "target could not be resolved or no local socket could be bound"),
    (NO_RESPONSE, "the target did not answer"),
    (HANDSHAKE_FAILED, "the handshake this scenario depends on did not complete"),
    (FEATURE_UNAVAILABLE, "the target lacks a feature this scenario depends on"),
    (INTERNAL_ERROR, "the test suite itself failed while running the scenario"),
];

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

pub trait Scenario: Send + Sync {
    fn name(&self) -> &'static str;

    /// Bumped whenever the scenario's behaviour changes.
    fn version(&self) -> u32;

    /// Judges something that only exists after a completed handshake.
    fn requires_handshake(&self) -> bool;

    /// Scenario-specific codes and their meaning.
    fn codes(&self) -> &'static [(u16, &'static str)];

    fn run(&self, ctx: &mut ScenarioContext) -> u16;
}

/// All scenarios, in their canonical order.
pub fn registry() -> Vec<Box<dyn Scenario>> {
    vec![
        Box::new(VersionNegotiationCheck),
        Box::new(Handshake),
        Box::new(TransportParametersCheck),
        Box::new(AddressValidation),
        Box::new(FlowControl),
        Box::new(StreamOpeningReordering),
        Box::new(ZeroRtt),
    ]
}

pub fn find(name: &str) -> Option<Box<dyn Scenario>> {
    registry().into_iter().find(|s| s.name() == name)
}

pub fn scenario_names() -> Vec<&'static str> {
    registry().iter().map(|s| s.name()).collect()
}

/// Human-readable meaning of a code returned by the named scenario.
pub fn describe(scenario: &str, code: u16) -> Option<&'static str> {
    let own = find(scenario)?.codes();
    own.iter().chain(COMMON_CODES).find(|(c, _)| *c == code).map(|(_, d)| *d)
}

/// Knobs shared by every scenario run.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub timeout: Duration,
    /// Seed for the scripted handshake; must match the server's.
    pub provider_seed: u64,
    /// Mixed into connection IDs and handshake randoms.
    pub seed: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { timeout: DEFAULT_TIMEOUT, provider_seed: 0, seed: 0 }
    }
}

/// What a running scenario can reach: the target, its deadline, a packet
/// log and a results map.
pub struct ScenarioContext {
    peer: SocketAddr,
    deadline: Instant,
    provider_seed: u64,
    seed_base: [u8; 32],
    connections: u32,
    log: PacketLog,
    pub results: Map<String, Value>,
}

impl ScenarioContext {
    fn new(peer: SocketAddr, options: &RunOptions, target: &str, scenario: &str) -> Self {
        let mut material = options.seed.to_be_bytes().to_vec();
        material.extend_from_slice(target.as_bytes());
        material.push(0);
        material.extend_from_slice(scenario.as_bytes());
        ScenarioContext {
            peer,
            deadline: Instant::now() + options.timeout,
            provider_seed: options.provider_seed,
            seed_base: sha256(&material),
            connections: 0,
            log: PacketLog::new(),
            results: Map::new(),
        }
    }

    pub fn peer(&self) -> SocketAddr {
        self.peer
    }

    pub fn deadline(&self) -> Instant {
        self.deadline
    }

    pub fn remaining(&self) -> Duration {
        self.deadline.saturating_duration_since(Instant::now())
    }

    /// `Instant::now() + wait`, but never past the scenario deadline.
    pub fn within(&self, wait: Duration) -> Instant {
        (Instant::now() + wait).min(self.deadline)
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        self.results.insert(key.to_string(), value.into());
    }

    /// Default client parameters for the scripted handshake.
    pub fn null_config(&self) -> NullConfig {
        NullConfig { seed: self.provider_seed, ..NullConfig::default() }
    }

    /// Opens a fresh connection to the target. Fails with the code to
    /// return when no socket can be bound.
    pub fn connect(&mut self, mut config: ConnectionConfig, mut null: NullConfig) -> Result<Connection, u16> {
        let index = self.connections;
        self.connections += 1;
        let mut material = self.seed_base.to_vec();
        material.extend_from_slice(&index.to_be_bytes());
        let derived = sha256(&material);
        config.cid_seed = u64::from_be_bytes(derived[..8].try_into().expect("8 bytes"));
        null.connection_nonce = derived[8..24].to_vec();
        let provider = Box::new(NullHandshakeProvider::client(null));
        Connection::connect(self.peer, config, provider, self.log.for_connection(index))
            .map_err(|_| RESOLVE_FAILED)
    }

    /// Connects and completes the handshake; on failure returns the
    /// prerequisite code a scenario that needs the handshake should report.
    pub fn handshaken(&mut self, config: ConnectionConfig, null: NullConfig) -> Result<Connection, u16> {
        let mut conn = self.connect(config, null)?;
        match conn.perform_handshake(self.remaining()) {
            HandshakeOutcome::Succeeded => Ok(conn),
            HandshakeOutcome::Failed(stage) => {
                self.set("handshake_stage", format!("{stage:?}"));
                close(&mut conn);
                Err(match stage {
                    HandshakeStage::NoResponse => NO_RESPONSE,
                    _ => HANDSHAKE_FAILED,
                })
            }
        }
    }
}

/// Closes a connection politely so nothing is sent after the scenario ends.
pub fn close(conn: &mut Connection) {
    if conn.state().closed().is_none() {
        conn.command(Command::Close { error_code: 0, reason: String::new() });
    }
}

/// Runs one scenario against a target on fresh connections and returns its trace.
pub fn run_scenario(scenario: &dyn Scenario, target: &Target, options: &RunOptions) -> Trace {
    let started_at = chrono::Utc::now().timestamp_millis();
    let clock = Instant::now();
    let mut info =
        TargetInfo { name: target.name.clone(), host: target.host.clone(), port: target.port, ip: None };
    let (error_code, results, packets) = match resolve(&target.address()) {
        Err(e) => {
            let mut results = Map::new();
            results.insert("error".into(), e.to_string().into());
            (RESOLVE_FAILED, results, Vec::new())
        }
        Ok(peer) => {
            info.ip = Some(peer.ip().to_string());
            let mut ctx = ScenarioContext::new(peer, options, &target.name, scenario.name());
            let code = catch_unwind(AssertUnwindSafe(|| scenario.run(&mut ctx))).unwrap_or_else(|panic| {
                let message = panic
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                ctx.set("internal_error", message);
                INTERNAL_ERROR
            });
            let mut packets = ctx.log.snapshot();
            packets.sort_by_key(|p| p.timestamp_ms);
            (code, ctx.results, packets)
        }
    };
    Trace {
        format: TRACE_FORMAT,
        scenario: scenario.name().to_string(),
        scenario_version: scenario.version(),
        requires_handshake: scenario.requires_handshake(),
        target: info,
        started_at,
        duration_ms: clock.elapsed().as_millis() as u64,
        error_code,
        results,
        packets,
        extra: Map::new(),
    }
}

#[cfg(test)]
mod tests;
