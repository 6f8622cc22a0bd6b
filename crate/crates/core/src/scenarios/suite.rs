use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{find, run_scenario, RunOptions, Scenario, DEFAULT_TIMEOUT};
use crate::traces::Trace;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Target {
    pub name: String,
    pub host: String,
    pub port: u16,
}

impl Target {
    pub fn new(name: impl Into<String>, host: impl Into<String>, port: u16) -> Self {
        Target { name: name.into(), host: host.into(), port }
    }

    /// `host:port`, with IPv6 literals bracketed.
    pub fn address(&self) -> String {
        if self.host.contains(':') && !self.host.starts_with('[') {
            format!("[{}]:{}", self.host, self.port)
        } else {
            format!("{}:{}", self.host, self.port)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct TargetParseError {
    pub line: usize,
    pub message: String,
}

/// Parses one `name,host:port` per line. Blank lines and `#` comments are
/// ignored.
pub fn parse_targets(text: &str) -> Result<Vec<Target>, TargetParseError> {
    let mut targets = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: &str| TargetParseError { line: i + 1, message: message.to_string() };
        let (name, address) = line.split_once(',').ok_or_else(|| err("expected name,host:port"))?;
        let (host, port) = address.trim().rsplit_once(':').ok_or_else(|| err("missing port"))?;
        let port = port.parse().map_err(|_| err("invalid port"))?;
        let host = host.trim_start_matches('[').trim_end_matches(']');
        if name.trim().is_empty() || host.is_empty() {
            return Err(err("empty name or host"));
        }
        targets.push(Target::new(name.trim(), host, port));
    }
    Ok(targets)
}

#[derive(Debug, Clone)]
pub struct SuitePlan {
    pub targets: Vec<Target>,
    /// Scenario names; see [`super::scenario_names`].
    pub scenarios: Vec<String>,
    pub seed: u64,
    pub timeout: Duration,
    /// Targets tested concurrently.
    pub parallel: usize,
    pub provider_seed: u64,
}

impl SuitePlan {
    pub fn new(targets: Vec<Target>) -> Self {
        SuitePlan {
            targets,
            scenarios: super::scenario_names().into_iter().map(String::from).collect(),
            seed: 0,
            timeout: DEFAULT_TIMEOUT,
            parallel: 1,
            provider_seed: 0,
        }
    }
}

/// The order in which `n` scenarios run for a given seed.
pub fn suite_order(seed: u64, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// Runs every scenario against every target and returns one trace per
/// (target, scenario), grouped by target in plan order and in execution
/// order within a target. `sink` sees each trace as soon as it exists.
/// Unknown scenario names are skipped.
pub fn run_suite(plan: &SuitePlan, sink: &(dyn Fn(&Trace) + Sync)) -> Vec<Trace> {
    let scenarios: Vec<Box<dyn Scenario>> = plan.scenarios.iter().filter_map(|n| find(n)).collect();
    let order = suite_order(plan.seed, scenarios.len());
    let options = RunOptions { timeout: plan.timeout, provider_seed: plan.provider_seed, seed: plan.seed };
    let next = AtomicUsize::new(0);
    let done: Mutex<Vec<(usize, Vec<Trace>)>> = Mutex::new(Vec::new());
    let workers = plan.parallel.clamp(1, plan.targets.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::SeqCst);
                let Some(target) = plan.targets.get(index) else {
                    break;
                };
                let mut traces = Vec::with_capacity(order.len());
                for &i in &order {
                    let trace = run_scenario(scenarios[i].as_ref(), target, &options);
                    sink(&trace);
                    traces.push(trace);
                }
                done.lock().expect("suite results poisoned").push((index, traces));
            });
        }
    });
    let mut done = done.into_inner().expect("suite results poisoned");
    done.sort_by_key(|(i, _)| *i);
    done.into_iter().flat_map(|(_, t)| t).collect()
}
