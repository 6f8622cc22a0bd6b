//! Aggregations over a corpus. Every function here is pure.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::Serialize;
use serde_json::Value;

use super::store::Corpus;

pub const VERSION_NEGOTIATION: &str = "version_negotiation";
pub const HANDSHAKE: &str = "handshake";

/// How a single error code is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Success,
    Failure,
    /// A prerequisite was missing, so the scenario could not judge.
    Error,
}

impl Outcome {
    pub fn of(code: u16) -> Outcome {
        match code {
            0 => Outcome::Success,
            1..=199 => Outcome::Failure,
            _ => Outcome::Error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VersionCount {
    pub date: String,
    pub version: String,
    pub endpoints: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VersionsTable {
    pub rows: Vec<VersionCount>,
    /// Endpoints with a version negotiation trace, per date.
    pub tested: BTreeMap<String, usize>,
}

/// Renders an announced version as `0x` + 8 hex digits.
pub fn format_version(version: u32) -> String {
    format!("0x{version:08x}")
}

fn parse_version(value: &Value) -> Option<u32> {
    match value {
        Value::Number(n) => n.as_u64().and_then(|v| u32::try_from(v).ok()),
        Value::String(s) => {
            let s = s.trim();
            match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
                Some(hex) => u32::from_str_radix(hex, 16).ok(),
                None => s.parse().ok(),
            }
        }
        _ => None,
    }
}

/// Endpoints announcing each version, per date. An endpoint announcing
/// a version several times counts once for it.
pub fn versions_over_time(corpus: &Corpus) -> VersionsTable {
    let mut counts: BTreeMap<(String, u32), BTreeSet<&str>> = BTreeMap::new();
    let mut tested: BTreeMap<String, BTreeSet<&str>> = BTreeMap::new();
    for trace in corpus.traces().filter(|t| t.scenario == VERSION_NEGOTIATION) {
        let date = trace.run_date();
        tested.entry(date.clone()).or_default().insert(&trace.target.name);
        let Some(Value::Array(versions)) = trace.results.get("versions") else {
            continue;
        };
        for version in versions.iter().filter_map(parse_version) {
            counts.entry((date.clone(), version)).or_default().insert(&trace.target.name);
        }
    }
    VersionsTable {
        rows: counts
            .into_iter()
            .map(|((date, version), eps)| VersionCount {
                date,
                version: format_version(version),
                endpoints: eps.len(),
            })
            .collect(),
        tested: tested.into_iter().map(|(d, eps)| (d, eps.len())).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HandshakeCount {
    pub date: String,
    pub succeeded: usize,
    pub tested: usize,
}

/// Endpoints whose handshake trace has code 0, per date.
pub fn handshake_success(corpus: &Corpus) -> Vec<HandshakeCount> {
    let mut by_date: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for trace in corpus.traces().filter(|t| t.scenario == HANDSHAKE) {
        let entry = by_date.entry(trace.run_date()).or_default();
        entry.1 += 1;
        if trace.error_code == 0 {
            entry.0 += 1;
        }
    }
    by_date
        .into_iter()
        .map(|(date, (succeeded, tested))| HandshakeCount { date, succeeded, tested })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeShare {
    pub date: String,
    pub success_pct: f64,
    pub failure_pct: f64,
    pub error_pct: f64,
    /// Traces counted.
    pub traces: usize,
}

/// Outcome percentages over scenarios that need a handshake, counting only
/// endpoints that passed the handshake scenario on the same date. Dates
/// without any such trace are omitted.
pub fn outcomes(corpus: &Corpus) -> Vec<OutcomeShare> {
    let mut qualified: BTreeSet<(String, &str)> = BTreeSet::new();
    for trace in corpus.traces().filter(|t| t.scenario == HANDSHAKE && t.error_code == 0) {
        qualified.insert((trace.run_date(), &trace.target.name));
    }
    let mut tallies: BTreeMap<String, [usize; 3]> = BTreeMap::new();
    for trace in corpus.traces().filter(|t| t.requires_handshake) {
        let date = trace.run_date();
        if !qualified.contains(&(date.clone(), trace.target.name.as_str())) {
            continue;
        }
        let slot = match Outcome::of(trace.error_code) {
            Outcome::Success => 0,
            Outcome::Failure => 1,
            Outcome::Error => 2,
        };
        tallies.entry(date).or_default()[slot] += 1;
    }
    tallies
        .into_iter()
        .map(|(date, [s, f, e])| {
            let total = (s + f + e) as f64;
            OutcomeShare {
                date,
                success_pct: 100.0 * s as f64 / total,
                failure_pct: 100.0 * f as f64 / total,
                error_pct: 100.0 * e as f64 / total,
                traces: s + f + e,
            }
        })
        .collect()
}

/// Writes `date,version,endpoints,tested`.
pub fn write_versions_csv(table: &VersionsTable, out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "version", "endpoints", "tested"])?;
    for row in &table.rows {
        let tested = table.tested.get(&row.date).copied().unwrap_or(0);
        w.write_record([&row.date, &row.version, &row.endpoints.to_string(), &tested.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `date,succeeded,tested`.
pub fn write_handshake_csv(rows: &[HandshakeCount], out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "succeeded", "tested"])?;
    for row in rows {
        w.write_record([row.date.clone(), row.succeeded.to_string(), row.tested.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `date,success_pct,failure_pct,error_pct,traces`, percentages to
/// two decimals.
pub fn write_outcomes_csv(rows: &[OutcomeShare], out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "success_pct", "failure_pct", "error_pct", "traces"])?;
    for row in rows {
        w.write_record([
            row.date.clone(),
            format!("{:.2}", row.success_pct),
            format!("{:.2}", row.failure_pct),
            format!("{:.2}", row.error_pct),
            row.traces.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
