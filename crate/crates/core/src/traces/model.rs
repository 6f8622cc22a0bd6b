use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::protection::EncryptionLevel;

pub const TRACE_FORMAT: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PacketDirection {
    Tx,
    Rx,
}

/// One packet as exchanged, with protection removed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub direction: PacketDirection,
    /// Milliseconds since the scenario started.
    pub timestamp_ms: u64,
    pub level: EncryptionLevel,
    /// Header (packet number unmasked) followed by the decrypted payload.
    pub cleartext_hex: String,
    /// Destination connection ID length, needed to re-parse short headers.
    pub dcid_len: u8,
    /// Index of the connection within the scenario (0-RTT uses two).
    #[serde(default)]
    pub connection: u32,
}

impl PacketRecord {
    pub fn cleartext(&self) -> Option<Vec<u8>> {
        hex::decode(&self.cleartext_hex).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetInfo {
    pub name: String,
    pub host: String,
    pub port: u16,
    /// Resolved address, absent when resolution failed.
    #[serde(default)]
    pub ip: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub format: u32,
    pub scenario: String,
    pub scenario_version: u32,
    pub requires_handshake: bool,
    pub target: TargetInfo,
    /// UTC milliseconds since the Unix epoch.
    pub started_at: i64,
    pub duration_ms: u64,
    pub error_code: u16,
    #[serde(default)]
    pub results: Map<String, Value>,
    #[serde(default)]
    pub packets: Vec<PacketRecord>,
    /// Fields written by other versions of the suite, kept verbatim.
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl Trace {
    /// Run date (UTC) as `YYYY-MM-DD`.
    pub fn run_date(&self) -> String {
        chrono::DateTime::from_timestamp_millis(self.started_at)
            .map(|t| t.format("%Y-%m-%d").to_string())
            .unwrap_or_else(|| "invalid-date".to_string())
    }
}

/// Shared, append-only packet log for one scenario. Clones share storage;
/// each connection gets its own index via [`PacketLog::for_connection`].
#[derive(Debug, Clone)]
pub struct PacketLog {
    records: Arc<Mutex<Vec<PacketRecord>>>,
    start: Instant,
    connection: u32,
}

impl Default for PacketLog {
    fn default() -> Self {
        Self::new()
    }
}

impl PacketLog {
    pub fn new() -> Self {
        PacketLog { records: Arc::default(), start: Instant::now(), connection: 0 }
    }

    pub fn for_connection(&self, connection: u32) -> Self {
        PacketLog { connection, ..self.clone() }
    }

    pub fn elapsed_ms(&self) -> u64 {
        self.start.elapsed().as_millis() as u64
    }

    pub fn record(
        &self,
        direction: PacketDirection,
        level: EncryptionLevel,
        cleartext: &[u8],
        dcid_len: u8,
    ) -> u64 {
        let timestamp_ms = self.elapsed_ms();
        let record = PacketRecord {
            direction,
            timestamp_ms,
            level,
            cleartext_hex: hex::encode(cleartext),
            dcid_len,
            connection: self.connection,
        };
        self.records.lock().expect("packet log poisoned").push(record);
        timestamp_ms
    }

    pub fn snapshot(&self) -> Vec<PacketRecord> {
        self.records.lock().expect("packet log poisoned").clone()
    }
}
