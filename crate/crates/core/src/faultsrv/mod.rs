//! A small QUIC version 1 responder with an injectable fault.
//!
//! It shares the wire codec, packet protection and the scripted handshake
//! with the client, but not the client's agent machinery: acknowledgement,
//! flow control, stream handling and anti-amplification are written again
//! here so that one implementation does not silently mask the other's
//! mistakes. The two still share the codec, so a bug there can hide on both
//! sides; the dissector provides a third reading of the bytes.
//!
//! Without a fault the server answers version negotiation, completes the
//! handshake, respects the client's stream limits, copes with a stream
//! opened out of order and answers `GET <path>\r\n` with the mapped body.
//! Each fault changes exactly one of those behaviours; see [`Fault`].

mod server;

use std::collections::BTreeMap;
use std::fmt;
use std::net::{SocketAddr, UdpSocket};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use thiserror::Error;

use crate::protection::EncryptionLevel;
use crate::wire::{Frame, TransportParameters};

pub use server::Server;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Fault {
    None,
    /// Drops Initials carrying an unknown version instead of answering.
    VnSilent,
    /// Lists the client's (reserved) version in Version Negotiation.
    VnEchoReserved,
    /// Sends the ServerHello and then nothing at all.
    StallAfterSh,
    /// Corrupts the AEAD tag of the 1-RTT packet carrying HANDSHAKE_DONE.
    Bad1RttProtection,
    /// Encodes initial_max_data twice in its transport parameters.
    TpDuplicate,
    /// Sends its whole first flight before the client address is validated.
    NoAmplificationLimit,
    /// Sends the whole response body regardless of the stream limit.
    IgnoreStreamLimit,
    /// Adds a zero-length, non-FIN STREAM frame when the stream blocks.
    EmptyStreamFrames,
    /// Floods STREAM_DATA_BLOCKED when blocked and resends the second half.
    StreamBlockedSpam,
    /// Never answers a stream whose FIN arrived before its first byte.
    ReorderLivelock,
    /// Answers reordered packets with an ACK whose first range underflows.
    AckGapOverflow,
    /// Never issues a session ticket.
    NoTicket,
    /// Refuses early data and discards 0-RTT packets.
    Reject0Rtt,
}

impl Fault {
    /// Every fault, excluding [`Fault::None`].
    pub const ALL: [Fault; 13] = [
        Fault::VnSilent,
        Fault::VnEchoReserved,
        Fault::StallAfterSh,
        Fault::Bad1RttProtection,
        Fault::TpDuplicate,
        Fault::NoAmplificationLimit,
        Fault::IgnoreStreamLimit,
        Fault::EmptyStreamFrames,
        Fault::StreamBlockedSpam,
        Fault::ReorderLivelock,
        Fault::AckGapOverflow,
        Fault::NoTicket,
        Fault::Reject0Rtt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Fault::None => "none",
            Fault::VnSilent => "vn_silent",
            Fault::VnEchoReserved => "vn_echo_reserved",
            Fault::StallAfterSh => "stall_after_sh",
            Fault::Bad1RttProtection => "bad_1rtt_protection",
            Fault::TpDuplicate => "tp_duplicate",
            Fault::NoAmplificationLimit => "no_amplification_limit",
            Fault::IgnoreStreamLimit => "ignore_stream_limit",
            Fault::EmptyStreamFrames => "empty_stream_frames",
            Fault::StreamBlockedSpam => "stream_blocked_spam",
            Fault::ReorderLivelock => "reorder_livelock",
            Fault::AckGapOverflow => "ack_gap_overflow",
            Fault::NoTicket => "no_ticket",
            Fault::Reject0Rtt => "reject_0rtt",
        }
    }

    /// The scenario this fault is meant to fail, and the code it should get.
    pub fn designated_failure(self) -> Option<(&'static str, u16)> {
        Some(match self {
            Fault::None => return None,
            Fault::VnSilent => ("version_negotiation", 201),
            Fault::VnEchoReserved => ("version_negotiation", 1),
            Fault::StallAfterSh => ("handshake", 3),
            Fault::Bad1RttProtection => ("handshake", 4),
            Fault::TpDuplicate => ("transport_parameters", 5),
            Fault::NoAmplificationLimit => ("address_validation", 6),
            Fault::IgnoreStreamLimit => ("flow_control", 7),
            Fault::EmptyStreamFrames => ("flow_control", 8),
            Fault::StreamBlockedSpam => ("flow_control", 10),
            Fault::ReorderLivelock => ("stream_opening_reordering", 11),
            Fault::AckGapOverflow => ("stream_opening_reordering", 13),
            Fault::NoTicket => ("zero_rtt", 14),
            Fault::Reject0Rtt => ("zero_rtt", 15),
        })
    }
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown fault {0:?}")]
pub struct UnknownFault(pub String);

impl FromStr for Fault {
    type Err = UnknownFault;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        std::iter::once(Fault::None)
            .chain(Fault::ALL)
            .find(|f| f.name() == s)
            .ok_or_else(|| UnknownFault(s.to_string()))
    }
}

pub const DEFAULT_BODY_SIZE: usize = 160;

/// An HTML body of exactly `size` bytes.
pub fn default_body(size: usize) -> Vec<u8> {
    let head = b"<html><body>";
    let tail = b"</body></html>\n";
    let mut body = Vec::with_capacity(size);
    body.extend_from_slice(head);
    let filler = b"quicprobe test resource. ";
    let mut i = 0;
    while body.len() + tail.len() < size {
        body.push(filler[i % filler.len()]);
        i += 1;
    }
    body.extend_from_slice(tail);
    body.truncate(size);
    body
}

/// Transport parameters the server advertises by default.
pub fn default_server_parameters() -> TransportParameters {
    let mut params = TransportParameters::new();
    params.set_max_idle_timeout(30_000);
    params.set_initial_max_data(1 << 20);
    params.set_initial_max_stream_data_bidi_local(1 << 18);
    params.set_initial_max_stream_data_bidi_remote(1 << 18);
    params.set_initial_max_stream_data_uni(1 << 18);
    params.set_initial_max_streams_bidi(16);
    params.set_initial_max_streams_uni(16);
    params
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub listen: SocketAddr,
    pub resources: BTreeMap<String, Vec<u8>>,
    pub transport_parameters: TransportParameters,
    /// Shared with clients through the scripted handshake.
    pub seed: u64,
    pub fault: Fault,
    pub certificate_len: usize,
}

impl ServerConfig {
    pub fn new(listen: SocketAddr, fault: Fault) -> Self {
        ServerConfig {
            listen,
            resources: BTreeMap::from([("/index.html".to_string(), default_body(DEFAULT_BODY_SIZE))]),
            transport_parameters: default_server_parameters(),
            seed: 0,
            fault,
            certificate_len: crate::protection::NullConfig::default().certificate_len,
        }
    }

    pub fn with_body_size(mut self, size: usize) -> Self {
        self.resources.insert("/index.html".to_string(), default_body(size));
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// One packet the server sent, for checking its own behaviour.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentByServer {
    pub level: EncryptionLevel,
    pub frames: Vec<Frame>,
    /// Client credit for each stream carried, at the time of sending.
    pub stream_limits: Vec<(u64, u64)>,
}

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("socket error: {0}")]
    Io(#[from] std::io::Error),
}

/// A running server; stops when dropped.
#[derive(Debug)]
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    sent: Arc<Mutex<Vec<SentByServer>>>,
    thread: Option<JoinHandle<Result<(), ServerError>>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Packets sent so far, across all connections.
    pub fn sent_packets(&self) -> Vec<SentByServer> {
        self.sent.lock().expect("server log poisoned").clone()
    }

    pub fn stop(mut self) -> Result<(), ServerError> {
        self.shutdown()
    }

    fn shutdown(&mut self) -> Result<(), ServerError> {
        self.stop.store(true, Ordering::SeqCst);
        match self.thread.take() {
            Some(thread) => thread.join().unwrap_or(Ok(())),
            None => Ok(()),
        }
    }

    /// Blocks until the server thread ends.
    pub fn wait(mut self) -> Result<(), ServerError> {
        match self.thread.take() {
            Some(thread) => thread.join().unwrap_or(Ok(())),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}

/// Binds and serves on a background thread.
pub fn serve(config: ServerConfig) -> Result<ServerHandle, ServerError> {
    let socket = UdpSocket::bind(config.listen)
        .map_err(|source| ServerError::Bind { addr: config.listen, source })?;
    // Bounded reads let the loop notice a stop request.
    socket.set_read_timeout(Some(Duration::from_millis(20)))?;
    let addr = socket.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let sent = Arc::new(Mutex::new(Vec::new()));
    let mut server = Server::new(config, Arc::clone(&sent));
    let flag = Arc::clone(&stop);
    let thread = std::thread::Builder::new()
        .name(format!("faultsrv-{addr}"))
        .spawn(move || server.run(&socket, &flag))?;
    Ok(ServerHandle { addr, stop, sent, thread: Some(thread) })
}
