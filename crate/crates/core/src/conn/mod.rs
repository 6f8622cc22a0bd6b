//! The client connection: an event bus dispatching to composable agents.
//!
//! Every event first passes through core bookkeeping on
//! [`ConnectionState`] (packet log, acknowledgement ranges, stream
//! reassembly, peer credit), then through each enabled agent that
//! subscribes to it, in [`AgentKind`] order. Effects are applied as soon as
//! an agent returns, and emitted events join the back of the queue.

mod agents;
mod event;
mod io;
mod ranges;
mod state;
mod stream;

pub use agents::{Agent, AgentKind, RETRANSMISSION_TIMEOUT_MS};
pub use event::{Command, Effect, Event, EventKind, OutgoingPacket, TimerId};
pub use io::{resolve, ChannelIo, DatagramIo, MemoryIo, UdpIo};
pub use ranges::RangeSet;
pub use state::{
    CloseInfo, ConnectionState, DatagramRecord, FlowLedger, PnSpace, ReceivedPacket, SentRecord,
    Stats, CID_LEN, MIN_INITIAL_DATAGRAM,
};
pub use stream::{RecvBuffer, Stream};

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::net::SocketAddr;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::protection::{EncryptionLevel, HandshakeError, HandshakeProvider, PacketNumberSpace, ProtectionError};
use crate::traces::PacketLog;
use crate::wire::{Frame, TransportParameters, WireError, QUIC_V1};

pub const MAX_DATAGRAM_SIZE: usize = 1252;
/// Events processed per drain before the bus assumes a feedback loop.
const MAX_EVENTS_PER_DRAIN: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConnError {
    #[error("cannot resolve {0}")]
    Resolve(String),
    #[error("cannot bind socket: {0}")]
    Bind(String),
    #[error("socket error: {0}")]
    Io(String),
    #[error(transparent)]
    Protection(#[from] ProtectionError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Handshake(#[from] HandshakeError),
    #[error("no keys at {0}")]
    NoKeys(EncryptionLevel),
    #[error("stream {stream_id}: writing up to {requested} exceeds credit {limit}")]
    FlowControl { stream_id: u64, requested: u64, limit: u64 },
    #[error("frame of {0} bytes does not fit a packet")]
    FrameTooLarge(usize),
    #[error("event loop did not settle")]
    Runaway,
}

/// Set of enabled agents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Roster(BTreeSet<AgentKind>);

impl Roster {
    pub fn full() -> Self {
        Roster(AgentKind::ALL.into_iter().collect())
    }

    pub fn empty() -> Self {
        Roster(BTreeSet::new())
    }

    pub fn of(kinds: &[AgentKind]) -> Self {
        Roster(kinds.iter().copied().collect())
    }

    pub fn without(mut self, kind: AgentKind) -> Self {
        self.0.remove(&kind);
        self
    }

    pub fn with(mut self, kind: AgentKind) -> Self {
        self.0.insert(kind);
        self
    }

    pub fn contains(&self, kind: AgentKind) -> bool {
        self.0.contains(&kind)
    }

    pub fn iter(&self) -> impl Iterator<Item = AgentKind> + '_ {
        self.0.iter().copied()
    }
}

impl Default for Roster {
    fn default() -> Self {
        Self::full()
    }
}

/// Transport parameters this client advertises unless a scenario overrides them.
pub fn default_client_parameters() -> TransportParameters {
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
pub struct ConnectionConfig {
    /// Version written in long headers.
    pub version: u32,
    pub transport_parameters: TransportParameters,
    /// Parameters from an earlier connection, bounding 0-RTT data.
    pub remembered_peer_parameters: Option<TransportParameters>,
    pub roster: Roster,
    pub idle_timeout_ms: u64,
    /// Seeds connection ID generation.
    pub cid_seed: u64,
    pub max_datagram_size: usize,
}

impl Default for ConnectionConfig {
    fn default() -> Self {
        ConnectionConfig {
            version: QUIC_V1,
            transport_parameters: default_client_parameters(),
            remembered_peer_parameters: None,
            roster: Roster::full(),
            idle_timeout_ms: 30_000,
            cid_seed: 0,
            max_datagram_size: MAX_DATAGRAM_SIZE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HandshakeStage {
    NoResponse,
    VersionMismatch,
    HandshakeIncomplete,
    KeysUnavailable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HandshakeOutcome {
    Succeeded,
    Failed(HandshakeStage),
}

pub struct Connection {
    state: ConnectionState,
    agents: Vec<Box<dyn Agent>>,
    bus: VecDeque<Event>,
    timers: BTreeMap<TimerId, Instant>,
    started: bool,
}

impl std::fmt::Debug for Connection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Connection")
            .field("state", &self.state)
            .field("agents", &self.agents.iter().map(|a| a.kind()).collect::<Vec<_>>())
            .finish_non_exhaustive()
    }
}

impl Connection {
    /// Creates a connection over `io`. Nothing is sent until [`start`](Self::start).
    pub fn new(
        config: ConnectionConfig,
        provider: Box<dyn HandshakeProvider>,
        io: Box<dyn DatagramIo>,
        log: PacketLog,
    ) -> Result<Self, ConnError> {
        let agents = config.roster.iter().map(AgentKind::instantiate).collect();
        let state = ConnectionState::new(config, provider, io, log)?;
        Ok(Connection { state, agents, bus: VecDeque::new(), timers: BTreeMap::new(), started: false })
    }

    /// Binds a UDP socket towards `peer`.
    pub fn connect(
        peer: SocketAddr,
        config: ConnectionConfig,
        provider: Box<dyn HandshakeProvider>,
        log: PacketLog,
    ) -> Result<Self, ConnError> {
        Self::new(config, provider, Box::new(UdpIo::connect(peer)?), log)
    }

    pub fn state(&self) -> &ConnectionState {
        &self.state
    }

    pub fn roster(&self) -> Roster {
        Roster::of(&self.agents.iter().map(|a| a.kind()).collect::<Vec<_>>())
    }

    /// Emits `Started` once and processes the resulting events.
    pub fn start(&mut self) {
        if !self.started {
            self.started = true;
            self.process(Event::Started);
        }
    }

    /// Queues an event and processes the bus until it is empty.
    pub fn process(&mut self, event: Event) {
        self.push(event);
        self.drain();
    }

    fn push(&mut self, event: Event) {
        if let Event::FramesQueued { .. } = event {
            if self.bus.contains(&event) {
                return;
            }
        }
        self.bus.push_back(event);
    }

    pub fn drain(&mut self) {
        let mut processed = 0;
        while let Some(event) = self.bus.pop_front() {
            self.dispatch(event);
            processed += 1;
            if processed > MAX_EVENTS_PER_DRAIN {
                self.state.agent_errors.push(ConnError::Runaway.to_string());
                self.bus.clear();
                break;
            }
        }
    }

    /// Runs one event through core bookkeeping and every subscribed agent.
    /// Returns the effects the agents produced, already applied.
    pub fn dispatch(&mut self, event: Event) -> Vec<Effect> {
        let mut all = Vec::new();
        for follow_up in self.absorb(&event) {
            self.push(follow_up);
        }
        let kind = event.kind();
        for i in 0..self.agents.len() {
            if !self.agents[i].subscriptions().contains(&kind) {
                continue;
            }
            match self.agents[i].handle(&event, &mut self.state) {
                Ok(effects) => {
                    for effect in &effects {
                        self.apply(effect.clone());
                    }
                    all.extend(effects);
                }
                Err(e) => {
                    let name = self.agents[i].kind().name();
                    log::debug!("agent {name} failed: {e}");
                    self.state.agent_errors.push(format!("{name}: {e}"));
                }
            }
        }
        all
    }

    fn absorb(&mut self, event: &Event) -> Vec<Event> {
        match event {
            Event::DatagramReceived { datagram, timestamp_ms } => {
                self.state.absorb_datagram(datagram.len(), *timestamp_ms);
                Vec::new()
            }
            Event::PacketReceived { header, frames, level, timestamp_ms, cleartext } => {
                self.state.absorb_received(header, frames, *level, *timestamp_ms, cleartext)
            }
            Event::PacketSent { header, frames, level, timestamp_ms, cleartext, size } => {
                self.state.absorb_sent(header, frames, *level, *timestamp_ms, cleartext, *size);
                Vec::new()
            }
            _ => Vec::new(),
        }
    }

    fn apply(&mut self, effect: Effect) {
        match effect {
            Effect::Emit(event) => self.push(event),
            Effect::QueueFrame { level, frame } => {
                self.state.queue_frame(level, frame);
                self.push(Event::FramesQueued { level });
            }
            Effect::ArmTimer { timer, delay_ms } => {
                self.timers.insert(timer, Instant::now() + Duration::from_millis(delay_ms));
            }
            Effect::CancelTimer { timer } => {
                self.timers.remove(&timer);
            }
            Effect::Close { error_code, reason, by_peer } => {
                if self.state.closed.is_none() {
                    let info = CloseInfo { error_code, reason: reason.clone(), by_peer };
                    self.state.closed = Some(info);
                    self.timers.clear();
                    self.push(Event::ConnectionClosed { error_code, reason, by_peer });
                }
            }
        }
    }

    /// Queues frames at a level as if an agent had asked for it.
    pub fn queue_frames(&mut self, level: EncryptionLevel, frames: Vec<Frame>) {
        for frame in frames {
            self.apply(Effect::QueueFrame { level, frame });
        }
        self.drain();
    }

    /// Writes stream data within the peer's credit and sends it.
    pub fn write_stream(
        &mut self,
        level: EncryptionLevel,
        stream_id: u64,
        data: &[u8],
        fin: bool,
    ) -> Result<(), ConnError> {
        self.state.write_stream(level, stream_id, data, fin)?;
        self.process(Event::FramesQueued { level });
        Ok(())
    }

    /// Reserves `count` packet numbers in a space for [`send_packet`](Self::send_packet).
    pub fn reserve_packet_numbers(&mut self, space: PacketNumberSpace, count: u64) -> u64 {
        self.state.reserve_packet_numbers(space, count)
    }

    /// Builds and sends one packet with exactly `frames`, bypassing the
    /// bundler. Stream frames are checked against the peer's credit.
    pub fn send_packet(
        &mut self,
        level: EncryptionLevel,
        frames: Vec<Frame>,
        packet_number: Option<u64>,
    ) -> Result<(), ConnError> {
        for frame in &frames {
            if let Frame::Stream { stream_id, offset, data, fin } = frame {
                let end = offset + data.len() as u64;
                let limit = self.state.flow.peer_stream_limit(*stream_id);
                if end > limit {
                    return Err(ConnError::FlowControl { stream_id: *stream_id, requested: end, limit });
                }
                let stream = self.state.streams.entry(*stream_id).or_default();
                if end > stream.send_offset {
                    self.state.flow.data_sent += end - stream.send_offset;
                    stream.send_offset = end;
                }
                stream.fin_sent |= fin;
            }
        }
        let packet = self.state.build_packet(level, frames, packet_number)?;
        self.process(Event::DatagramReady(packet));
        Ok(())
    }

    pub fn command(&mut self, command: Command) {
        self.process(Event::Command(command));
    }

    /// Sends a datagram on the socket verbatim, outside any packet logic.
    pub fn send_raw(&mut self, datagram: &[u8]) -> Result<(), ConnError> {
        self.state.io.send(datagram).map_err(|e| ConnError::Io(e.to_string()))
    }

    /// Runs timers and the socket until `done` holds, the connection closes
    /// or `deadline` passes. Returns whether `done` held.
    pub fn run_until(
        &mut self,
        deadline: Instant,
        mut done: impl FnMut(&ConnectionState) -> bool,
    ) -> bool {
        self.start();
        let listening = self.agents.iter().any(|a| a.kind() == AgentKind::Socket);
        loop {
            self.drain();
            if done(&self.state) {
                return true;
            }
            if self.state.closed.is_some() {
                return false;
            }
            let now = Instant::now();
            if now >= deadline {
                return false;
            }
            let idle = self.state.now_ms().saturating_sub(self.state.last_activity_ms);
            if idle > self.state.config.idle_timeout_ms {
                self.apply(Effect::Close { error_code: 0, reason: "idle timeout".into(), by_peer: false });
                continue;
            }
            if let Some((&timer, &at)) = self.timers.iter().min_by_key(|(_, &at)| at) {
                if at <= now {
                    self.timers.remove(&timer);
                    self.process(Event::Timeout { timer });
                    continue;
                }
            }
            let next_timer = self.timers.values().min().copied().unwrap_or(deadline);
            let wait = next_timer.min(deadline).saturating_duration_since(now).min(Duration::from_millis(50));
            if listening {
                match self.state.io.recv(wait) {
                    Ok(Some(datagram)) => {
                        let timestamp_ms = self.state.now_ms();
                        self.process(Event::DatagramReceived { datagram, timestamp_ms });
                    }
                    Ok(None) => {}
                    Err(e) => {
                        self.state.agent_errors.push(format!("socket: {e}"));
                        std::thread::sleep(wait);
                    }
                }
            } else {
                std::thread::sleep(wait);
            }
        }
    }

    /// Runs the connection for `duration` regardless of progress.
    pub fn run_for(&mut self, duration: Duration) {
        self.run_until(Instant::now() + duration, |_| false);
    }

    /// Drives the 1-RTT handshake: done once 1-RTT keys exist and the
    /// client Finished has left.
    pub fn perform_handshake(&mut self, timeout: Duration) -> HandshakeOutcome {
        let done = |s: &ConnectionState| {
            s.has_keys(EncryptionLevel::OneRtt)
                && s.provider.is_complete()
                && s.queue(EncryptionLevel::Handshake).is_empty()
        };
        if self.run_until(Instant::now() + timeout, done) {
            return HandshakeOutcome::Succeeded;
        }
        let s = &self.state;
        let stage = if s.version_negotiation.is_some() {
            HandshakeStage::VersionMismatch
        } else if s.stats.datagrams_received == 0 {
            HandshakeStage::NoResponse
        } else if s.handshake_error.is_some() {
            HandshakeStage::KeysUnavailable
        } else {
            HandshakeStage::HandshakeIncomplete
        };
        HandshakeOutcome::Failed(stage)
    }
}

#[cfg(test)]
mod tests;
