//! The standard agents. Each one reacts to a few event kinds and answers
//! with effects; none of them talks to another directly.

use std::collections::BTreeMap;

use super::event::{Command, Effect, Event, EventKind, TimerId};
use super::state::ConnectionState;
use super::ConnError;
use crate::protection::{unprotect, EncryptionLevel, ProtectionError, Role};
use crate::wire::{parse_frames, parse_protected_header, Frame, PacketHeader, ParseContext, ProtectedHeader};

/// Fixed retransmission timeout; there is no RTT estimation.
pub const RETRANSMISSION_TIMEOUT_MS: u64 = 500;
/// Undecryptable packets held while waiting for keys.
const MAX_BUFFERED: usize = 32;
/// ACK ranges reported per frame.
const MAX_ACK_RANGES: usize = 32;

/// The nine standard agents, declared in dispatch order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AgentKind {
    Parser,
    Tls,
    Ack,
    FlowControl,
    Handshake,
    Retransmission,
    Bundler,
    Closing,
    Socket,
}

impl AgentKind {
    pub const ALL: [AgentKind; 9] = [
        AgentKind::Parser,
        AgentKind::Tls,
        AgentKind::Ack,
        AgentKind::FlowControl,
        AgentKind::Handshake,
        AgentKind::Retransmission,
        AgentKind::Bundler,
        AgentKind::Closing,
        AgentKind::Socket,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Parser => "parser",
            AgentKind::Tls => "tls",
            AgentKind::Ack => "ack",
            AgentKind::FlowControl => "flow-control",
            AgentKind::Handshake => "handshake",
            AgentKind::Retransmission => "retransmission",
            AgentKind::Bundler => "bundler",
            AgentKind::Closing => "closing",
            AgentKind::Socket => "socket",
        }
    }

    pub(crate) fn instantiate(self) -> Box<dyn Agent> {
        match self {
            AgentKind::Parser => Box::new(ParserAgent),
            AgentKind::Tls => Box::new(TlsAgent),
            AgentKind::Ack => Box::new(AckAgent),
            AgentKind::FlowControl => Box::new(FlowControlAgent),
            AgentKind::Handshake => Box::new(HandshakeAgent),
            AgentKind::Retransmission => Box::new(RetransmissionAgent::default()),
            AgentKind::Bundler => Box::new(BundlerAgent),
            AgentKind::Closing => Box::new(ClosingAgent),
            AgentKind::Socket => Box::new(SocketAgent),
        }
    }
}

pub trait Agent: Send {
    fn kind(&self) -> AgentKind;

    fn subscriptions(&self) -> &'static [EventKind];

    fn handle(&mut self, event: &Event, state: &mut ConnectionState)
        -> Result<Vec<Effect>, ConnError>;
}

/// Moves keys newly exported by the provider into the connection.
pub(crate) fn install_exported_keys(state: &mut ConnectionState) -> Vec<Effect> {
    state
        .provider
        .exported_secrets()
        .into_iter()
        .map(|keys| {
            let level = keys.level;
            state.keys[level.index()] = Some(keys);
            Effect::Emit(Event::NewKeysAvailable { level })
        })
        .collect()
}

fn queue_crypto(state: &mut ConnectionState, level: EncryptionLevel, data: Vec<u8>) -> Effect {
    let offset = state.crypto_send_offset[level.index()];
    state.crypto_send_offset[level.index()] += data.len() as u64;
    Effect::QueueFrame { level, frame: Frame::Crypto { offset, data } }
}

/// Removes protection and parses packets; emits `PacketReceived`.
struct ParserAgent;

impl ParserAgent {
    fn packet(
        state: &mut ConnectionState,
        level: EncryptionLevel,
        packet: &[u8],
        timestamp_ms: u64,
        effects: &mut Vec<Effect>,
    ) {
        let Some(keys) = state.keys(level) else {
            if state.buffered.len() < MAX_BUFFERED {
                state.buffered.push((level, packet.to_vec(), timestamp_ms));
            }
            return;
        };
        let ctx = ParseContext::new(state.scid.len());
        let largest = state.space(level.space()).largest_received;
        let opened = match unprotect(packet, ctx, keys.opening(Role::Client), largest) {
            Ok(opened) => opened,
            Err(ProtectionError::Authentication) => {
                state.stats.decrypt_failures[level.index()] += 1;
                return;
            }
            Err(_) => {
                state.stats.undecodable_packets += 1;
                return;
            }
        };
        let pn = opened.header.packet_number().unwrap_or_default();
        if state.space(level.space()).received.contains(pn) {
            state.stats.duplicate_packets += 1;
            return;
        }
        let frames = match parse_frames(&opened.payload) {
            Ok(frames) => frames,
            Err(_) => {
                state.stats.frame_errors += 1;
                return;
            }
        };
        let mut cleartext = opened.header_bytes;
        cleartext.extend_from_slice(&opened.payload);
        effects.push(Effect::Emit(Event::PacketReceived {
            header: opened.header,
            frames,
            level,
            timestamp_ms,
            cleartext,
        }));
    }

    fn datagram(state: &mut ConnectionState, datagram: &[u8], timestamp_ms: u64) -> Vec<Effect> {
        let mut effects = Vec::new();
        let mut rest = datagram;
        let ctx = ParseContext::new(state.scid.len());
        while !rest.is_empty() {
            let Ok(protected) = parse_protected_header(rest, ctx) else {
                state.stats.undecodable_packets += 1;
                break;
            };
            let len = protected.packet_len();
            match protected {
                ProtectedHeader::Unprotected { header, .. } => {
                    effects.push(Effect::Emit(Event::PacketReceived {
                        header,
                        frames: Vec::new(),
                        level: EncryptionLevel::Initial,
                        timestamp_ms,
                        cleartext: rest[..len].to_vec(),
                    }));
                }
                ProtectedHeader::Long { packet_type, .. } => {
                    if let Some(level) = EncryptionLevel::from_long_packet_type(packet_type) {
                        Self::packet(state, level, &rest[..len], timestamp_ms, &mut effects);
                    }
                }
                ProtectedHeader::Short { .. } => {
                    Self::packet(state, EncryptionLevel::OneRtt, &rest[..len], timestamp_ms, &mut effects);
                }
            }
            rest = &rest[len..];
        }
        effects
    }
}

impl Agent for ParserAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Parser
    }

    fn subscriptions(&self) -> &'static [EventKind] {
        &[EventKind::DatagramReceived, EventKind::NewKeysAvailable]
    }

    fn handle(&mut self, event: &Event, state: &mut ConnectionState) -> Result<Vec<Effect>, ConnError> {
        match event {
            Event::DatagramReceived { datagram, timestamp_ms } => {
                Ok(Self::datagram(state, datagram, *timestamp_ms))
            }
            Event::NewKeysAvailable { level } => {
                let (ready, waiting): (Vec<_>, Vec<_>) =
                    std::mem::take(&mut state.buffered).into_iter().partition(|(l, _, _)| l == level);
                state.buffered = waiting;
                let mut effects = Vec::new();
                for (level, packet, ts) in ready {
                    Self::packet(state, level, &packet, ts, &mut effects);
                }
                Ok(effects)
            }
            _ => Ok(Vec::new()),
        }
    }
}

/// Feeds CRYPTO data to the handshake provider and installs its keys.
struct TlsAgent;

impl Agent for TlsAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Tls
    }

    fn subscriptions(&self) -> &'static [EventKind] {
        &[EventKind::PacketReceived]
    }

    fn handle(&mut self, event: &Event, state: &mut ConnectionState) -> Result<Vec<Effect>, ConnError> {
        let Event::PacketReceived { frames, level, .. } = event else {
            return Ok(Vec::new());
        };
        let mut effects = Vec::new();
        let buffer = &mut state.crypto_recv[level.index()];
        for frame in frames {
            if let Frame::Crypto { offset, data } = frame {
                buffer.insert(*offset, data);
            }
        }
        let fresh = buffer.read();
        if fresh.is_empty() {
            return Ok(effects);
        }
        let outputs = match state.provider.consume(*level, &fresh) {
            Ok(outputs) => outputs,
            Err(e) => {
                state.handshake_error = Some(e.clone());
                return Err(ConnError::Handshake(e));
            }
        };
        for (out_level, data) in outputs {
            effects.push(queue_crypto(state, out_level, data));
        }
        effects.extend(install_exported_keys(state));
        if !state.peer_tp_applied {
            if let Some(raw) = state.provider.peer_transport_parameters_raw() {
                if let Ok((params, _)) = crate::wire::TransportParameters::decode_lenient(raw) {
                    state.flow.apply_peer_parameters(&params);
                }
                state.peer_tp_applied = true;
            }
        }
        Ok(effects)
    }
}

/// Acknowledges every ack-eliciting packet with all ranges received so far.
struct AckAgent;

impl Agent for AckAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Ack
    }

    fn subscriptions(&self) -> &'static [EventKind] {
        &[EventKind::PacketReceived]
    }

    fn handle(&mut self, event: &Event, state: &mut ConnectionState) -> Result<Vec<Effect>, ConnError> {
        let Event::PacketReceived { header, frames, level, .. } = event else {
            return Ok(Vec::new());
        };
        if header.packet_number().is_none() || !frames.iter().any(Frame::is_ack_eliciting) {
            return Ok(Vec::new());
        }
        let mut ranges = state.space(level.space()).received.descending();
        ranges.truncate(MAX_ACK_RANGES);
        let ack_level = match level {
            EncryptionLevel::ZeroRtt => EncryptionLevel::OneRtt,
            other => *other,
        };
        Ok(Frame::ack_from_ranges(&ranges, 0)
            .map(|frame| Effect::QueueFrame { level: ack_level, frame })
            .into_iter()
            .collect())
    }
}

/// Extends receive credit when a scenario asks for it.
struct FlowControlAgent;

impl Agent for FlowControlAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::FlowControl
    }

    fn subscriptions(&self) -> &'static [EventKind] {
        &[EventKind::Command]
    }

    fn handle(&mut self, event: &Event, state: &mut ConnectionState) -> Result<Vec<Effect>, ConnError> {
        let level = EncryptionLevel::OneRtt;
        match event {
            Event::Command(Command::RaiseStreamLimit { stream_id, max }) => {
                state.flow.local_stream_max.insert(*stream_id, *max);
                Ok(vec![Effect::QueueFrame {
                    level,
                    frame: Frame::MaxStreamData { stream_id: *stream_id, max: *max },
                }])
            }
            Event::Command(Command::RaiseDataLimit { max }) => {
                state.flow.local_max_data = *max;
                Ok(vec![Effect::QueueFrame { level, frame: Frame::MaxData { max: *max } }])
            }
            _ => Ok(Vec::new()),
        }
    }
}

/// Starts the handshake, adopts the server's connection ID and confirms
/// the handshake on HANDSHAKE_DONE.
struct HandshakeAgent;

impl Agent for HandshakeAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Handshake
    }

    fn subscriptions(&self) -> &'static [EventKind] {
        &[EventKind::Started, EventKind::PacketReceived]
    }

    fn handle(&mut self, event: &Event, state: &mut ConnectionState) -> Result<Vec<Effect>, ConnError> {
        match event {
            Event::Started => {
                let outputs = state.provider.initiate().map_err(|e| {
                    state.handshake_error = Some(e.clone());
                    ConnError::Handshake(e)
                })?;
                let mut effects: Vec<Effect> =
                    outputs.into_iter().map(|(level, data)| queue_crypto(state, level, data)).collect();
                effects.extend(install_exported_keys(state));
                Ok(effects)
            }
            Event::PacketReceived { header, frames, .. } => {
                if let PacketHeader::Long(h) = header {
                    if !state.dcid_confirmed {
                        state.dcid = h.scid;
                        state.dcid_confirmed = true;
                    }
                }
                if frames.iter().any(|f| matches!(f, Frame::HandshakeDone)) {
                    // Nothing sent at the handshake levels needs resending now.
                    for level in [EncryptionLevel::Initial, EncryptionLevel::Handshake] {
                        state.space_mut(level.space()).sent.clear();
                    }
                }
                Ok(Vec::new())
            }
            _ => Ok(Vec::new()),
        }
    }
}

/// Declares packets lost after a fixed timeout and requeues their frames.
#[derive(Default)]
struct RetransmissionAgent {
    armed: bool,
}

impl Agent for RetransmissionAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Retransmission
    }

    fn subscriptions(&self) -> &'static [EventKind] {
        &[EventKind::PacketSent, EventKind::Timeout, EventKind::LossDetected]
    }

    fn handle(&mut self, event: &Event, state: &mut ConnectionState) -> Result<Vec<Effect>, ConnError> {
        match event {
            Event::PacketSent { frames, .. } => {
                if !self.armed && frames.iter().any(Frame::is_ack_eliciting) {
                    self.armed = true;
                    return Ok(vec![Effect::ArmTimer {
                        timer: TimerId::Retransmission,
                        delay_ms: RETRANSMISSION_TIMEOUT_MS,
                    }]);
                }
                Ok(Vec::new())
            }
            Event::Timeout { timer: TimerId::Retransmission } => {
                self.armed = false;
                let now = state.now_ms();
                let mut lost: BTreeMap<EncryptionLevel, Vec<u64>> = BTreeMap::new();
                let mut oldest_pending: Option<u64> = None;
                for space in &state.spaces {
                    for (&pn, record) in &space.sent {
                        if now.saturating_sub(record.sent_ms) >= RETRANSMISSION_TIMEOUT_MS {
                            lost.entry(record.level).or_default().push(pn);
                        } else {
                            oldest_pending =
                                Some(oldest_pending.map_or(record.sent_ms, |o| o.min(record.sent_ms)));
                        }
                    }
                }
                let mut effects: Vec<Effect> = lost
                    .into_iter()
                    .map(|(level, packet_numbers)| {
                        Effect::Emit(Event::LossDetected { level, packet_numbers })
                    })
                    .collect();
                if let Some(sent) = oldest_pending {
                    self.armed = true;
                    effects.push(Effect::ArmTimer {
                        timer: TimerId::Retransmission,
                        delay_ms: (sent + RETRANSMISSION_TIMEOUT_MS).saturating_sub(now).max(1),
                    });
                }
                Ok(effects)
            }
            Event::LossDetected { level, packet_numbers } => {
                let space = state.space_mut(level.space());
                let mut effects = Vec::new();
                for pn in packet_numbers {
                    if let Some(record) = space.sent.remove(pn) {
                        for frame in record.frames.into_iter().filter(Frame::is_retransmittable) {
                            effects.push(Effect::QueueFrame { level: record.level, frame });
                        }
                    }
                }
                Ok(effects)
            }
            _ => Ok(Vec::new()),
        }
    }
}

/// Turns queued frames into protected packets, one per datagram.
struct BundlerAgent;

impl Agent for BundlerAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Bundler
    }

    fn subscriptions(&self) -> &'static [EventKind] {
        &[EventKind::FramesQueued, EventKind::NewKeysAvailable]
    }

    fn handle(&mut self, _event: &Event, state: &mut ConnectionState) -> Result<Vec<Effect>, ConnError> {
        if state.closed.is_some() {
            return Ok(Vec::new());
        }
        let mut effects = Vec::new();
        for level in EncryptionLevel::ALL {
            if state.queue(level).is_empty() || !state.has_keys(level) {
                continue;
            }
            for packet in state.bundle(level)? {
                effects.push(Effect::Emit(Event::DatagramReady(packet)));
            }
        }
        Ok(effects)
    }
}

/// Handles CONNECTION_CLOSE in both directions.
struct ClosingAgent;

impl Agent for ClosingAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Closing
    }

    fn subscriptions(&self) -> &'static [EventKind] {
        &[EventKind::PacketReceived, EventKind::Command, EventKind::PacketSent]
    }

    fn handle(&mut self, event: &Event, state: &mut ConnectionState) -> Result<Vec<Effect>, ConnError> {
        match event {
            Event::PacketReceived { frames, .. } => Ok(frames
                .iter()
                .find_map(|f| match f {
                    Frame::ConnectionClose { error_code, reason, .. }
                    | Frame::ApplicationClose { error_code, reason } => Some(Effect::Close {
                        error_code: *error_code,
                        reason: String::from_utf8_lossy(reason).into_owned(),
                        by_peer: true,
                    }),
                    _ => None,
                })
                .into_iter()
                .collect()),
            Event::Command(Command::Close { error_code, reason }) => {
                let level = EncryptionLevel::ALL
                    .into_iter()
                    .rev()
                    .find(|l| *l != EncryptionLevel::ZeroRtt && state.has_keys(*l))
                    .unwrap_or(EncryptionLevel::Initial);
                let frame = if level == EncryptionLevel::OneRtt {
                    Frame::ApplicationClose { error_code: *error_code, reason: reason.clone().into_bytes() }
                } else {
                    Frame::ConnectionClose {
                        error_code: *error_code,
                        frame_type: 0,
                        reason: reason.clone().into_bytes(),
                    }
                };
                Ok(vec![Effect::QueueFrame { level, frame }])
            }
            Event::PacketSent { frames, .. } => Ok(frames
                .iter()
                .find_map(|f| match f {
                    Frame::ConnectionClose { error_code, reason, .. }
                    | Frame::ApplicationClose { error_code, reason } => Some(Effect::Close {
                        error_code: *error_code,
                        reason: String::from_utf8_lossy(reason).into_owned(),
                        by_peer: false,
                    }),
                    _ => None,
                })
                .into_iter()
                .collect()),
            _ => Ok(Vec::new()),
        }
    }
}

/// Writes datagrams to the transport.
struct SocketAgent;

impl Agent for SocketAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Socket
    }

    fn subscriptions(&self) -> &'static [EventKind] {
        &[EventKind::DatagramReady]
    }

    fn handle(&mut self, event: &Event, state: &mut ConnectionState) -> Result<Vec<Effect>, ConnError> {
        let Event::DatagramReady(packet) = event else {
            return Ok(Vec::new());
        };
        state.io.send(&packet.datagram).map_err(|e| ConnError::Io(e.to_string()))?;
        Ok(vec![Effect::Emit(Event::PacketSent {
            header: packet.header.clone(),
            frames: packet.frames.clone(),
            level: packet.level,
            timestamp_ms: state.now_ms(),
            cleartext: packet.cleartext.clone(),
            size: packet.datagram.len(),
        })])
    }
}
