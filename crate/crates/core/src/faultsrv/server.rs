use std::collections::{BTreeMap, HashMap, VecDeque};
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Fault, SentByServer, ServerConfig, ServerError};
use crate::conn::{RangeSet, RecvBuffer};
use crate::protection::{
    derive_initial_keys, packet_number_length, protect, unprotect, EncryptionLevel,
    HandshakeProvider, LevelKeys, NullConfig, NullHandshakeProvider, PacketNumberSpace, Role,
    AEAD_TAG_LEN,
};
use crate::wire::{
    encode_varint, parse_protected_header, serialize_frames, serialize_frames_unchecked,
    ConnectionId, Frame, LongHeader, LongPacketType, PacketHeader, ParseContext, ProtectedHeader,
    ShortHeader, TransportParameterId, VersionNegotiation, QUIC_V1,
};

const CID_LEN: usize = 8;
const MAX_DATAGRAM: usize = 1252;
const MIN_INITIAL_DATAGRAM: usize = 1200;
const AMPLIFICATION_FACTOR: u64 = 3;
/// Worst-case long header: flags, version, two 20-byte CIDs with lengths,
/// a short token length, a 2-byte length and a 4-byte packet number.
const HEADER_ALLOWANCE: usize = 1 + 4 + 21 + 21 + 1 + 2 + 4;
const SPAM_BLOCKED_FRAMES: usize = 30;
const MAX_CONNECTIONS: usize = 256;
const HANDSHAKE_FAILURE: u64 = 0x0128;

#[derive(Debug)]
struct Outgoing {
    datagram: Vec<u8>,
    record: SentByServer,
}

#[derive(Debug, Default)]
struct ResponseStream {
    recv: RecvBuffer,
    fin_offset: Option<u64>,
    opened_out_of_order: bool,
    answered: bool,
    body: Vec<u8>,
    send_offset: u64,
    fin_sent: bool,
    limit: u64,
    blocked_at: Option<u64>,
}

#[derive(Debug)]
struct ServerConn {
    original_dcid: ConnectionId,
    client_scid: ConnectionId,
    scid: ConnectionId,
    keys: [Option<LevelKeys>; 4],
    provider: NullHandshakeProvider,
    crypto_recv: [RecvBuffer; 4],
    crypto_send_offset: [u64; 4],
    next_pn: [u64; 3],
    received: [RangeSet; 3],
    ack_pending: [bool; 3],
    reordered: [bool; 3],
    bytes_received: u64,
    bytes_sent: u64,
    validated: bool,
    pending: VecDeque<Outgoing>,
    streams: BTreeMap<u64, ResponseStream>,
    peer_tp_applied: bool,
    peer_stream_default: u64,
    peer_max_data: u64,
    data_sent: u64,
    done_sent: bool,
    /// Stalled or livelocked: ignore everything and send nothing.
    silent: bool,
    stall_pending: bool,
    closed: bool,
}

/// Server state for all peers, independent of any socket.
#[derive(Debug)]
pub struct Server {
    config: ServerConfig,
    conns: HashMap<SocketAddr, ServerConn>,
    rng: ChaCha8Rng,
    sent: Arc<Mutex<Vec<SentByServer>>>,
}

impl Server {
    pub fn new(config: ServerConfig, sent: Arc<Mutex<Vec<SentByServer>>>) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7365_7276_6572);
        Server { config, conns: HashMap::new(), rng, sent }
    }

    pub fn fault(&self) -> Fault {
        self.config.fault
    }

    pub(super) fn run(&mut self, socket: &UdpSocket, stop: &AtomicBool) -> Result<(), ServerError> {
        let mut buf = vec![0u8; 65_535];
        while !stop.load(Ordering::SeqCst) {
            match socket.recv_from(&mut buf) {
                Ok((n, peer)) => {
                    for datagram in self.handle_datagram(peer, &buf[..n]) {
                        // A vanished client is not the server's problem.
                        let _ = socket.send_to(&datagram, peer);
                    }
                }
                Err(e)
                    if matches!(
                        e.kind(),
                        std::io::ErrorKind::WouldBlock
                            | std::io::ErrorKind::TimedOut
                            | std::io::ErrorKind::ConnectionReset
                            | std::io::ErrorKind::ConnectionRefused
                    ) => {}
                Err(e) => return Err(e.into()),
            }
        }
        Ok(())
    }

    /// Processes one datagram from `peer` and returns the datagrams to send
    /// back, in order.
    pub fn handle_datagram(&mut self, peer: SocketAddr, datagram: &[u8]) -> Vec<Vec<u8>> {
        let ctx = ParseContext::new(CID_LEN);
        let Ok(first) = parse_protected_header(datagram, ctx) else {
            return Vec::new();
        };
        if let ProtectedHeader::Unprotected {
            header: PacketHeader::UnsupportedVersion { version, dcid, scid, .. },
            ..
        } = &first
        {
            return self.version_negotiation(*version, dcid, scid).into_iter().collect();
        }
        if let ProtectedHeader::Long { packet_type: LongPacketType::Initial, dcid, scid, .. } = &first {
            let known = self
                .conns
                .get(&peer)
                .is_some_and(|c| c.original_dcid == *dcid || c.scid == *dcid);
            if !known {
                if datagram.len() < MIN_INITIAL_DATAGRAM {
                    return Vec::new();
                }
                let conn = self.accept(*dcid, *scid);
                if self.conns.len() >= MAX_CONNECTIONS {
                    self.conns.clear();
                }
                self.conns.insert(peer, conn);
            }
        }
        let config = self.config.clone();
        let Some(conn) = self.conns.get_mut(&peer) else {
            return Vec::new();
        };
        let out = conn.on_datagram(datagram, &config);
        if conn.closed {
            self.conns.remove(&peer);
        }
        let mut log = self.sent.lock().expect("server log poisoned");
        out.into_iter()
            .map(|o| {
                log.push(o.record);
                o.datagram
            })
            .collect()
    }

    fn version_negotiation(
        &mut self,
        offered: u32,
        dcid: &ConnectionId,
        scid: &ConnectionId,
    ) -> Option<Vec<u8>> {
        // Version 0 is itself a Version Negotiation packet.
        if offered == 0 || self.config.fault == Fault::VnSilent {
            return None;
        }
        let mut versions = vec![QUIC_V1];
        if self.config.fault == Fault::VnEchoReserved {
            versions.insert(0, offered);
        }
        let header = PacketHeader::VersionNegotiation(VersionNegotiation {
            unused: self.rng.gen::<u8>() & 0x7f,
            dcid: *scid,
            scid: *dcid,
            versions,
        });
        let bytes = header.serialize().ok()?;
        self.sent.lock().expect("server log poisoned").push(SentByServer {
            level: EncryptionLevel::Initial,
            frames: Vec::new(),
            stream_limits: Vec::new(),
        });
        Some(bytes)
    }

    fn accept(&mut self, original_dcid: ConnectionId, client_scid: ConnectionId) -> ServerConn {
        let mut raw = [0u8; CID_LEN];
        self.rng.fill(&mut raw);
        let scid = ConnectionId::new(&raw).expect("8-byte connection id");
        let mut tp = self.config.transport_parameters.clone();
        tp.set_original_dcid(&original_dcid).set_initial_scid(&scid);
        if self.config.fault == Fault::TpDuplicate {
            let value = tp.initial_max_data().unwrap_or(1 << 20);
            tp.push_duplicate(
                TransportParameterId::InitialMaxData.code(),
                encode_varint(value).expect("varint range"),
            );
        }
        let mut provider = NullHandshakeProvider::server(NullConfig {
            seed: self.config.seed,
            transport_parameters: tp.encode(),
            certificate_len: self.config.certificate_len,
            issue_tickets: self.config.fault != Fault::NoTicket,
            accept_early_data: self.config.fault != Fault::Reject0Rtt,
            ..NullConfig::default()
        });
        provider.initiate().expect("server initiate does not fail");
        let mut keys: [Option<LevelKeys>; 4] = Default::default();
        // The client only ever offers version 1 here and its CID is non-empty.
        if let Ok((client, server)) = derive_initial_keys(&original_dcid, QUIC_V1) {
            keys[EncryptionLevel::Initial.index()] =
                Some(LevelKeys { level: EncryptionLevel::Initial, client, server });
        }
        ServerConn {
            original_dcid,
            client_scid,
            scid,
            keys,
            provider,
            crypto_recv: Default::default(),
            crypto_send_offset: [0; 4],
            next_pn: [0; 3],
            received: Default::default(),
            ack_pending: [false; 3],
            reordered: [false; 3],
            bytes_received: 0,
            bytes_sent: 0,
            validated: false,
            pending: VecDeque::new(),
            streams: BTreeMap::new(),
            peer_tp_applied: false,
            peer_stream_default: 0,
            peer_max_data: 0,
            data_sent: 0,
            done_sent: false,
            silent: false,
            stall_pending: false,
            closed: false,
        }
    }
}

/// Frames produced while handling one datagram, in sending order.
#[derive(Default)]
struct Plan {
    by_level: [Vec<Frame>; 4],
    /// Packets that must not share space with anything else; the flag
    /// requests a corrupted AEAD tag.
    standalone: Vec<(EncryptionLevel, Vec<Frame>, bool)>,
}

impl ServerConn {
    fn on_datagram(&mut self, datagram: &[u8], config: &ServerConfig) -> Vec<Outgoing> {
        if self.silent {
            return Vec::new();
        }
        self.bytes_received += datagram.len() as u64;
        let ctx = ParseContext::new(CID_LEN);
        let mut plan = Plan::default();
        let mut rest = datagram;
        while !rest.is_empty() {
            let Ok(protected) = parse_protected_header(rest, ctx) else {
                break;
            };
            let packet_len = protected.packet_len().min(rest.len());
            let level = match &protected {
                ProtectedHeader::Long { packet_type, version: QUIC_V1, .. } => {
                    EncryptionLevel::from_long_packet_type(*packet_type)
                }
                ProtectedHeader::Short { .. } => Some(EncryptionLevel::OneRtt),
                _ => None,
            };
            if let Some(level) = level {
                self.on_packet(level, &rest[..packet_len], config, &mut plan);
                if self.silent {
                    return Vec::new();
                }
            }
            rest = &rest[packet_len..];
        }
        self.finish(plan, config)
    }

    fn on_packet(
        &mut self,
        level: EncryptionLevel,
        packet: &[u8],
        config: &ServerConfig,
        plan: &mut Plan,
    ) {
        let Some(keys) = &self.keys[level.index()] else {
            return;
        };
        let space = level.space().index();
        let largest = self.received[space].max();
        let Ok(packet) =
            unprotect(packet, ParseContext::new(CID_LEN), keys.opening(Role::Server), largest)
        else {
            return;
        };
        let Some(pn) = packet.header.packet_number() else {
            return;
        };
        if self.received[space].contains(pn) {
            return;
        }
        if largest.is_some_and(|l| pn < l) {
            self.reordered[space] = true;
        }
        self.received[space].insert(pn);
        if level == EncryptionLevel::Handshake {
            self.validated = true;
        }
        let Ok(frames) = crate::wire::parse_frames(&packet.payload) else {
            return;
        };
        if frames.iter().any(Frame::is_ack_eliciting) {
            self.ack_pending[space] = true;
        }
        for frame in frames {
            self.on_frame(level, frame, config, plan);
            if self.silent || self.closed {
                return;
            }
        }
    }

    fn on_frame(&mut self, level: EncryptionLevel, frame: Frame, config: &ServerConfig, plan: &mut Plan) {
        match frame {
            Frame::Crypto { offset, data } => self.on_crypto(level, offset, &data, config, plan),
            Frame::Stream { stream_id, offset, data, fin } => {
                // Only client-initiated bidirectional streams carry requests.
                if stream_id & 0x03 != 0 {
                    return;
                }
                let default_limit = self.peer_stream_default;
                let stream = self.streams.entry(stream_id).or_insert_with(|| ResponseStream {
                    opened_out_of_order: offset > 0,
                    limit: default_limit,
                    ..ResponseStream::default()
                });
                stream.recv.insert(offset, &data);
                if fin {
                    stream.fin_offset = Some(offset + data.len() as u64);
                }
                let complete =
                    stream.fin_offset.is_some_and(|f| stream.recv.contiguous_end() >= f);
                if !complete || stream.answered {
                    return;
                }
                stream.answered = true;
                if config.fault == Fault::ReorderLivelock && stream.opened_out_of_order {
                    self.silent = true;
                    return;
                }
                stream.body = request_path(stream.recv.assembled())
                    .and_then(|p| config.resources.get(&p).cloned())
                    .unwrap_or_default();
                self.pump(stream_id, config.fault, plan);
            }
            Frame::MaxStreamData { stream_id, max } => {
                if let Some(stream) = self.streams.get_mut(&stream_id) {
                    stream.limit = stream.limit.max(max);
                    if stream.answered {
                        self.pump(stream_id, config.fault, plan);
                    }
                }
            }
            Frame::MaxData { max } => {
                self.peer_max_data = self.peer_max_data.max(max);
                let ids: Vec<u64> = self.streams.keys().copied().collect();
                for id in ids {
                    if self.streams[&id].answered {
                        self.pump(id, config.fault, plan);
                    }
                }
            }
            Frame::ConnectionClose { .. } | Frame::ApplicationClose { .. } => self.closed = true,
            _ => {}
        }
    }

    fn on_crypto(
        &mut self,
        level: EncryptionLevel,
        offset: u64,
        data: &[u8],
        config: &ServerConfig,
        plan: &mut Plan,
    ) {
        let buffer = &mut self.crypto_recv[level.index()];
        buffer.insert(offset, data);
        let fresh = buffer.read();
        if fresh.is_empty() {
            return;
        }
        let was_complete = self.provider.is_complete();
        let output = match self.provider.consume(level, &fresh) {
            Ok(output) => output,
            Err(_) => {
                plan.standalone.push((
                    level,
                    vec![Frame::ConnectionClose {
                        error_code: HANDSHAKE_FAILURE,
                        frame_type: 0x06,
                        reason: b"handshake failure".to_vec(),
                    }],
                    false,
                ));
                self.closed = true;
                return;
            }
        };
        for keys in self.provider.exported_secrets() {
            let idx = keys.level.index();
            self.keys[idx] = Some(keys);
        }
        if !self.peer_tp_applied {
            if let Some(Ok((tp, _))) = self
                .provider
                .peer_transport_parameters_raw()
                .map(crate::wire::TransportParameters::decode_lenient)
            {
                self.peer_stream_default = tp.initial_max_stream_data_bidi_local().unwrap_or(0);
                self.peer_max_data = tp.initial_max_data().unwrap_or(0);
                self.peer_tp_applied = true;
            }
        }
        let stall = config.fault == Fault::StallAfterSh;
        for (out_level, bytes) in output {
            if stall && out_level != EncryptionLevel::Initial {
                continue;
            }
            let frame = Frame::Crypto { offset: self.crypto_send_offset[out_level.index()], data: bytes.clone() };
            self.crypto_send_offset[out_level.index()] += bytes.len() as u64;
            if out_level == EncryptionLevel::OneRtt {
                // The session ticket travels on its own after HANDSHAKE_DONE.
                plan.standalone.push((out_level, vec![frame], false));
            } else {
                plan.by_level[out_level.index()].push(frame);
            }
        }
        if stall {
            // The ServerHello still goes out; nothing follows it.
            self.stall_pending = true;
        }
        if !was_complete && self.provider.is_complete() && !self.done_sent {
            self.done_sent = true;
            let corrupt = config.fault == Fault::Bad1RttProtection;
            plan.standalone.insert(0, (EncryptionLevel::OneRtt, vec![Frame::HandshakeDone], corrupt));
        }
    }

    /// Sends as much of a response as the client's credit allows.
    fn pump(&mut self, stream_id: u64, fault: Fault, plan: &mut Plan) {
        let conn_room = self.peer_max_data.saturating_sub(self.data_sent);
        let Some(stream) = self.streams.get_mut(&stream_id) else {
            return;
        };
        let body_len = stream.body.len() as u64;
        let end = if fault == Fault::IgnoreStreamLimit {
            body_len
        } else {
            body_len.min(stream.limit).min(stream.send_offset + conn_room)
        };
        let frames = &mut plan.by_level[EncryptionLevel::OneRtt.index()];
        if end > stream.send_offset || (end == body_len && !stream.fin_sent) {
            let frame = Frame::Stream {
                stream_id,
                offset: stream.send_offset,
                data: stream.body[stream.send_offset as usize..end as usize].to_vec(),
                fin: end == body_len,
            };
            if fault == Fault::StreamBlockedSpam && stream.send_offset > 0 {
                frames.push(frame.clone());
            }
            frames.push(frame);
            self.data_sent += end - stream.send_offset;
            stream.send_offset = end;
            stream.fin_sent = end == body_len;
        }
        if stream.send_offset < body_len && stream.blocked_at != Some(stream.limit) {
            stream.blocked_at = Some(stream.limit);
            let blocked = Frame::StreamDataBlocked { stream_id, limit: stream.limit };
            match fault {
                Fault::StreamBlockedSpam => {
                    frames.extend(std::iter::repeat_n(blocked, SPAM_BLOCKED_FRAMES));
                }
                Fault::EmptyStreamFrames => {
                    frames.push(Frame::Stream {
                        stream_id,
                        offset: stream.send_offset,
                        data: Vec::new(),
                        fin: false,
                    });
                    frames.push(blocked);
                }
                _ => frames.push(blocked),
            }
        }
    }

    fn ack_frame(&mut self, space: usize, fault: Fault) -> Option<Frame> {
        if !std::mem::take(&mut self.ack_pending[space]) {
            return None;
        }
        let reordered = std::mem::take(&mut self.reordered[space]);
        let largest = self.received[space].max()?;
        if fault == Fault::AckGapOverflow && reordered {
            // Claims one packet more than exists below the largest.
            return Some(Frame::Ack {
                largest_acked: largest,
                ack_delay: 0,
                first_range: largest + 1,
                ranges: Vec::new(),
                ecn: None,
            });
        }
        let ranges = self.received[space].descending();
        Frame::ack_from_ranges(&ranges[..ranges.len().min(32)], 0)
    }

    /// Turns the plan into packets, in level order, and releases whatever
    /// the anti-amplification budget allows.
    fn finish(&mut self, mut plan: Plan, config: &ServerConfig) -> Vec<Outgoing> {
        let fault = config.fault;
        for level in [EncryptionLevel::Initial, EncryptionLevel::Handshake] {
            let space = level.space().index();
            let mut frames = std::mem::take(&mut plan.by_level[level.index()]);
            if let Some(ack) = self.ack_frame(space, fault) {
                frames.insert(0, ack);
            }
            self.packetize(level, frames, false, fault);
        }
        for (level, frames, corrupt) in std::mem::take(&mut plan.standalone) {
            self.packetize(level, frames, corrupt, fault);
        }
        let mut app = std::mem::take(&mut plan.by_level[EncryptionLevel::OneRtt.index()]);
        if let Some(ack) = self.ack_frame(PacketNumberSpace::Application.index(), fault) {
            app.insert(0, ack);
        }
        self.packetize(EncryptionLevel::OneRtt, app, false, fault);
        if self.stall_pending {
            self.silent = true;
        }
        self.release(fault)
    }

    fn release(&mut self, fault: Fault) -> Vec<Outgoing> {
        let mut out = Vec::new();
        while let Some(next) = self.pending.front() {
            let len = next.datagram.len() as u64;
            let limited = !self.validated && fault != Fault::NoAmplificationLimit;
            if limited && self.bytes_sent + len > AMPLIFICATION_FACTOR * self.bytes_received {
                break;
            }
            self.bytes_sent += len;
            out.extend(self.pending.pop_front());
        }
        out
    }

    fn header(&self, level: EncryptionLevel, pn: u64) -> PacketHeader {
        let pn_len = packet_number_length(pn, None);
        match level.long_packet_type() {
            Some(packet_type) => PacketHeader::Long(LongHeader {
                packet_type,
                version: QUIC_V1,
                dcid: self.client_scid,
                scid: self.scid,
                token: Vec::new(),
                length: 0,
                packet_number: pn,
                pn_len,
            }),
            None => PacketHeader::Short(ShortHeader {
                spin: false,
                key_phase: false,
                dcid: self.client_scid,
                packet_number: pn,
                pn_len,
            }),
        }
    }

    /// Splits `frames` into packets no larger than the datagram limit and
    /// queues them.
    fn packetize(&mut self, level: EncryptionLevel, frames: Vec<Frame>, corrupt: bool, fault: Fault) {
        let budget = MAX_DATAGRAM - HEADER_ALLOWANCE - AEAD_TAG_LEN;
        let mut queue: VecDeque<Frame> = frames.into();
        let mut current = Vec::new();
        let mut used = 0;
        while let Some(frame) = queue.pop_front() {
            let len = frame.encoded_len();
            if used + len <= budget {
                used += len;
                current.push(frame);
                continue;
            }
            match split(frame, budget - used) {
                (Some(head), tail) => {
                    current.push(head);
                    queue.push_front(tail);
                }
                (None, whole) => {
                    if current.is_empty() {
                        // Cannot happen for frames this server builds.
                        continue;
                    }
                    queue.push_front(whole);
                }
            }
            self.seal(level, std::mem::take(&mut current), corrupt, fault);
            used = 0;
        }
        if !current.is_empty() {
            self.seal(level, current, corrupt, fault);
        }
    }

    fn seal(&mut self, level: EncryptionLevel, mut frames: Vec<Frame>, corrupt: bool, fault: Fault) {
        let Some(keys) = &self.keys[level.index()] else {
            return;
        };
        let keys = keys.sealing(Role::Server).clone();
        let space = level.space().index();
        let pn = self.next_pn[space];
        self.next_pn[space] += 1;
        let header = self.header(level, pn);
        let pn_len = usize::from(header.pn_len().unwrap_or(4));
        let malformed = matches!(fault, Fault::EmptyStreamFrames | Fault::AckGapOverflow);
        let encoded = if malformed { serialize_frames_unchecked(&frames) } else { serialize_frames(&frames) };
        let Ok(mut payload) = encoded else {
            return;
        };
        let mut padding = 4usize.saturating_sub(pn_len + payload.len());
        if level == EncryptionLevel::Initial && frames.iter().any(Frame::is_ack_eliciting) {
            let header_len = header.serialize().map_or(HEADER_ALLOWANCE, |h| h.len());
            // The length field may grow by a byte once the payload does.
            let total = header_len + 1 + payload.len() + padding + AEAD_TAG_LEN;
            padding += MIN_INITIAL_DATAGRAM.saturating_sub(total);
        }
        if padding > 0 {
            payload.resize(payload.len() + padding, 0);
            frames.push(Frame::Padding(padding));
        }
        let Ok(protected) = protect(&header, &payload, &keys) else {
            return;
        };
        let mut datagram = protected.bytes;
        if corrupt {
            if let Some(last) = datagram.last_mut() {
                *last ^= 0xff;
            }
        }
        let stream_limits = frames
            .iter()
            .filter_map(|f| match f {
                Frame::Stream { stream_id, .. } => {
                    self.streams.get(stream_id).map(|s| (*stream_id, s.limit))
                }
                _ => None,
            })
            .collect();
        self.pending.push_back(Outgoing {
            datagram,
            record: SentByServer { level, frames, stream_limits },
        });
    }
}

fn split(frame: Frame, room: usize) -> (Option<Frame>, Frame) {
    match frame {
        Frame::Crypto { offset, data } => {
            let overhead = Frame::Crypto { offset, data: Vec::new() }.encoded_len() + 1;
            if room <= overhead || data.is_empty() {
                return (None, Frame::Crypto { offset, data });
            }
            let n = (room - overhead).min(data.len());
            (
                Some(Frame::Crypto { offset, data: data[..n].to_vec() }),
                Frame::Crypto { offset: offset + n as u64, data: data[n..].to_vec() },
            )
        }
        Frame::Stream { stream_id, offset, data, fin } => {
            let overhead = Frame::Stream { stream_id, offset, data: Vec::new(), fin }.encoded_len() + 1;
            if room <= overhead || data.is_empty() {
                return (None, Frame::Stream { stream_id, offset, data, fin });
            }
            let n = (room - overhead).min(data.len());
            (
                Some(Frame::Stream { stream_id, offset, data: data[..n].to_vec(), fin: false }),
                Frame::Stream { stream_id, offset: offset + n as u64, data: data[n..].to_vec(), fin },
            )
        }
        other => (None, other),
    }
}

/// Extracts `<path>` from `GET <path>\r\n`.
fn request_path(request: &[u8]) -> Option<String> {
    let text = std::str::from_utf8(request).ok()?;
    let line = text.strip_suffix("\r\n").unwrap_or(text);
    let path = line.strip_prefix("GET ")?.trim();
    (!path.is_empty()).then(|| path.to_string())
}
