use std::collections::{BTreeMap, HashMap};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::event::{Event, OutgoingPacket};
use super::io::DatagramIo;
use super::ranges::RangeSet;
use super::stream::{RecvBuffer, Stream};
use super::{ConnError, ConnectionConfig};
use crate::protection::{
    derive_initial_keys, packet_number_length, protect, EncryptionLevel, HandshakeError,
    HandshakeProvider, LevelKeys, PacketNumberSpace, Role, AEAD_TAG_LEN,
};
use crate::traces::{PacketDirection, PacketLog};
use crate::wire::{
    serialize_frames, ConnectionId, Frame, LongHeader, PacketHeader, ShortHeader,
    TransportParameters, VersionNegotiation,
};

/// Minimum size of a datagram carrying a client Initial packet.
pub const MIN_INITIAL_DATAGRAM: usize = 1200;
pub const CID_LEN: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentRecord {
    pub level: EncryptionLevel,
    pub frames: Vec<Frame>,
    pub sent_ms: u64,
    pub ack_eliciting: bool,
}

#[derive(Debug, Default)]
pub struct PnSpace {
    pub next_pn: u64,
    pub largest_acked: Option<u64>,
    pub largest_received: Option<u64>,
    pub received: RangeSet,
    /// Sent packets not yet acknowledged or declared lost.
    pub sent: BTreeMap<u64, SentRecord>,
    /// Largest packet number handed out so far, for the monotonicity check.
    last_sent: Option<u64>,
}

/// A packet as seen by the core bookkeeping, kept for scenario analysis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReceivedPacket {
    pub level: EncryptionLevel,
    pub header: PacketHeader,
    pub frames: Vec<Frame>,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatagramRecord {
    pub direction: PacketDirection,
    pub size: usize,
    pub timestamp_ms: u64,
    /// Level of the (single) packet in a sent datagram.
    pub level: Option<EncryptionLevel>,
}

/// Connection- and stream-level credit in both directions.
#[derive(Debug, Default, Clone)]
pub struct FlowLedger {
    pub peer_max_data: u64,
    pub peer_stream_max: HashMap<u64, u64>,
    pub peer_default_stream_max: u64,
    pub local_max_data: u64,
    pub local_stream_max: HashMap<u64, u64>,
    pub local_default_stream_max: u64,
    /// Sum of the highest offsets sent on every stream.
    pub data_sent: u64,
}

impl FlowLedger {
    pub fn peer_stream_limit(&self, stream_id: u64) -> u64 {
        self.peer_stream_max.get(&stream_id).copied().unwrap_or(self.peer_default_stream_max)
    }

    pub fn local_stream_limit(&self, stream_id: u64) -> u64 {
        self.local_stream_max.get(&stream_id).copied().unwrap_or(self.local_default_stream_max)
    }

    /// Takes the peer's limits, never lowering what is already known.
    pub fn apply_peer_parameters(&mut self, params: &TransportParameters) {
        if let Some(max) = params.initial_max_data() {
            self.peer_max_data = self.peer_max_data.max(max);
        }
        // Streams this client opens are bidirectional and remote to the peer.
        if let Some(max) = params.initial_max_stream_data_bidi_remote() {
            self.peer_default_stream_max = self.peer_default_stream_max.max(max);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CloseInfo {
    pub error_code: u64,
    pub reason: String,
    pub by_peer: bool,
}

#[derive(Debug, Default, Clone)]
pub struct Stats {
    pub datagrams_sent: u64,
    pub datagrams_received: u64,
    pub bytes_sent: u64,
    pub bytes_received: u64,
    /// Packets whose protection failed to verify, per level.
    pub decrypt_failures: [u64; 4],
    pub undecodable_packets: u64,
    pub frame_errors: u64,
    pub ack_anomalies: u64,
    pub duplicate_packets: u64,
}

/// Everything a connection knows. Agents read and update it; the bus owns it.
pub struct ConnectionState {
    pub(crate) config: ConnectionConfig,
    pub(crate) original_dcid: ConnectionId,
    pub(crate) dcid: ConnectionId,
    pub(crate) scid: ConnectionId,
    pub(crate) dcid_confirmed: bool,
    pub(crate) spaces: [PnSpace; 3],
    pub(crate) queues: [Vec<Frame>; 4],
    pub(crate) keys: [Option<LevelKeys>; 4],
    pub(crate) provider: Box<dyn HandshakeProvider>,
    pub(crate) crypto_recv: [RecvBuffer; 4],
    pub(crate) crypto_send_offset: [u64; 4],
    pub(crate) streams: BTreeMap<u64, Stream>,
    pub(crate) flow: FlowLedger,
    pub(crate) buffered: Vec<(EncryptionLevel, Vec<u8>, u64)>,
    pub(crate) received: Vec<ReceivedPacket>,
    pub(crate) datagrams: Vec<DatagramRecord>,
    pub(crate) version_negotiation: Option<VersionNegotiation>,
    pub(crate) peer_close: Option<CloseInfo>,
    pub(crate) closed: Option<CloseInfo>,
    pub(crate) handshake_confirmed: bool,
    pub(crate) handshake_error: Option<HandshakeError>,
    pub(crate) peer_tp_applied: bool,
    pub(crate) agent_errors: Vec<String>,
    pub(crate) stats: Stats,
    pub(crate) log: PacketLog,
    pub(crate) io: Box<dyn DatagramIo>,
    pub(crate) last_activity_ms: u64,
}

impl std::fmt::Debug for ConnectionState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConnectionState")
            .field("dcid", &self.dcid)
            .field("scid", &self.scid)
            .field("closed", &self.closed)
            .finish_non_exhaustive()
    }
}

impl ConnectionState {
    pub(crate) fn new(
        config: ConnectionConfig,
        mut provider: Box<dyn HandshakeProvider>,
        io: Box<dyn DatagramIo>,
        log: PacketLog,
    ) -> Result<Self, ConnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.cid_seed);
        let mut cid = || {
            let mut bytes = [0u8; CID_LEN];
            rng.fill_bytes(&mut bytes);
            ConnectionId::new(&bytes).expect("8-byte connection ID")
        };
        let original_dcid = cid();
        let scid = cid();

        let mut local_tp = config.transport_parameters.clone();
        local_tp.set_initial_scid(&scid);
        provider.set_transport_parameters(local_tp.encode());

        let (client, server) =
            derive_initial_keys(&original_dcid, crate::wire::QUIC_V1).map_err(ConnError::from)?;
        let initial = LevelKeys { level: EncryptionLevel::Initial, client, server };

        let mut flow = FlowLedger {
            local_max_data: local_tp.initial_max_data().unwrap_or(0),
            local_default_stream_max: local_tp.initial_max_stream_data_bidi_local().unwrap_or(0),
            ..FlowLedger::default()
        };
        if let Some(remembered) = &config.remembered_peer_parameters {
            flow.apply_peer_parameters(remembered);
        }

        Ok(ConnectionState {
            config,
            original_dcid,
            dcid: original_dcid,
            scid,
            dcid_confirmed: false,
            spaces: Default::default(),
            queues: Default::default(),
            keys: [Some(initial), None, None, None],
            provider,
            crypto_recv: Default::default(),
            crypto_send_offset: [0; 4],
            streams: BTreeMap::new(),
            flow,
            buffered: Vec::new(),
            received: Vec::new(),
            datagrams: Vec::new(),
            version_negotiation: None,
            peer_close: None,
            closed: None,
            handshake_confirmed: false,
            handshake_error: None,
            peer_tp_applied: false,
            agent_errors: Vec::new(),
            stats: Stats::default(),
            log,
            io,
            last_activity_ms: 0,
        })
    }

    pub fn now_ms(&self) -> u64 {
        self.log.elapsed_ms()
    }

    pub fn original_dcid(&self) -> &ConnectionId {
        &self.original_dcid
    }

    pub fn dcid(&self) -> &ConnectionId {
        &self.dcid
    }

    pub fn scid(&self) -> &ConnectionId {
        &self.scid
    }

    pub fn keys(&self, level: EncryptionLevel) -> Option<&LevelKeys> {
        self.keys[level.index()].as_ref()
    }

    pub fn has_keys(&self, level: EncryptionLevel) -> bool {
        self.keys[level.index()].is_some()
    }

    pub fn provider(&self) -> &dyn HandshakeProvider {
        self.provider.as_ref()
    }

    pub fn space(&self, space: PacketNumberSpace) -> &PnSpace {
        &self.spaces[space.index()]
    }

    pub(crate) fn space_mut(&mut self, space: PacketNumberSpace) -> &mut PnSpace {
        &mut self.spaces[space.index()]
    }

    pub fn queue(&self, level: EncryptionLevel) -> &[Frame] {
        &self.queues[level.index()]
    }

    pub fn stream(&self, stream_id: u64) -> Option<&Stream> {
        self.streams.get(&stream_id)
    }

    pub fn flow(&self) -> &FlowLedger {
        &self.flow
    }

    pub fn received(&self) -> &[ReceivedPacket] {
        &self.received
    }

    pub fn datagrams(&self) -> &[DatagramRecord] {
        &self.datagrams
    }

    pub fn version_negotiation(&self) -> Option<&VersionNegotiation> {
        self.version_negotiation.as_ref()
    }

    pub fn peer_close(&self) -> Option<&CloseInfo> {
        self.peer_close.as_ref()
    }

    pub fn closed(&self) -> Option<&CloseInfo> {
        self.closed.as_ref()
    }

    pub fn handshake_confirmed(&self) -> bool {
        self.handshake_confirmed
    }

    pub fn handshake_error(&self) -> Option<&HandshakeError> {
        self.handshake_error.as_ref()
    }

    pub fn agent_errors(&self) -> &[String] {
        &self.agent_errors
    }

    pub fn stats(&self) -> &Stats {
        &self.stats
    }

    /// Appends a frame to a level's send queue. An ACK replaces any ACK
    /// already waiting there.
    pub(crate) fn queue_frame(&mut self, level: EncryptionLevel, frame: Frame) {
        let queue = &mut self.queues[level.index()];
        if matches!(frame, Frame::Ack { .. }) {
            queue.retain(|f| !matches!(f, Frame::Ack { .. }));
        }
        queue.push(frame);
    }

    pub(crate) fn next_packet_number(&mut self, space: PacketNumberSpace) -> u64 {
        let s = self.space_mut(space);
        let pn = s.next_pn;
        s.next_pn += 1;
        pn
    }

    /// Hands out `count` consecutive packet numbers for the caller to use in
    /// any order.
    pub(crate) fn reserve_packet_numbers(&mut self, space: PacketNumberSpace, count: u64) -> u64 {
        let s = self.space_mut(space);
        let first = s.next_pn;
        s.next_pn += count;
        first
    }

    fn header_for(&self, level: EncryptionLevel, pn: u64) -> PacketHeader {
        let largest_acked = self.space(level.space()).largest_acked;
        let pn_len = packet_number_length(pn, largest_acked);
        match level.long_packet_type() {
            Some(packet_type) => PacketHeader::Long(LongHeader {
                packet_type,
                version: self.config.version,
                dcid: self.dcid,
                scid: self.scid,
                token: Vec::new(),
                length: 0,
                packet_number: pn,
                pn_len,
            }),
            None => PacketHeader::Short(ShortHeader {
                spin: false,
                key_phase: false,
                dcid: self.dcid,
                packet_number: pn,
                pn_len,
            }),
        }
    }

    /// Bytes a header for `level` occupies, assuming a two-byte length field.
    fn header_overhead(&self, level: EncryptionLevel) -> usize {
        let mut header = self.header_for(level, self.space(level.space()).next_pn);
        if let PacketHeader::Long(h) = &mut header {
            h.length = 1000;
        }
        header.serialize().map_or(64, |b| b.len())
    }

    /// Largest payload (frames) that fits one datagram at `level`.
    pub fn payload_budget(&self, level: EncryptionLevel) -> usize {
        self.config.max_datagram_size - self.header_overhead(level) - AEAD_TAG_LEN
    }

    /// Protects `frames` into one packet. Pads Initials to the minimum
    /// datagram size and short payloads to the header-protection sample.
    pub(crate) fn build_packet(
        &mut self,
        level: EncryptionLevel,
        mut frames: Vec<Frame>,
        packet_number: Option<u64>,
    ) -> Result<OutgoingPacket, ConnError> {
        let keys = self.keys(level).ok_or(ConnError::NoKeys(level))?.sealing(Role::Client).clone();
        let pn = packet_number.unwrap_or_else(|| self.next_packet_number(level.space()));
        let header = self.header_for(level, pn);
        let pn_len = usize::from(header.pn_len().unwrap_or(4));
        let mut payload = serialize_frames(&frames)?;
        let mut padding = 0usize;
        if pn_len + payload.len() < 4 {
            padding = 4 - pn_len - payload.len();
        }
        if level == EncryptionLevel::Initial {
            loop {
                let mut probe = header.clone();
                if let PacketHeader::Long(h) = &mut probe {
                    h.length = (pn_len + payload.len() + padding + AEAD_TAG_LEN) as u64;
                }
                let total = probe.serialize()?.len() + payload.len() + padding + AEAD_TAG_LEN;
                if total >= MIN_INITIAL_DATAGRAM {
                    break;
                }
                padding += MIN_INITIAL_DATAGRAM - total;
            }
        }
        if padding > 0 {
            payload.resize(payload.len() + padding, 0);
            frames.push(Frame::Padding(padding));
        }
        let protected = protect(&header, &payload, &keys)?;
        let mut cleartext = protected.header.serialize()?;
        cleartext.extend_from_slice(&payload);
        Ok(OutgoingPacket {
            level,
            header: protected.header,
            frames,
            cleartext,
            datagram: protected.bytes,
        })
    }

    /// Drains a level's queue into as many packets as needed, preserving
    /// frame order and splitting STREAM and CRYPTO frames at packet
    /// boundaries.
    pub(crate) fn bundle(&mut self, level: EncryptionLevel) -> Result<Vec<OutgoingPacket>, ConnError> {
        let mut queue: std::collections::VecDeque<Frame> =
            std::mem::take(&mut self.queues[level.index()]).into();
        let mut packets = Vec::new();
        while !queue.is_empty() {
            let budget = self.payload_budget(level);
            let mut used = 0usize;
            let mut frames = Vec::new();
            while let Some(frame) = queue.pop_front() {
                let len = frame.encoded_len();
                if used + len <= budget {
                    used += len;
                    frames.push(frame);
                    continue;
                }
                match split_frame(frame, budget - used) {
                    (Some(head), Some(tail)) => {
                        frames.push(head);
                        queue.push_front(tail);
                    }
                    (_, Some(whole)) | (Some(whole), None) => {
                        if frames.is_empty() {
                            return Err(ConnError::FrameTooLarge(whole.encoded_len()));
                        }
                        queue.push_front(whole);
                    }
                    (None, None) => unreachable!("split_frame returns the frame"),
                }
                break;
            }
            packets.push(self.build_packet(level, frames, None)?);
        }
        Ok(packets)
    }

    /// Queues stream data, refusing to exceed the peer's credit.
    pub(crate) fn write_stream(
        &mut self,
        level: EncryptionLevel,
        stream_id: u64,
        data: &[u8],
        fin: bool,
    ) -> Result<(), ConnError> {
        let stream_limit = self.flow.peer_stream_limit(stream_id);
        let stream = self.streams.entry(stream_id).or_default();
        let end = stream.send_offset + data.len() as u64;
        let data_end = self.flow.data_sent + data.len() as u64;
        if end > stream_limit || data_end > self.flow.peer_max_data {
            return Err(ConnError::FlowControl {
                stream_id,
                requested: end,
                limit: stream_limit.min(self.flow.peer_max_data),
            });
        }
        let frame =
            Frame::Stream { stream_id, offset: stream.send_offset, data: data.to_vec(), fin };
        stream.send_offset = end;
        stream.fin_sent |= fin;
        self.flow.data_sent = data_end;
        self.queue_frame(level, frame);
        Ok(())
    }

    /// Core bookkeeping for a received datagram, before any agent runs.
    pub(crate) fn absorb_datagram(&mut self, size: usize, timestamp_ms: u64) {
        self.stats.datagrams_received += 1;
        self.stats.bytes_received += size as u64;
        self.last_activity_ms = timestamp_ms;
        self.datagrams.push(DatagramRecord {
            direction: PacketDirection::Rx,
            size,
            timestamp_ms,
            level: None,
        });
    }

    /// Core bookkeeping for a received packet: packet log, acknowledgement
    /// state, stream reassembly, peer credit and close detection.
    pub(crate) fn absorb_received(
        &mut self,
        header: &PacketHeader,
        frames: &[Frame],
        level: EncryptionLevel,
        timestamp_ms: u64,
        cleartext: &[u8],
    ) -> Vec<Event> {
        self.log.record(PacketDirection::Rx, level, cleartext, header.dcid().len() as u8);
        self.received.push(ReceivedPacket {
            level,
            header: header.clone(),
            frames: frames.to_vec(),
            timestamp_ms,
        });
        if let PacketHeader::VersionNegotiation(vn) = header {
            self.version_negotiation = Some(vn.clone());
            return Vec::new();
        }
        let space = level.space();
        if let Some(pn) = header.packet_number() {
            let s = self.space_mut(space);
            s.received.insert(pn);
            s.largest_received = Some(s.largest_received.map_or(pn, |l| l.max(pn)));
        }

        let mut events = Vec::new();
        for frame in frames {
            match frame {
                Frame::Ack { largest_acked, .. } => match frame.ack_packet_ranges() {
                    Ok(ranges) => {
                        let s = self.space_mut(space);
                        for (low, high) in ranges {
                            let acked: Vec<u64> = s.sent.range(low..=high).map(|(&pn, _)| pn).collect();
                            for pn in acked {
                                s.sent.remove(&pn);
                            }
                        }
                        s.largest_acked = Some(s.largest_acked.map_or(*largest_acked, |l| l.max(*largest_acked)));
                    }
                    Err(_) => self.stats.ack_anomalies += 1,
                },
                Frame::Stream { stream_id, offset, data, fin } => {
                    let stream = self.streams.entry(*stream_id).or_default();
                    if *fin {
                        stream.fin_offset = Some(offset + data.len() as u64);
                    }
                    let grew = stream.recv.insert(*offset, data);
                    if grew || (*fin && stream.is_recv_complete()) {
                        events.push(Event::StreamDataReadable { stream_id: *stream_id });
                    }
                }
                Frame::ResetStream { stream_id, final_size, .. } => {
                    self.streams.entry(*stream_id).or_default().reset = Some(*final_size);
                }
                Frame::MaxData { max } => {
                    self.flow.peer_max_data = self.flow.peer_max_data.max(*max);
                }
                Frame::MaxStreamData { stream_id, max } => {
                    let current = self.flow.peer_stream_limit(*stream_id);
                    self.flow.peer_stream_max.insert(*stream_id, current.max(*max));
                }
                Frame::ConnectionClose { error_code, reason, .. }
                | Frame::ApplicationClose { error_code, reason } => {
                    self.peer_close = Some(CloseInfo {
                        error_code: *error_code,
                        reason: String::from_utf8_lossy(reason).into_owned(),
                        by_peer: true,
                    });
                }
                Frame::HandshakeDone => self.handshake_confirmed = true,
                _ => {}
            }
        }
        events
    }

    /// Core bookkeeping for a sent packet.
    pub(crate) fn absorb_sent(
        &mut self,
        header: &PacketHeader,
        frames: &[Frame],
        level: EncryptionLevel,
        timestamp_ms: u64,
        cleartext: &[u8],
        size: usize,
    ) {
        self.log.record(PacketDirection::Tx, level, cleartext, header.dcid().len() as u8);
        self.stats.datagrams_sent += 1;
        self.stats.bytes_sent += size as u64;
        self.datagrams.push(DatagramRecord {
            direction: PacketDirection::Tx,
            size,
            timestamp_ms,
            level: Some(level),
        });
        for frame in frames {
            if let Frame::Stream { stream_id, offset, data, .. } = frame {
                let end = offset + data.len() as u64;
                let limit = self.flow.peer_stream_limit(*stream_id);
                assert!(
                    end <= limit,
                    "stream {stream_id}: sent up to {end} beyond peer limit {limit}"
                );
            }
        }
        assert!(self.flow.data_sent <= self.flow.peer_max_data, "connection credit exceeded");
        if let Some(pn) = header.packet_number() {
            let ack_eliciting = frames.iter().any(Frame::is_ack_eliciting);
            let s = self.space_mut(level.space());
            s.last_sent = Some(s.last_sent.map_or(pn, |l| l.max(pn)));
            if ack_eliciting {
                s.sent.insert(
                    pn,
                    SentRecord { level, frames: frames.to_vec(), sent_ms: timestamp_ms, ack_eliciting },
                );
            }
        }
    }
}

/// Splits a STREAM or CRYPTO frame so the head fits `room` bytes. Returns
/// `(Some(head), Some(tail))` on a split and `(None, Some(frame))` when the
/// frame cannot be split into that room.
fn split_frame(frame: Frame, room: usize) -> (Option<Frame>, Option<Frame>) {
    match frame {
        Frame::Stream { stream_id, offset, data, fin } => {
            let overhead =
                Frame::Stream { stream_id, offset, data: Vec::new(), fin }.encoded_len() + 1;
            if room <= overhead || data.is_empty() {
                return (None, Some(Frame::Stream { stream_id, offset, data, fin }));
            }
            let n = (room - overhead).min(data.len());
            let head = Frame::Stream { stream_id, offset, data: data[..n].to_vec(), fin: false };
            let tail = Frame::Stream {
                stream_id,
                offset: offset + n as u64,
                data: data[n..].to_vec(),
                fin,
            };
            (Some(head), Some(tail))
        }
        Frame::Crypto { offset, data } => {
            let overhead = Frame::Crypto { offset, data: Vec::new() }.encoded_len() + 1;
            if room <= overhead || data.is_empty() {
                return (None, Some(Frame::Crypto { offset, data }));
            }
            let n = (room - overhead).min(data.len());
            let head = Frame::Crypto { offset, data: data[..n].to_vec() };
            let tail = Frame::Crypto { offset: offset + n as u64, data: data[n..].to_vec() };
            (Some(head), Some(tail))
        }
        other => (None, Some(other)),
    }
}
