use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::{close, Scenario, ScenarioContext, NO_RESPONSE, SUCCESS, VN_NO_RESPONSE};
use crate::conn::{AgentKind, Command, Connection, ConnectionConfig, HandshakeOutcome, HandshakeStage, Roster};
use crate::protection::{EncryptionLevel, PacketNumberSpace};
use crate::traces::PacketDirection;
use crate::wire::{Frame, FrameAnomaly, TransportParameterId, TransportParameters};

/// The request every data-carrying scenario sends.
pub const REQUEST: &[u8] = b"GET /index.html\r\n";
const REQUEST_STREAM: u64 = 0;

fn hex_version(v: u32) -> String {
    crate::traces::metrics::format_version(v)
}

/// Runs until the condition holds or `wait` (bounded by the deadline) passes.
fn wait_for(
    ctx: &ScenarioContext,
    conn: &mut Connection,
    wait: Duration,
    done: impl FnMut(&crate::conn::ConnectionState) -> bool,
) -> bool {
    conn.run_until(ctx.within(wait), done)
}

/// Runs for `grace`, bounded by the deadline.
fn linger(ctx: &ScenarioContext, conn: &mut Connection, grace: Duration) {
    conn.run_until(ctx.within(grace), |_| false);
}

fn response_complete(s: &crate::conn::ConnectionState) -> bool {
    s.stream(REQUEST_STREAM).is_some_and(|st| st.is_recv_complete())
}

/// STREAM frames received on the request stream, with their arrival time.
fn stream_frames(conn: &Connection) -> Vec<(u64, u64, usize, bool)> {
    conn.state()
        .received()
        .iter()
        .flat_map(|p| {
            p.frames.iter().filter_map(move |f| match f {
                Frame::Stream { stream_id: REQUEST_STREAM, offset, data, fin } => {
                    Some((p.timestamp_ms, *offset, data.len(), *fin))
                }
                _ => None,
            })
        })
        .collect()
}

fn received_frames(conn: &Connection) -> impl Iterator<Item = &Frame> {
    conn.state().received().iter().flat_map(|p| p.frames.iter())
}

#[derive(Debug, Clone, Copy)]
pub struct VersionNegotiationCheck;

impl Scenario for VersionNegotiationCheck {
    fn name(&self) -> &'static str {
        "version_negotiation"
    }

    fn version(&self) -> u32 {
        1
    }

    fn requires_handshake(&self) -> bool {
        false
    }

    fn codes(&self) -> &'static [(u16, &'static str)] {
        &[
            (1, "malformed Version Negotiation: empty list, offered version listed or CIDs not echoed"),
            (VN_NO_RESPONSE, "no Version Negotiation packet in response to a reserved version"),
        ]
    }

    fn run(&self, ctx: &mut ScenarioContext) -> u16 {
        // Reserved versions follow the 0x?a?a?a?a pattern.
        let mut rng = ChaCha8Rng::from_seed(ctx.seed_base);
        let offered = (rng.gen::<u32>() & 0xf0f0_f0f0) | 0x0a0a_0a0a;
        ctx.set("offered_version", hex_version(offered));
        let config = ConnectionConfig { version: offered, ..ConnectionConfig::default() };
        let null = ctx.null_config();
        let mut conn = match ctx.connect(config, null) {
            Ok(conn) => conn,
            Err(code) => return code,
        };
        let got = conn.run_until(ctx.deadline(), |s| s.version_negotiation().is_some());
        let state = conn.state();
        let Some(vn) = state.version_negotiation().cloned().filter(|_| got) else {
            // Something arrived, but nothing that parses as Version Negotiation.
            return if state.stats().datagrams_received > 0 { 1 } else { VN_NO_RESPONSE };
        };
        ctx.set("versions", vn.versions.iter().map(|&v| json!(v)).collect::<Vec<_>>());
        ctx.set("versions_hex", vn.versions.iter().map(|&v| json!(hex_version(v))).collect::<Vec<_>>());
        let echoed = vn.dcid == *state.scid() && vn.scid == *state.original_dcid();
        ctx.set("cids_echoed", echoed);
        if vn.versions.is_empty() || vn.versions.contains(&offered) || !echoed {
            return 1;
        }
        SUCCESS
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Handshake;

impl Scenario for Handshake {
    fn name(&self) -> &'static str {
        "handshake"
    }

    fn version(&self) -> u32 {
        1
    }

    fn requires_handshake(&self) -> bool {
        false
    }

    fn codes(&self) -> &'static [(u16, &'static str)] {
        &[
            (2, "the server answered with Version Negotiation for version 1"),
            (3, "the handshake started but did not complete"),
            (4, "a 1-RTT packet from the server failed to decrypt after the handshake"),
        ]
    }

    fn run(&self, ctx: &mut ScenarioContext) -> u16 {
        let null = ctx.null_config();
        let mut conn = match ctx.connect(ConnectionConfig::default(), null) {
            Ok(conn) => conn,
            Err(code) => return code,
        };
        let outcome = conn.perform_handshake(ctx.remaining());
        ctx.set("outcome", format!("{outcome:?}"));
        let code = match outcome {
            HandshakeOutcome::Failed(HandshakeStage::NoResponse) => NO_RESPONSE,
            HandshakeOutcome::Failed(HandshakeStage::VersionMismatch) => 2,
            HandshakeOutcome::Failed(_) => 3,
            HandshakeOutcome::Succeeded => {
                let one_rtt = EncryptionLevel::OneRtt.index();
                wait_for(ctx, &mut conn, Duration::from_secs(1), |s| {
                    s.handshake_confirmed() || s.stats().decrypt_failures[one_rtt] > 0
                });
                let failures = conn.state().stats().decrypt_failures[one_rtt];
                ctx.set("handshake_confirmed", conn.state().handshake_confirmed());
                ctx.set("one_rtt_decrypt_failures", failures);
                if failures > 0 {
                    4
                } else {
                    SUCCESS
                }
            }
        };
        close(&mut conn);
        code
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TransportParametersCheck;

fn parameter_json(id: u64, value: &[u8]) -> Value {
    let known = TransportParameterId::from_code(id);
    let mut entry = json!({
        "id": id,
        "name": known.map_or("unknown", |k| k.name()),
        "value_hex": hex::encode(value),
    });
    if known.is_some_and(|k| k.is_integer()) {
        if let Ok(d) = crate::wire::decode_varint(value) {
            if d.len == value.len() {
                entry["value"] = json!(d.value);
            }
        }
    }
    entry
}

impl Scenario for TransportParametersCheck {
    fn name(&self) -> &'static str {
        "transport_parameters"
    }

    fn version(&self) -> u32 {
        1
    }

    fn requires_handshake(&self) -> bool {
        true
    }

    fn codes(&self) -> &'static [(u16, &'static str)] {
        &[(5, "the server's transport parameters repeat an id or are malformed")]
    }

    fn run(&self, ctx: &mut ScenarioContext) -> u16 {
        let null = ctx.null_config();
        let mut conn = match ctx.handshaken(ConnectionConfig::default(), null) {
            Ok(conn) => conn,
            Err(code) => return code,
        };
        let raw = conn.state().provider().peer_transport_parameters_raw().map(<[u8]>::to_vec);
        close(&mut conn);
        let Some(raw) = raw else {
            return 5;
        };
        ctx.set("raw_hex", hex::encode(&raw));
        if let Ok((lenient, _)) = TransportParameters::decode_lenient(&raw) {
            let list: Vec<Value> = lenient.entries().iter().map(|e| parameter_json(e.id, &e.value)).collect();
            ctx.set("parameters", list);
        }
        match TransportParameters::decode(&raw) {
            Ok(_) => SUCCESS,
            Err(e) => {
                ctx.set("decode_error", e.to_string());
                5
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AddressValidation;

/// Anti-amplification factor a server may not exceed before validation.
pub const AMPLIFICATION_LIMIT: u64 = 3;

impl Scenario for AddressValidation {
    fn name(&self) -> &'static str {
        "address_validation"
    }

    fn version(&self) -> u32 {
        1
    }

    fn requires_handshake(&self) -> bool {
        false
    }

    fn codes(&self) -> &'static [(u16, &'static str)] {
        &[(6, "the server sent more than three times the bytes it received before validating the client")]
    }

    fn run(&self, ctx: &mut ScenarioContext) -> u16 {
        // Without acknowledgements, only retransmitted Initials can extend
        // the server's budget.
        let roster = Roster::of(&[
            AgentKind::Socket,
            AgentKind::Parser,
            AgentKind::Tls,
            AgentKind::Retransmission,
            AgentKind::Bundler,
            AgentKind::Handshake,
        ]);
        let config = ConnectionConfig { roster, ..ConnectionConfig::default() };
        let null = ctx.null_config();
        let mut conn = match ctx.connect(config, null) {
            Ok(conn) => conn,
            Err(code) => return code,
        };
        // A Handshake packet from the client validates its address. A
        // server holding to its limit goes quiet until then, and so does a
        // client without acknowledgements once nothing is left to resend.
        let settled = |s: &crate::conn::ConnectionState| {
            let log = s.datagrams();
            let validated =
                log.iter().any(|d| d.direction == PacketDirection::Tx && d.level == Some(EncryptionLevel::Handshake));
            let heard = log.iter().any(|d| d.direction == PacketDirection::Rx);
            let last = log.last().map_or(0, |d| d.timestamp_ms);
            validated || (heard && s.now_ms().saturating_sub(last) >= QUIET_MS)
        };
        conn.run_until(ctx.deadline(), settled);
        let mut sent = 0u64;
        let mut received = 0u64;
        let mut worst = 0.0f64;
        let mut exceeded = false;
        for d in conn.state().datagrams() {
            match d.direction {
                PacketDirection::Tx if d.level == Some(EncryptionLevel::Handshake) => break,
                PacketDirection::Tx => sent += d.size as u64,
                PacketDirection::Rx => {
                    received += d.size as u64;
                    exceeded |= received > AMPLIFICATION_LIMIT * sent;
                    worst = worst.max(received as f64 / sent.max(1) as f64);
                }
            }
        }
        close(&mut conn);
        ctx.set("bytes_sent_before_validation", sent);
        ctx.set("bytes_received_before_validation", received);
        ctx.set("max_ratio", (worst * 1000.0).round() / 1000.0);
        if received == 0 {
            NO_RESPONSE
        } else if exceeded {
            6
        } else {
            SUCCESS
        }
    }
}

/// Silence in both directions after which the address validation exchange
/// is considered over; twice the client's retransmission timeout.
pub const QUIET_MS: u64 = 2 * crate::conn::RETRANSMISSION_TIMEOUT_MS;

#[derive(Debug, Clone, Copy)]
pub struct FlowControl;

pub const FLOW_INITIAL_LIMIT: u64 = 80;
pub const FLOW_RAISED_LIMIT: u64 = 160;
/// More STREAM_DATA_BLOCKED frames than this count as a loop.
pub const BLOCKED_LOOP_THRESHOLD: usize = 20;

impl Scenario for FlowControl {
    fn name(&self) -> &'static str {
        "flow_control"
    }

    fn version(&self) -> u32 {
        1
    }

    fn requires_handshake(&self) -> bool {
        true
    }

    fn codes(&self) -> &'static [(u16, &'static str)] {
        &[
            (7, "the server sent stream data beyond the advertised limit"),
            (8, "the server sent an empty STREAM frame without FIN"),
            (9, "the server did not resume sending after the limit was raised"),
            (10, "the server looped on STREAM_DATA_BLOCKED frames or retransmissions"),
        ]
    }

    fn run(&self, ctx: &mut ScenarioContext) -> u16 {
        let mut config = ConnectionConfig::default();
        config.transport_parameters.set_initial_max_stream_data_bidi_local(FLOW_INITIAL_LIMIT);
        let null = ctx.null_config();
        let mut conn = match ctx.handshaken(config, null) {
            Ok(conn) => conn,
            Err(code) => return code,
        };
        if conn.write_stream(EncryptionLevel::OneRtt, REQUEST_STREAM, REQUEST, true).is_err() {
            close(&mut conn);
            return super::FEATURE_UNAVAILABLE;
        }
        // First burst: until the limit is reached, the server reports being
        // blocked, or the response ends.
        wait_for(ctx, &mut conn, Duration::from_secs(2), |s| {
            s.stream(REQUEST_STREAM).is_some_and(|st| st.recv.max_end() >= FLOW_INITIAL_LIMIT || st.is_recv_complete())
                || s.received().iter().flat_map(|p| &p.frames).any(|f| matches!(f, Frame::StreamDataBlocked { .. }))
        });
        linger(ctx, &mut conn, Duration::from_millis(200));
        let raised_at = conn.state().now_ms();
        conn.command(Command::RaiseStreamLimit { stream_id: REQUEST_STREAM, max: FLOW_RAISED_LIMIT });
        wait_for(ctx, &mut conn, Duration::from_secs(2), response_complete);
        linger(ctx, &mut conn, Duration::from_millis(100));
        let complete = response_complete(conn.state());

        let frames = stream_frames(&conn);
        let end = |(_, offset, len, _): &(u64, u64, usize, bool)| offset + *len as u64;
        let first_burst = frames.iter().filter(|f| f.0 < raised_at).map(end).max().unwrap_or(0);
        let total = frames.iter().map(end).max().unwrap_or(0);
        let after_raise = frames.iter().filter(|f| f.0 >= raised_at && f.2 > 0).count();
        let empty = received_frames(&conn)
            .filter(|f| f.anomaly() == Some(FrameAnomaly::EmptyStreamFrame))
            .count();
        let blocked = received_frames(&conn)
            .filter(|f| matches!(f, Frame::StreamDataBlocked { .. }))
            .count();
        close(&mut conn);

        ctx.set("first_burst_bytes", first_burst);
        ctx.set("total_bytes", total);
        ctx.set("raised_at_ms", raised_at);
        ctx.set("empty_stream_frames", empty);
        ctx.set("stream_data_blocked_frames", blocked);
        ctx.set("response_complete", complete);
        ctx.set(
            "stream_frames",
            frames
                .iter()
                .map(|(t, o, l, fin)| json!({"timestamp_ms": t, "offset": o, "length": l, "fin": fin}))
                .collect::<Vec<_>>(),
        );
        if empty > 0 {
            8
        } else if blocked > BLOCKED_LOOP_THRESHOLD {
            10
        } else if first_burst > FLOW_INITIAL_LIMIT || total > FLOW_RAISED_LIMIT {
            7
        } else if after_raise == 0 && !complete {
            9
        } else {
            SUCCESS
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StreamOpeningReordering;

impl Scenario for StreamOpeningReordering {
    fn name(&self) -> &'static str {
        "stream_opening_reordering"
    }

    fn version(&self) -> u32 {
        1
    }

    fn requires_handshake(&self) -> bool {
        true
    }

    fn codes(&self) -> &'static [(u16, &'static str)] {
        &[
            (11, "no response when the FIN arrived before the request"),
            (12, "the server closed the connection"),
            (13, "the server sent an ACK whose ranges run below packet number zero"),
        ]
    }

    fn run(&self, ctx: &mut ScenarioContext) -> u16 {
        let null = ctx.null_config();
        let mut conn = match ctx.handshaken(ConnectionConfig::default(), null) {
            Ok(conn) => conn,
            Err(code) => return code,
        };
        let first = conn.reserve_packet_numbers(PacketNumberSpace::Application, 2);
        let closing = Frame::Stream { stream_id: REQUEST_STREAM, offset: REQUEST.len() as u64, data: Vec::new(), fin: true };
        let request = Frame::Stream { stream_id: REQUEST_STREAM, offset: 0, data: REQUEST.to_vec(), fin: false };
        let sent = conn
            .send_packet(EncryptionLevel::OneRtt, vec![closing], Some(first + 1))
            .and_then(|_| conn.send_packet(EncryptionLevel::OneRtt, vec![request], Some(first)));
        if sent.is_err() {
            close(&mut conn);
            return super::FEATURE_UNAVAILABLE;
        }
        ctx.set("packet_numbers", json!([first + 1, first]));
        wait_for(ctx, &mut conn, ctx.remaining(), |s| response_complete(s) || s.peer_close().is_some());
        linger(ctx, &mut conn, Duration::from_millis(100));
        let state = conn.state();
        let bad_acks = received_frames(&conn)
            .filter(|f| f.anomaly() == Some(FrameAnomaly::AckRangeUnderflow))
            .count();
        let answered = response_complete(state);
        let peer_close = state.peer_close().cloned();
        close(&mut conn);
        ctx.set("malformed_acks", bad_acks);
        ctx.set("response_received", answered);
        if let Some(c) = &peer_close {
            ctx.set("peer_close", json!({"error_code": c.error_code, "reason": c.reason}));
        }
        if bad_acks > 0 {
            13
        } else if peer_close.is_some() {
            12
        } else if !answered {
            11
        } else {
            SUCCESS
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroRtt;

impl Scenario for ZeroRtt {
    fn name(&self) -> &'static str {
        "zero_rtt"
    }

    fn version(&self) -> u32 {
        1
    }

    fn requires_handshake(&self) -> bool {
        true
    }

    fn codes(&self) -> &'static [(u16, &'static str)] {
        &[
            (14, "the server issued no session ticket"),
            (15, "the server rejected early data"),
            (16, "early data was accepted but the request sent in it was not answered"),
        ]
    }

    fn run(&self, ctx: &mut ScenarioContext) -> u16 {
        let null = ctx.null_config();
        let mut first = match ctx.handshaken(ConnectionConfig::default(), null) {
            Ok(conn) => conn,
            Err(code) => return code,
        };
        wait_for(ctx, &mut first, Duration::from_secs(2), |s| s.provider().resumption_ticket().is_some());
        let ticket = first.state().provider().resumption_ticket();
        let remembered = first
            .state()
            .provider()
            .peer_transport_parameters_raw()
            .and_then(|raw| TransportParameters::decode_lenient(raw).ok())
            .map(|(tp, _)| tp);
        close(&mut first);
        drop(first);
        ctx.set("ticket_received", ticket.is_some());
        let Some(ticket) = ticket else {
            return 14;
        };

        let config = ConnectionConfig { remembered_peer_parameters: remembered, ..ConnectionConfig::default() };
        let mut null = ctx.null_config();
        null.ticket = Some(ticket);
        null.attempt_early_data = true;
        let mut second = match ctx.connect(config, null) {
            Ok(conn) => conn,
            Err(code) => return code,
        };
        second.start();
        let early = second.write_stream(EncryptionLevel::ZeroRtt, REQUEST_STREAM, REQUEST, true);
        ctx.set("early_request_sent", early.is_ok());
        if second.perform_handshake(ctx.remaining()) != HandshakeOutcome::Succeeded {
            close(&mut second);
            return super::HANDSHAKE_FAILED;
        }
        let accepted = second.state().provider().early_data_accepted() == Some(true);
        ctx.set("zero_rtt_accepted", accepted);
        if !accepted || early.is_err() {
            close(&mut second);
            ctx.set("request_answered", false);
            return 15;
        }
        let started = Instant::now();
        let answered = wait_for(ctx, &mut second, ctx.remaining(), response_complete);
        ctx.set("request_answered", answered);
        ctx.set("answer_wait_ms", started.elapsed().as_millis() as u64);
        close(&mut second);
        if answered {
            SUCCESS
        } else {
            16
        }
    }
}
