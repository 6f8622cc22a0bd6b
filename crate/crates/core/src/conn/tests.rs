use super::*;
use crate::protection::{derive_initial_keys, unprotect, KeyMaterial, LevelKeys, NullConfig, NullHandshakeProvider, Direction};
use crate::wire::{parse_frames, ConnectionId, LongHeader, LongPacketType, PacketHeader, ParseContext};

fn connection(roster: Roster) -> Connection {
    let config = ConnectionConfig { roster, cid_seed: 3, ..ConnectionConfig::default() };
    let provider = NullHandshakeProvider::client(NullConfig::default());
    Connection::new(config, Box::new(provider), Box::<MemoryIo>::default(), PacketLog::new()).unwrap()
}

fn sent(conn: &Connection) -> Vec<ReceivedPacket> {
    // Decode what the connection logged as sent, through the wire codec.
    conn.state()
        .log
        .snapshot()
        .into_iter()
        .filter(|r| r.direction == crate::traces::PacketDirection::Tx)
        .map(|r| {
            let bytes = r.cleartext().unwrap();
            let (header, at) =
                crate::wire::parse_header(&bytes, ParseContext::new(usize::from(r.dcid_len))).unwrap();
            ReceivedPacket { level: r.level, header, frames: parse_frames(&bytes[at..]).unwrap(), timestamp_ms: 0 }
        })
        .collect()
}

fn test_keys(level: EncryptionLevel) -> LevelKeys {
    LevelKeys {
        level,
        client: KeyMaterial::from_secret(level, Direction::Client, &[1; 32]),
        server: KeyMaterial::from_secret(level, Direction::Server, &[2; 32]),
    }
}

fn received(level: EncryptionLevel, pn: u64, frames: Vec<Frame>) -> Event {
    let header = PacketHeader::Long(LongHeader {
        packet_type: level.long_packet_type().unwrap_or(LongPacketType::Handshake),
        version: QUIC_V1,
        dcid: ConnectionId::new(&[1; 8]).unwrap(),
        scid: ConnectionId::new(&[2; 8]).unwrap(),
        token: Vec::new(),
        length: 0,
        packet_number: pn,
        pn_len: 1,
    });
    Event::PacketReceived { header, frames, level, timestamp_ms: 0, cleartext: Vec::new() }
}

#[test]
fn start_sends_padded_initial_with_client_hello() {
    let mut conn = connection(Roster::full());
    conn.start();
    let packets = sent(&conn);
    assert_eq!(packets.len(), 1);
    assert_eq!(packets[0].level, EncryptionLevel::Initial);
    assert!(matches!(packets[0].frames[0], Frame::Crypto { offset: 0, ref data } if data[0] == 1));
    assert_eq!(conn.state().datagrams()[0].size, MIN_INITIAL_DATAGRAM);
}

#[test]
fn server_can_open_the_client_initial() {
    let config = ConnectionConfig { cid_seed: 11, ..ConnectionConfig::default() };
    let provider = NullHandshakeProvider::client(NullConfig::default());
    let (client_io, server_io) = ChannelIo::pair();
    let mut conn = Connection::new(config, Box::new(provider), Box::new(client_io), PacketLog::new()).unwrap();
    conn.start();
    let mut server_io = server_io;
    let datagram = server_io.recv(std::time::Duration::from_millis(100)).unwrap().unwrap();
    assert_eq!(datagram.len(), MIN_INITIAL_DATAGRAM);
    let (client_keys, _) = derive_initial_keys(conn.state().original_dcid(), QUIC_V1).unwrap();
    let opened = unprotect(&datagram, ParseContext::new(8), &client_keys, None).unwrap();
    let frames = parse_frames(&opened.payload).unwrap();
    assert!(matches!(frames[0], Frame::Crypto { .. }));
    assert!(matches!(frames.last(), Some(Frame::Padding(_))));
}

#[test]
fn nothing_is_sent_without_the_socket_agent() {
    let mut conn = connection(Roster::full().without(AgentKind::Socket));
    conn.start();
    assert!(sent(&conn).is_empty());
    assert_eq!(conn.state().stats().datagrams_sent, 0);
}

#[test]
fn received_packet_is_acknowledged_only_with_ack_agent() {
    let mut conn = connection(Roster::of(&[AgentKind::Ack]));
    let effects = conn.dispatch(received(EncryptionLevel::Initial, 0, vec![Frame::Ping]));
    assert_eq!(
        effects,
        [Effect::QueueFrame {
            level: EncryptionLevel::Initial,
            frame: Frame::ack_from_ranges(&[(0, 0)], 0).unwrap(),
        }]
    );

    let mut silent = connection(Roster::full().without(AgentKind::Ack));
    let effects = silent.dispatch(received(EncryptionLevel::Initial, 0, vec![Frame::Ping]));
    assert!(effects.iter().all(|e| !matches!(e, Effect::QueueFrame { frame: Frame::Ack { .. }, .. })));
}

#[test]
fn ack_only_packets_are_not_acknowledged() {
    let mut conn = connection(Roster::of(&[AgentKind::Ack]));
    let ack = Frame::ack_from_ranges(&[(0, 0)], 0).unwrap();
    assert!(conn.dispatch(received(EncryptionLevel::Initial, 0, vec![ack])).is_empty());
}

#[test]
fn queued_ack_replaces_earlier_ack() {
    let mut conn = connection(Roster::of(&[AgentKind::Ack]));
    conn.dispatch(received(EncryptionLevel::Initial, 0, vec![Frame::Ping]));
    conn.dispatch(received(EncryptionLevel::Initial, 1, vec![Frame::Ping]));
    let queue = conn.state().queue(EncryptionLevel::Initial);
    assert_eq!(queue, [Frame::ack_from_ranges(&[(0, 1)], 0).unwrap()]);
}

#[test]
fn loss_requeues_frames_at_the_same_level() {
    let mut conn = connection(Roster::of(&[AgentKind::Retransmission, AgentKind::Bundler, AgentKind::Socket]));
    conn.state.keys[EncryptionLevel::Handshake.index()] = Some(test_keys(EncryptionLevel::Handshake));
    for data in [b"zero".to_vec(), b"one".to_vec(), b"two".to_vec()] {
        conn.queue_frames(EncryptionLevel::Handshake, vec![Frame::Crypto { offset: 0, data }]);
    }
    let space = conn.state().space(PacketNumberSpace::Handshake);
    assert_eq!(space.sent.keys().copied().collect::<Vec<_>>(), [0, 1, 2]);

    let effects = conn.dispatch(Event::LossDetected {
        level: EncryptionLevel::Handshake,
        packet_numbers: vec![2],
    });
    assert_eq!(
        effects,
        [Effect::QueueFrame {
            level: EncryptionLevel::Handshake,
            frame: Frame::Crypto { offset: 0, data: b"two".to_vec() },
        }]
    );
    conn.drain();
    let packets = sent(&conn);
    assert_eq!(packets.len(), 4);
    assert_eq!(packets[3].header.packet_number(), Some(3));
}

#[test]
fn retransmission_timer_declares_loss() {
    let mut conn = connection(Roster::full());
    conn.start();
    // No peer: the Initial is resent once the timer fires.
    conn.run_for(std::time::Duration::from_millis(RETRANSMISSION_TIMEOUT_MS + 150));
    let packets = sent(&conn);
    assert_eq!(packets.len(), 2);
    assert_eq!(packets[0].frames[0], packets[1].frames[0]);
    assert_eq!(packets[1].header.packet_number(), Some(1));
}

#[test]
fn unsubscribed_event_has_no_effect() {
    let mut conn = connection(Roster::of(&[AgentKind::Ack, AgentKind::Closing]));
    assert!(conn.dispatch(Event::NewKeysAvailable { level: EncryptionLevel::OneRtt }).is_empty());
}

#[test]
fn ack_and_crypto_share_one_packet() {
    let mut conn = connection(Roster::of(&[AgentKind::Bundler, AgentKind::Socket]));
    conn.state.keys[EncryptionLevel::Handshake.index()] = Some(test_keys(EncryptionLevel::Handshake));
    let ack = Frame::ack_from_ranges(&[(0, 0)], 0).unwrap();
    let fin = Frame::Crypto { offset: 0, data: vec![20, 0, 0, 32] };
    conn.state.queue_frame(EncryptionLevel::Handshake, fin.clone());
    conn.state.queue_frame(EncryptionLevel::Handshake, ack.clone());
    conn.process(Event::FramesQueued { level: EncryptionLevel::Handshake });
    let packets = sent(&conn);
    assert_eq!(packets.len(), 1);
    assert_eq!(packets[0].frames, [fin, ack]);
}

#[test]
fn oversized_queue_splits_in_order() {
    let mut conn = connection(Roster::of(&[AgentKind::Bundler, AgentKind::Socket]));
    conn.state.keys[EncryptionLevel::OneRtt.index()] = Some(test_keys(EncryptionLevel::OneRtt));
    conn.state.flow.peer_default_stream_max = 1 << 20;
    conn.state.flow.peer_max_data = 1 << 20;
    let payload: Vec<u8> = (0..2000u32).map(|i| i as u8).collect();
    conn.write_stream(EncryptionLevel::OneRtt, 0, &payload, true).unwrap();
    let packets = sent(&conn);
    assert_eq!(packets.len(), 2);
    let mut joined = Vec::new();
    let mut fins = Vec::new();
    for p in &packets {
        for f in &p.frames {
            if let Frame::Stream { offset, data, fin, .. } = f {
                assert_eq!(*offset, joined.len() as u64);
                joined.extend_from_slice(data);
                fins.push(*fin);
            }
        }
    }
    assert_eq!(joined, payload);
    assert_eq!(fins, [false, true]);
    for d in conn.state().datagrams() {
        assert!(d.size <= MAX_DATAGRAM_SIZE);
    }
}

#[test]
fn empty_queue_sends_nothing() {
    let mut conn = connection(Roster::full());
    conn.process(Event::FramesQueued { level: EncryptionLevel::Initial });
    assert!(sent(&conn).is_empty());
}

#[test]
fn frames_wait_for_keys() {
    let mut conn = connection(Roster::of(&[AgentKind::Bundler, AgentKind::Socket]));
    conn.queue_frames(EncryptionLevel::OneRtt, vec![Frame::Ping]);
    assert!(sent(&conn).is_empty());
    conn.state.keys[EncryptionLevel::OneRtt.index()] = Some(test_keys(EncryptionLevel::OneRtt));
    conn.process(Event::NewKeysAvailable { level: EncryptionLevel::OneRtt });
    assert_eq!(sent(&conn).len(), 1);
}

#[test]
fn failing_agent_does_not_stop_dispatch() {
    let mut conn = connection(Roster::full());
    conn.start();
    // A ServerHello with a truncated random makes the provider fail.
    let bogus = Frame::Crypto { offset: 0, data: vec![2, 0, 0, 1, 0] };
    let effects = conn.dispatch(received(EncryptionLevel::Initial, 0, vec![bogus]));
    assert_eq!(conn.state().agent_errors().len(), 1);
    assert!(conn.state().agent_errors()[0].starts_with("tls"));
    // The ack agent, later in the order, still ran.
    assert!(effects.iter().any(|e| matches!(e, Effect::QueueFrame { frame: Frame::Ack { .. }, .. })));
}

#[test]
fn stream_writes_respect_peer_credit() {
    let mut conn = connection(Roster::full());
    let err = conn.write_stream(EncryptionLevel::OneRtt, 0, b"x", false).unwrap_err();
    assert!(matches!(err, ConnError::FlowControl { limit: 0, .. }));
    conn.state.flow.peer_default_stream_max = 4;
    conn.state.flow.peer_max_data = 100;
    conn.write_stream(EncryptionLevel::OneRtt, 0, b"abcd", false).unwrap();
    assert!(conn.write_stream(EncryptionLevel::OneRtt, 0, b"e", false).is_err());
}

#[test]
#[should_panic(expected = "beyond peer limit")]
fn sending_beyond_credit_is_an_internal_error() {
    let mut conn = connection(Roster::full());
    let header = PacketHeader::Short(crate::wire::ShortHeader {
        spin: false,
        key_phase: false,
        dcid: ConnectionId::new(&[1; 8]).unwrap(),
        packet_number: 0,
        pn_len: 1,
    });
    let frames = vec![Frame::Stream { stream_id: 0, offset: 0, data: vec![0; 10], fin: false }];
    conn.dispatch(Event::PacketSent {
        header,
        frames,
        level: EncryptionLevel::OneRtt,
        timestamp_ms: 0,
        cleartext: Vec::new(),
        size: 40,
    });
}

#[test]
fn reassembly_signals_readable_data() {
    let mut conn = connection(Roster::empty());
    conn.dispatch(received(EncryptionLevel::OneRtt, 0, vec![Frame::Stream { stream_id: 0, offset: 3, data: b"def".to_vec(), fin: true }]));
    assert!(conn.bus.is_empty());
    conn.dispatch(received(EncryptionLevel::OneRtt, 1, vec![Frame::Stream { stream_id: 0, offset: 0, data: b"abc".to_vec(), fin: false }]));
    assert_eq!(conn.bus.front(), Some(&Event::StreamDataReadable { stream_id: 0 }));
    let stream = conn.state().stream(0).unwrap();
    assert_eq!(stream.recv.assembled(), b"abcdef");
    assert!(stream.is_recv_complete());
}

#[test]
fn dispatch_is_deterministic() {
    let run = || {
        let mut conn = connection(Roster::full());
        conn.start();
        conn.dispatch(received(EncryptionLevel::Initial, 0, vec![Frame::Ping]));
        conn.drain();
        conn.state().log.snapshot().into_iter().map(|r| r.cleartext_hex).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn unresolvable_target_is_an_error() {
    assert!(matches!(resolve("no-such-host.invalid:443"), Err(ConnError::Resolve(_))));
}

#[test]
fn silent_peer_fails_with_no_response() {
    let mut conn = connection(Roster::full());
    let outcome = conn.perform_handshake(std::time::Duration::from_millis(200));
    assert_eq!(outcome, HandshakeOutcome::Failed(HandshakeStage::NoResponse));
}
