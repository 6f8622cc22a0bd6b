//! Inputs shared by the benchmarks.

use quicprobe::wire::{serialize_frames, AckRange, ConnectionId, Frame, PacketHeader, ShortHeader};

/// A typical 1-RTT payload: an ACK, flow-control updates and a STREAM frame.
pub fn sample_frames() -> Vec<Frame> {
    vec![
        Frame::Ack {
            largest_acked: 1_000,
            ack_delay: 25,
            first_range: 10,
            ranges: vec![AckRange { gap: 2, length: 5 }, AckRange { gap: 0, length: 3 }],
            ecn: None,
        },
        Frame::MaxStreamData { stream_id: 0, max: 1 << 20 },
        Frame::MaxData { max: 1 << 24 },
        Frame::Stream { stream_id: 4, offset: 4_096, data: vec![0x61; 1_000], fin: false },
    ]
}

pub fn sample_header(pn: u64) -> PacketHeader {
    PacketHeader::Short(ShortHeader {
        spin: false,
        key_phase: false,
        dcid: ConnectionId::new(&[0x5a; 8]).expect("8 bytes"),
        packet_number: pn,
        pn_len: 2,
    })
}

/// Cleartext packet as stored in traces.
pub fn sample_packet() -> Vec<u8> {
    let mut bytes = sample_header(77).serialize().expect("valid header");
    bytes.extend(serialize_frames(&sample_frames()).expect("valid frames"));
    bytes
}
