use proptest::collection::vec;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::varint::put_varint_with_len;
use super::*;

const MAX_VARINT: u64 = (1 << 62) - 1;

#[test]
fn varint_round_trip_million() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7661_7269);
    for i in 0..1_000_000u32 {
        // Spread values over all four encoded lengths.
        let bits = [6, 14, 30, 62][(i % 4) as usize];
        let value = rng.gen::<u64>() & ((1u64 << bits) - 1);
        let encoded = encode_varint(value).unwrap();
        assert_eq!(encoded.len(), varint_len(value));
        let decoded = decode_varint(&encoded).unwrap();
        assert_eq!((decoded.value, decoded.len, decoded.minimal), (value, encoded.len(), true));
    }
}

fn cid() -> impl Strategy<Value = ConnectionId> {
    vec(any::<u8>(), 0..=MAX_CID_LEN).prop_map(|b| ConnectionId::new(&b).unwrap())
}

fn v() -> impl Strategy<Value = u64> {
    prop_oneof![0..64u64, 0..16_384u64, 0..MAX_VARINT]
}

fn bytes() -> impl Strategy<Value = Vec<u8>> {
    vec(any::<u8>(), 0..64)
}

pub(crate) fn frame() -> impl Strategy<Value = Frame> {
    prop_oneof![
        (1..50usize).prop_map(Frame::Padding),
        Just(Frame::Ping),
        (0..1_000_000u64, v(), vec((0..100u64, 0..100u64), 0..4), any::<bool>()).prop_map(
            |(largest, delay, gaps, ecn)| {
                // Keep the ranges inside the numbers below `largest`.
                let ranges = gaps.into_iter().map(|(gap, length)| AckRange { gap, length }).collect();
                Frame::Ack {
                    largest_acked: largest,
                    ack_delay: delay,
                    first_range: largest / 2,
                    ranges,
                    ecn: ecn.then_some(EcnCounts { ect0: 1, ect1: 2, ce: 3 }),
                }
            }
        ),
        (v(), v(), v()).prop_map(|(stream_id, error_code, final_size)| Frame::ResetStream {
            stream_id,
            error_code,
            final_size
        }),
        (v(), v()).prop_map(|(stream_id, error_code)| Frame::StopSending { stream_id, error_code }),
        (0..1u64 << 40, bytes()).prop_map(|(offset, data)| Frame::Crypto { offset, data }),
        vec(any::<u8>(), 1..64).prop_map(|token| Frame::NewToken { token }),
        (v(), 0..1u64 << 40, bytes(), any::<bool>()).prop_map(|(stream_id, offset, data, fin)| {
            Frame::Stream { stream_id, offset, data, fin }
        }),
        v().prop_map(|max| Frame::MaxData { max }),
        (v(), v()).prop_map(|(stream_id, max)| Frame::MaxStreamData { stream_id, max }),
        (any::<bool>(), 0..1u64 << 60).prop_map(|(bidi, max)| Frame::MaxStreams { bidi, max }),
        v().prop_map(|limit| Frame::DataBlocked { limit }),
        (v(), v()).prop_map(|(stream_id, limit)| Frame::StreamDataBlocked { stream_id, limit }),
        (any::<bool>(), 0..1u64 << 60).prop_map(|(bidi, limit)| Frame::StreamsBlocked { bidi, limit }),
        (v(), v(), vec(any::<u8>(), 1..=MAX_CID_LEN), any::<[u8; 16]>()).prop_map(
            |(seq, retire, cid, reset_token)| Frame::NewConnectionId {
                seq,
                retire_prior_to: retire.min(seq),
                cid: ConnectionId::new(&cid).unwrap(),
                reset_token,
            }
        ),
        v().prop_map(|seq| Frame::RetireConnectionId { seq }),
        any::<[u8; 8]>().prop_map(|data| Frame::PathChallenge { data }),
        any::<[u8; 8]>().prop_map(|data| Frame::PathResponse { data }),
        (v(), v(), bytes()).prop_map(|(error_code, frame_type, reason)| Frame::ConnectionClose {
            error_code,
            frame_type,
            reason
        }),
        (v(), bytes()).prop_map(|(error_code, reason)| Frame::ApplicationClose { error_code, reason }),
        Just(Frame::HandshakeDone),
    ]
}

/// Adjacent PADDING runs are indistinguishable on the wire.
pub(crate) fn merge_padding(frames: Vec<Frame>) -> Vec<Frame> {
    let mut out: Vec<Frame> = Vec::with_capacity(frames.len());
    for frame in frames {
        match (out.last_mut(), frame) {
            (Some(Frame::Padding(a)), Frame::Padding(b)) => *a += b,
            (_, frame) => out.push(frame),
        }
    }
    out
}

proptest! {
    #[test]
    fn non_minimal_varints_decode(value in 0..MAX_VARINT, extra in 0usize..4) {
        let lens = [1usize, 2, 4, 8];
        let min = lens.iter().position(|&l| l == varint_len(value)).unwrap();
        let len = lens[(min + extra).min(3)];
        let mut buf = Vec::new();
        put_varint_with_len(&mut buf, value, len);
        let d = decode_varint(&buf).unwrap();
        prop_assert_eq!((d.value, d.len, d.minimal), (value, len, len == varint_len(value)));
    }

    #[test]
    fn frame_lists_round_trip(frames in vec(frame(), 1..12)) {
        let encoded = serialize_frames_unchecked(&frames).unwrap();
        let total: usize = frames.iter().map(Frame::encoded_len).sum();
        prop_assert_eq!(encoded.len(), total);
        prop_assert_eq!(parse_frames(&encoded).unwrap(), merge_padding(frames));
    }

    #[test]
    fn frame_parser_is_total(payload in vec(any::<u8>(), 0..256)) {
        if let Ok(frames) = parse_frames(&payload) {
            // Whatever parses re-encodes to the same number of frames.
            let again = parse_frames(&serialize_frames_unchecked(&frames).unwrap()).unwrap();
            prop_assert_eq!(again.len(), frames.len());
        }
    }

    #[test]
    fn header_parsers_are_total(buf in vec(any::<u8>(), 0..128), dcid_len in 0usize..=20) {
        let ctx = ParseContext::new(dcid_len);
        let _ = parse_header(&buf, ctx);
        if let Ok(p) = parse_protected_header(&buf, ctx) {
            prop_assert!(p.packet_len() <= buf.len());
        }
    }

    #[test]
    fn transport_parameter_decoding_is_total(buf in vec(any::<u8>(), 0..128)) {
        let _ = TransportParameters::decode(&buf);
        let _ = TransportParameters::decode_lenient(&buf);
    }

    #[test]
    fn long_headers_round_trip(
        dcid in cid(),
        scid in cid(),
        token in bytes(),
        ty in 0u8..3,
        pn_len in 1u8..=4,
        pn in any::<u32>(),
        length in 20u64..1200,
    ) {
        let packet_type = [LongPacketType::Initial, LongPacketType::ZeroRtt, LongPacketType::Handshake][ty as usize];
        let pn = u64::from(pn) & ((1u64 << (8 * u32::from(pn_len))) - 1);
        let header = PacketHeader::Long(LongHeader {
            packet_type,
            version: QUIC_V1,
            dcid,
            scid,
            token: if packet_type == LongPacketType::Initial { token } else { Vec::new() },
            length,
            packet_number: pn,
            pn_len,
        });
        let bytes = header.serialize().unwrap();
        let (parsed, used) = parse_header(&bytes, ParseContext::new(0)).unwrap();
        prop_assert_eq!(used, bytes.len());
        prop_assert_eq!(parsed, header);
    }

    #[test]
    fn transport_parameters_round_trip(entries in vec((0u64..64, v()), 0..10)) {
        let mut tp = TransportParameters::new();
        for (id, value) in entries {
            tp.set_varint(id, value);
        }
        let decoded = TransportParameters::decode(&tp.encode()).unwrap();
        prop_assert_eq!(decoded, tp);
    }
}
