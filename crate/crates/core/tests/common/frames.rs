// Shared by the dissector unit tests and the acceptance suite. The including
// module must have `Frame`, `AckRange`, `EcnCounts`, `ConnectionId`,
// `DissectedNode`, `NodeValue` and `rand::Rng` in scope.

use super::*;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Leaf {
    Uint(u64),
    Bytes(Vec<u8>),
}

/// Leaves a dissection of `frame` must contain, by field name, written out
/// from the frame table rather than from the codec. PADDING yields one entry
/// per byte since each zero byte is a frame of its own.
pub fn expected_leaves(frame: &Frame) -> Vec<Vec<(&'static str, Leaf)>> {
    use Leaf::{Bytes as B, Uint as U};
    let ty = |t: u64| ("frame_type", U(t));
    let one = |v: Vec<(&'static str, Leaf)>| vec![v];
    match frame {
        Frame::Padding(n) => vec![vec![ty(0)]; *n],
        Frame::Ping => one(vec![ty(1)]),
        Frame::Ack { largest_acked, ack_delay, first_range, ranges, ecn } => {
            let mut v = vec![
                ty(if ecn.is_some() { 3 } else { 2 }),
                ("largest_acknowledged", U(*largest_acked)),
                ("ack_delay", U(*ack_delay)),
                ("ack_range_count", U(ranges.len() as u64)),
                ("first_ack_range", U(*first_range)),
            ];
            for r in ranges {
                v.push(("gap", U(r.gap)));
                v.push(("ack_range_length", U(r.length)));
            }
            if let Some(e) = ecn {
                v.extend([("ect0_count", U(e.ect0)), ("ect1_count", U(e.ect1)), ("ecn_ce_count", U(e.ce))]);
            }
            one(v)
        }
        Frame::ResetStream { stream_id, error_code, final_size } => one(vec![
            ty(4),
            ("stream_id", U(*stream_id)),
            ("application_error_code", U(*error_code)),
            ("final_size", U(*final_size)),
        ]),
        Frame::StopSending { stream_id, error_code } => {
            one(vec![ty(5), ("stream_id", U(*stream_id)), ("application_error_code", U(*error_code))])
        }
        Frame::Crypto { offset, data } => one(vec![
            ty(6),
            ("offset", U(*offset)),
            ("length", U(data.len() as u64)),
            ("crypto_data", B(data.clone())),
        ]),
        Frame::NewToken { token } => {
            one(vec![ty(7), ("token_length", U(token.len() as u64)), ("token", B(token.clone()))])
        }
        Frame::Stream { stream_id, offset, data, fin } => {
            let t = 0x08 | 0x02 | if *offset > 0 { 0x04 } else { 0 } | u64::from(*fin);
            let mut v = vec![ty(t), ("stream_id", U(*stream_id))];
            if *offset > 0 {
                v.push(("offset", U(*offset)));
            }
            v.push(("length", U(data.len() as u64)));
            v.push(("stream_data", B(data.clone())));
            one(v)
        }
        Frame::MaxData { max } => one(vec![ty(0x10), ("maximum_data", U(*max))]),
        Frame::MaxStreamData { stream_id, max } => {
            one(vec![ty(0x11), ("stream_id", U(*stream_id)), ("maximum_stream_data", U(*max))])
        }
        Frame::MaxStreams { bidi, max } => {
            one(vec![ty(if *bidi { 0x12 } else { 0x13 }), ("maximum_streams", U(*max))])
        }
        Frame::DataBlocked { limit } => one(vec![ty(0x14), ("maximum_data", U(*limit))]),
        Frame::StreamDataBlocked { stream_id, limit } => {
            one(vec![ty(0x15), ("stream_id", U(*stream_id)), ("maximum_stream_data", U(*limit))])
        }
        Frame::StreamsBlocked { bidi, limit } => {
            one(vec![ty(if *bidi { 0x16 } else { 0x17 }), ("maximum_streams", U(*limit))])
        }
        Frame::NewConnectionId { seq, retire_prior_to, cid, reset_token } => one(vec![
            ty(0x18),
            ("sequence_number", U(*seq)),
            ("retire_prior_to", U(*retire_prior_to)),
            ("length", U(cid.len() as u64)),
            ("connection_id", B(cid.as_bytes().to_vec())),
            ("stateless_reset_token", B(reset_token.to_vec())),
        ]),
        Frame::RetireConnectionId { seq } => one(vec![ty(0x19), ("sequence_number", U(*seq))]),
        Frame::PathChallenge { data } => one(vec![ty(0x1a), ("data", B(data.to_vec()))]),
        Frame::PathResponse { data } => one(vec![ty(0x1b), ("data", B(data.to_vec()))]),
        Frame::ConnectionClose { error_code, frame_type, reason } => one(vec![
            ty(0x1c),
            ("error_code", U(*error_code)),
            ("frame_type_triggering", U(*frame_type)),
            ("reason_phrase_length", U(reason.len() as u64)),
            ("reason_phrase", B(reason.clone())),
        ]),
        Frame::ApplicationClose { error_code, reason } => one(vec![
            ty(0x1d),
            ("error_code", U(*error_code)),
            ("reason_phrase_length", U(reason.len() as u64)),
            ("reason_phrase", B(reason.clone())),
        ]),
        Frame::HandshakeDone => one(vec![ty(0x1e)]),
    }
}

/// Valued leaves of one dissected `frame` node.
pub fn actual_leaves(frame: &DissectedNode) -> Vec<(String, Leaf)> {
    frame
        .leaves()
        .into_iter()
        .filter_map(|n| match n.value {
            NodeValue::Uint(v) => Some((n.name.clone(), Leaf::Uint(v))),
            NodeValue::Bytes => Some((n.name.clone(), Leaf::Bytes(n.raw.clone()))),
            NodeValue::Structure => None,
            _ => Some((n.name.clone(), Leaf::Bytes(Vec::new()))),
        })
        .collect()
}

/// Compares the `frame` children of a dissected `frames` node with the
/// frames that were serialized. Returns a description of the first mismatch.
pub fn check_agreement(frames: &[Frame], dissected: &DissectedNode) -> Result<(), String> {
    let expected: Vec<_> = frames.iter().flat_map(expected_leaves).collect();
    if expected.len() != dissected.children.len() {
        return Err(format!("{} frames expected, {} dissected", expected.len(), dissected.children.len()));
    }
    for (i, (want, node)) in expected.iter().zip(&dissected.children).enumerate() {
        let got = actual_leaves(node);
        let want: Vec<(String, Leaf)> = want.iter().map(|(n, l)| (n.to_string(), l.clone())).collect();
        if got != want {
            return Err(format!("frame {i}: expected {want:?}, dissected {got:?}"));
        }
    }
    Ok(())
}

/// Leaves tile the input, and every node's children are contiguous and
/// nested inside it.
fn check_tiling(node: &DissectedNode) -> Result<(), String> {
    let mut at = node.bit_start;
    for c in &node.children {
        if c.bit_start != at {
            return Err(format!("{} starts at bit {}, expected {at}", c.name, c.bit_start));
        }
        check_tiling(c)?;
        at = c.bit_end;
    }
    if !node.children.is_empty() && at != node.bit_end {
        return Err(format!("children of {} end at {at}, node at {}", node.name, node.bit_end));
    }
    Ok(())
}

pub fn check_coverage(input: &[u8], tree: &DissectedNode) -> Result<(), String> {
    if (tree.bit_start, tree.bit_end) != (0, input.len() * 8) {
        return Err(format!("root spans {}..{}", tree.bit_start, tree.bit_end));
    }
    check_tiling(tree)?;
    // Rebuild the input bit by bit from the leaves.
    let mut rebuilt = vec![0u8; input.len()];
    for leaf in tree.leaves() {
        for bit in leaf.bit_start..leaf.bit_end {
            let byte = leaf.raw[bit / 8 - leaf.byte_start()];
            rebuilt[bit / 8] |= byte & (0x80 >> (bit % 8));
        }
    }
    if rebuilt != input {
        return Err("leaves do not reconstruct the input".into());
    }
    Ok(())
}

fn varint<R: Rng>(rng: &mut R) -> u64 {
    let bits = [6, 14, 30, 62][rng.gen_range(0..4)];
    rng.gen::<u64>() & ((1u64 << bits) - 1)
}

fn bytes<R: Rng>(rng: &mut R, max: usize) -> Vec<u8> {
    let n = rng.gen_range(0..=max);
    (0..n).map(|_| rng.gen()).collect()
}

pub fn random_frame<R: Rng>(rng: &mut R) -> Frame {
    match rng.gen_range(0..21) {
        0 => Frame::Padding(rng.gen_range(1..20)),
        1 => Frame::Ping,
        2 => {
            let ranges = (0..rng.gen_range(0..4))
                .map(|_| AckRange { gap: varint(rng), length: varint(rng) })
                .collect();
            let ecn = rng.gen_bool(0.5).then(|| EcnCounts { ect0: varint(rng), ect1: varint(rng), ce: varint(rng) });
            Frame::Ack { largest_acked: varint(rng), ack_delay: varint(rng), first_range: varint(rng), ranges, ecn }
        }
        3 => Frame::ResetStream { stream_id: varint(rng), error_code: varint(rng), final_size: varint(rng) },
        4 => Frame::StopSending { stream_id: varint(rng), error_code: varint(rng) },
        5 => Frame::Crypto { offset: varint(rng), data: bytes(rng, 80) },
        6 => Frame::NewToken { token: bytes(rng, 40) },
        7 => Frame::Stream { stream_id: varint(rng), offset: varint(rng), data: bytes(rng, 80), fin: rng.gen() },
        8 => Frame::MaxData { max: varint(rng) },
        9 => Frame::MaxStreamData { stream_id: varint(rng), max: varint(rng) },
        10 => Frame::MaxStreams { bidi: rng.gen(), max: varint(rng) },
        11 => Frame::DataBlocked { limit: varint(rng) },
        12 => Frame::StreamDataBlocked { stream_id: varint(rng), limit: varint(rng) },
        13 => Frame::StreamsBlocked { bidi: rng.gen(), limit: varint(rng) },
        14 => {
            let len = rng.gen_range(1..=20);
            let cid: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            Frame::NewConnectionId {
                seq: varint(rng),
                retire_prior_to: varint(rng),
                cid: ConnectionId::new(&cid).expect("at most 20 bytes"),
                reset_token: rng.gen(),
            }
        }
        15 => Frame::RetireConnectionId { seq: varint(rng) },
        16 => Frame::PathChallenge { data: rng.gen() },
        17 => Frame::PathResponse { data: rng.gen() },
        18 => Frame::ConnectionClose { error_code: varint(rng), frame_type: varint(rng), reason: bytes(rng, 30) },
        19 => Frame::ApplicationClose { error_code: varint(rng), reason: bytes(rng, 30) },
        _ => Frame::HandshakeDone,
    }
}
