use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::wire::{
    serialize_frames, AckRange, ConnectionId, EcnCounts, Frame, LongHeader, LongPacketType, PacketHeader,
    ShortHeader, QUIC_V1,
};

#[path = "../../tests/common/frames.rs"]
#[allow(dead_code)]
mod frames;

const DCID: [u8; 8] = [0xc1; 8];

fn short_header(pn: u64) -> Vec<u8> {
    PacketHeader::Short(ShortHeader {
        spin: false,
        key_phase: false,
        dcid: ConnectionId::new(&DCID).unwrap(),
        packet_number: pn,
        pn_len: 1,
    })
    .serialize()
    .unwrap()
}

fn dissect_short(bytes: &[u8]) -> DissectedNode {
    dissect(bytes, &ProtocolDescription::quic_v1(), &[(SHORT_DCID_LEN, 8)])
}

#[test]
fn shipped_description_loads() {
    let d = ProtocolDescription::quic_v1();
    assert_eq!((d.protocol.as_str(), d.version.as_str()), ("quic", "1"));
    assert_eq!(d.parameters, vec![SHORT_DCID_LEN.to_string()]);
}

fn load_err(yaml: &str) -> (String, String) {
    match load_description(yaml) {
        Err(DescriptionError::Invalid { location, message }) => (location, message),
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn forward_reference_is_rejected() {
    let yaml = "protocol: t\nversion: '1'\nroot: p\nstructures:\n  p:\n    \
                - {name: body, type: bytes, length: len}\n    - {name: len, type: uint, bits: 8}\n";
    let (location, message) = load_err(yaml);
    assert_eq!(location, "structures.p[0] (body)");
    assert!(message.contains("before it is parsed"), "{message}");
}

#[test]
fn bad_descriptions_report_locations() {
    let head = "protocol: t\nversion: '1'\nroot: p\nstructures:\n  p:\n";
    let cases = [
        ("    - {name: a, type: float}\n", "structures.p[0] (a)", "unknown field type"),
        ("    - {name: a, type: bytes, length: nope}\n", "structures.p[0] (a)", "dangling"),
        ("    - {name: a, type: uint, bits: 8}\n    - {name: b, type: bytes, length: a + x}\n", "structures.p[1] (b)", "name + n"),
        ("    - {name: a, type: uint, bits: 65}\n", "structures.p[0] (a)", "outside"),
        ("    - {name: a, type: uint}\n", "structures.p[0] (a)", "missing `bits`"),
        ("    - {name: a, type: varint, bits: 3}\n", "structures.p[0] (a)", "does not apply"),
        ("    - {name: a, type: varint}\n    - {name: a, type: varint}\n", "structures.p[1] (a)", "duplicate"),
        ("    - {name: a, type: struct, struct: q}\n", "structures.p[0] (a)", "unknown structure"),
        ("    - {name: a, type: bytes, length: 1}\n    - {name: b, type: switch, on: a, cases: {}}\n", "structures.p[1] (b)", "not a numeric"),
        ("    - {name: a, type: struct, struct: p}\n", "structures.p", "contains itself"),
        ("    - {name: a, type: varint}\n  q: []\n", "structures.q", "unreachable"),
    ];
    for (fields, location, message) in cases {
        let (l, m) = load_err(&format!("{head}{fields}"));
        assert_eq!(l, location, "{fields}");
        assert!(m.contains(message), "{fields}: {m}");
    }
    assert!(matches!(load_description("root: [\n"), Err(DescriptionError::Yaml(_))));
    assert!(matches!(load_description(&format!("{head}    []\nextra: 1\n")), Err(DescriptionError::Yaml(_))));
}

#[test]
fn references_reach_enclosing_structures() {
    let yaml = "protocol: t\nversion: '1'\nroot: p\nparameters: [k]\nstructures:\n  p:\n    \
                - {name: n, type: uint, bits: 8}\n    - {name: inner, type: struct, struct: q}\n  q:\n    \
                - {name: a, type: bytes, length: n - 1}\n    - {name: b, type: bytes, length: k}\n";
    let d = load_description(yaml).unwrap();
    let tree = dissect(&[3, 0xaa, 0xbb, 0xcc, 0xdd], &d, &[("k", 1)]);
    let inner = tree.child("inner").unwrap();
    assert_eq!(inner.child("a").unwrap().raw, vec![0xaa, 0xbb]);
    assert_eq!(inner.child("b").unwrap().raw, vec![0xcc]);
    assert_eq!(tree.child(UNDISSECTED).unwrap().raw, vec![0xdd]);

    let unbound = dissect(&[3, 0xaa, 0xbb, 0xcc], &d, &[]);
    let err = unbound.find("b").unwrap();
    assert!(err.is_error() && err.byte_start() == 3);
}

#[test]
fn descriptions_for_two_versions_load_side_by_side() {
    let draft = QUIC_V1_YAML.replace("version: \"1\"", "version: \"0xff00001d\"");
    let draft = load_description(&draft).unwrap();
    let mut set = DescriptionSet::builtin();
    set.insert(draft);
    assert_eq!(set.versions().collect::<Vec<_>>(), vec!["0xff00001d", "1"]);

    let mut packet = vec![0xc0, 0xff, 0x00, 0x00, 0x1d, 0, 0, 0, 1, 0, 0x01];
    assert_eq!(set.for_packet(&packet).version, "0xff00001d");
    packet[1..5].copy_from_slice(&QUIC_V1.to_be_bytes());
    assert_eq!(set.for_packet(&packet).version, "1");
    packet[1..5].copy_from_slice(&0x0a0a_0a0au32.to_be_bytes());
    assert_eq!(set.for_packet(&packet).version, "1");
    assert_eq!(set.for_packet(&[0x40, 1, 2]).version, "1");
}

#[test]
fn ping_behind_a_short_header() {
    let mut packet = short_header(7);
    packet.extend(serialize_frames(&[Frame::Ping]).unwrap());
    let tree = dissect_short(&packet);
    frames::check_coverage(&packet, &tree).unwrap();
    let header = tree.child("short_header").unwrap();
    assert_eq!(tree.child("header_form").unwrap().uint(), Some(0));
    assert_eq!(header.child("fixed_bit").unwrap().uint(), Some(1));
    assert_eq!(header.child("pn_length").unwrap().uint(), Some(0));
    assert_eq!(header.child("dcid").unwrap().raw, DCID);
    assert_eq!(header.child("packet_number").unwrap().raw, vec![7]);
    let frames = header.child("frames").unwrap();
    assert_eq!(frames.children.len(), 1);
    let frame = &frames.children[0];
    assert_eq!(frame.child("frame_type").unwrap().uint(), Some(1));
    assert!(frame.child("ping").is_some());
    assert!(tree.errors().is_empty());
}

#[test]
fn request_packet_shows_the_stream_frame() {
    let mut packet = short_header(0);
    let request = b"GET /index.html\r\n".to_vec();
    packet.extend(serialize_frames(&[Frame::Stream { stream_id: 0, offset: 0, data: request.clone(), fin: true }]).unwrap());
    let tree = dissect_short(&packet);
    let stream = tree.find("stream").unwrap();
    assert_eq!(stream.child("stream_id").unwrap().uint(), Some(0));
    let data = stream.find("stream_data_with_length").unwrap();
    assert_eq!(data.child("length").unwrap().uint(), Some(17));
    assert_eq!(data.child("stream_data").unwrap().raw, request);
    assert!(render_text(&tree).contains("stream_data [13..30) = \"GET /index.html\\r\\n\" (17 bytes)"));
}

#[test]
fn truncated_ack_errors_at_the_cut_field() {
    // ACK_ECN, largest 100 (2-byte varint), delay 5, one range, first 10,
    // gap 2, length 3, ECN counts 1, 2 and 3 (the last as a 4-byte varint).
    let ack = [0x03, 0x40, 0x64, 0x05, 0x01, 0x0a, 0x02, 0x03, 0x01, 0x02, 0x80, 0x00, 0x00, 0x03];
    let boundaries = [0usize, 1, 3, 4, 5, 6, 7, 8, 9, 10, 14];
    let frame = Frame::Ack {
        largest_acked: 100,
        ack_delay: 5,
        first_range: 10,
        ranges: vec![AckRange { gap: 2, length: 3 }],
        ecn: Some(EcnCounts { ect0: 1, ect1: 2, ce: 3 }),
    };
    let mut encoded = Vec::new();
    frame.encode(&mut encoded).unwrap();
    assert_eq!(encoded[..10], ack[..10]);

    let header = short_header(1);
    let whole = [header.clone(), ack.to_vec()].concat();
    assert!(dissect_short(&whole).errors().is_empty());
    for cut in 1..ack.len() {
        let packet = [header.clone(), ack[..cut].to_vec()].concat();
        let tree = dissect_short(&packet);
        frames::check_coverage(&packet, &tree).unwrap();
        let field_start = *boundaries.iter().rev().find(|b| **b <= cut).unwrap();
        let ack_node = tree.find("ack").unwrap_or_else(|| panic!("no ack node at cut {cut}"));
        let errors = ack_node.errors();
        assert_eq!(errors.len(), 1, "cut {cut}");
        assert_eq!(errors[0].byte_start(), header.len() + field_start, "cut {cut}");
        assert_eq!(errors[0].byte_end(), packet.len());
    }
}

#[test]
fn long_header_fields_are_bit_exact() {
    let header = PacketHeader::Long(LongHeader {
        packet_type: LongPacketType::Initial,
        version: QUIC_V1,
        dcid: ConnectionId::new(&[1, 2, 3, 4]).unwrap(),
        scid: ConnectionId::empty(),
        token: vec![9, 9],
        length: 300,
        packet_number: 0x0102,
        pn_len: 2,
    });
    let mut packet = header.serialize().unwrap();
    packet.extend(serialize_frames(&[Frame::Crypto { offset: 0, data: vec![0x16; 5] }, Frame::Padding(20)]).unwrap());
    let tree = dissect_short(&packet);
    frames::check_coverage(&packet, &tree).unwrap();
    let long = tree.child("long_header").unwrap();
    let pt = long.child("long_packet_type").unwrap();
    assert_eq!((pt.bit_start, pt.bit_end, pt.uint()), (2, 4, Some(0)));
    assert_eq!(format_range(pt), "[0.2..0.4)");
    assert_eq!(long.child("version").unwrap().uint(), Some(1));
    let initial = tree.find("initial").unwrap();
    assert_eq!(initial.child("token").unwrap().raw, vec![9, 9]);
    assert_eq!(initial.child("length").unwrap().uint(), Some(300));
    assert_eq!(initial.child("packet_number").unwrap().raw, vec![1, 2]);
    assert_eq!(initial.child("frames").unwrap().children.len(), 21);
}

#[test]
fn version_negotiation_lists_versions() {
    let packet = [
        0x80, 0, 0, 0, 0, 1, 0xaa, 1, 0xbb, 0, 0, 0, 1, 0xff, 0, 0, 0x1d,
    ];
    let tree = dissect_short(&packet);
    frames::check_coverage(&packet, &tree).unwrap();
    let versions: Vec<u64> = tree
        .find("supported_versions")
        .unwrap()
        .children
        .iter()
        .map(|v| v.child("version").unwrap().uint().unwrap())
        .collect();
    assert_eq!(versions, vec![1, 0xff00_001d]);
}

#[test]
fn unknown_frame_type_becomes_an_error_leaf() {
    let mut packet = short_header(2);
    packet.extend([0x01, 0x21, 0xde, 0xad]);
    let tree = dissect_short(&packet);
    frames::check_coverage(&packet, &tree).unwrap();
    let errors = tree.errors();
    assert_eq!(errors.len(), 1);
    assert_eq!((errors[0].name.as_str(), errors[0].byte_start()), ("body", 12));
    assert!(matches!(&errors[0].value, NodeValue::Error(m) if m.contains("0x21")));
}

#[test]
fn trailing_bytes_are_undissected() {
    let d = load_description("protocol: t\nversion: x\nroot: p\nstructures:\n  p: [{name: a, type: uint, bits: 4}]\n").unwrap();
    let tree = dissect(&[0xab, 0xcd], &d, &[]);
    frames::check_coverage(&[0xab, 0xcd], &tree).unwrap();
    let rest = tree.child(UNDISSECTED).unwrap();
    assert_eq!((rest.bit_start, rest.bit_end), (4, 16));
    assert_eq!(render_text(&tree), "p [0..2)\n  a [0.0..0.4) = 10\n  undissected [0.4..2.0) = abcd (2 bytes)\n");
}

#[test]
fn empty_input_renders() {
    let tree = dissect_short(&[]);
    frames::check_coverage(&[], &tree).unwrap();
    assert_eq!(render_text(&tree), "packet [0..0)\n  header_form [0..0) = error: truncated: 1 bit(s) needed\n");
    assert!(render_html(&tree).contains("class=\"error\""));
}

#[test]
fn packet_without_frames_renders_header_only() {
    let packet = short_header(3);
    let text = render_text(&dissect_short(&packet));
    assert!(text.contains("packet_number [9..10) = 03 (1 bytes)"), "{text}");
    assert!(text.ends_with("    frames [10..10)\n"), "{text}");
}

#[test]
fn rendering_snapshot() {
    let mut packet = short_header(5);
    packet.extend(
        serialize_frames(&[
            Frame::Ack { largest_acked: 4, ack_delay: 0, first_range: 1, ranges: vec![], ecn: None },
            Frame::MaxStreamData { stream_id: 0, max: 160 },
            Frame::Padding(3),
        ])
        .unwrap(),
    );
    let expected = "\
packet [0..22)
  header_form [0.0..0.1) = 0
  short_header [0.1..22.0)
    fixed_bit [0.1..0.2) = 1
    spin_bit [0.2..0.3) = 0
    reserved_bits [0.3..0.5) = 0
    key_phase [0.5..0.6) = 0
    pn_length [0.6..1.0) = 0
    dcid [1..9) = c1c1c1c1c1c1c1c1 (8 bytes)
    packet_number [9..10) = 05 (1 bytes)
    frames [10..22)
      frame [10..15)
        frame_type [10..11) = 2
        ack [11..15)
          largest_acknowledged [11..12) = 4
          ack_delay [12..13) = 0
          ack_range_count [13..14) = 0
          first_ack_range [14..15) = 1
          ack_ranges [15..15)
      frame [15..19)
        frame_type [15..16) = 17
        max_stream_data [16..19)
          stream_id [16..17) = 0
          maximum_stream_data [17..19) = 160
      frame x3 [19..22)
        frame_type [19..20) = 0
        padding [20..20)
";
    assert_eq!(render_text(&dissect_short(&packet)), expected);
}

#[test]
fn html_escapes_values() {
    let d = load_description("protocol: t\nversion: x\nroot: p\nstructures:\n  p: [{name: s, type: bytes, length: rest}]\n").unwrap();
    let html = render_html(&dissect(b"<b>&", &d, &[]));
    assert!(html.contains("&quot;&lt;b&gt;&amp;&quot;"), "{html}");
    assert!(!html.contains("<b>"));
}

#[test]
fn random_frame_lists_agree_with_the_codec_seeded() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let desc = ProtocolDescription::quic_v1();
    for _ in 0..500 {
        let list: Vec<Frame> = (0..rng.gen_range(1..8)).map(|_| frames::random_frame(&mut rng)).collect();
        let payload = crate::wire::serialize_frames_unchecked(&list).unwrap();
        let packet = [short_header(1), payload].concat();
        let tree = dissect(&packet, &desc, &[(SHORT_DCID_LEN, 8)]);
        assert!(tree.errors().is_empty());
        frames::check_agreement(&list, tree.find("frames").unwrap()).unwrap();
    }
}

proptest! {
    #[test]
    fn dissection_agrees_with_the_codec(list in proptest::collection::vec(crate::wire::proptests::frame(), 1..10)) {
        let payload = crate::wire::serialize_frames_unchecked(&list).unwrap();
        let packet = [short_header(9), payload].concat();
        let tree = dissect_short(&packet);
        prop_assert!(tree.errors().is_empty());
        prop_assert_eq!(frames::check_coverage(&packet, &tree), Ok(()));
        let merged = crate::wire::proptests::merge_padding(list);
        prop_assert_eq!(frames::check_agreement(&merged, tree.find("frames").unwrap()), Ok(()));
    }

    #[test]
    fn dissection_is_total(bytes in proptest::collection::vec(any::<u8>(), 0..2000), dcid_len in 0u64..24) {
        let tree = dissect(&bytes, &ProtocolDescription::quic_v1(), &[(SHORT_DCID_LEN, dcid_len)]);
        prop_assert_eq!(frames::check_coverage(&bytes, &tree), Ok(()));
        render_text(&tree);
        render_html(&tree);
    }
}
