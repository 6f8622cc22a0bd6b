use super::reader::Reader;
use super::varint::put_varint;
use super::{ConnectionId, WireError, MAX_CID_LEN};

pub const QUIC_V1: u32 = 0x0000_0001;

const LONG_FORM: u8 = 0x80;
const FIXED_BIT: u8 = 0x40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LongPacketType {
    Initial,
    ZeroRtt,
    Handshake,
    Retry,
}

impl LongPacketType {
    fn from_bits(bits: u8) -> Self {
        match bits & 0x03 {
            0 => LongPacketType::Initial,
            1 => LongPacketType::ZeroRtt,
            2 => LongPacketType::Handshake,
            _ => LongPacketType::Retry,
        }
    }

    fn bits(self) -> u8 {
        match self {
            LongPacketType::Initial => 0,
            LongPacketType::ZeroRtt => 1,
            LongPacketType::Handshake => 2,
            LongPacketType::Retry => 3,
        }
    }
}

/// Initial, 0-RTT and Handshake packet headers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LongHeader {
    pub packet_type: LongPacketType,
    pub version: u32,
    pub dcid: ConnectionId,
    pub scid: ConnectionId,
    /// Only present on the wire for Initial packets.
    pub token: Vec<u8>,
    /// Bytes following the length field: packet number, payload and AEAD tag.
    pub length: u64,
    pub packet_number: u64,
    pub pn_len: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetryHeader {
    pub version: u32,
    pub dcid: ConnectionId,
    pub scid: ConnectionId,
    pub token: Vec<u8>,
    pub integrity_tag: [u8; 16],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShortHeader {
    pub spin: bool,
    pub key_phase: bool,
    pub dcid: ConnectionId,
    pub packet_number: u64,
    pub pn_len: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VersionNegotiation {
    /// The seven low bits of the first byte; arbitrary on the wire.
    pub unused: u8,
    pub dcid: ConnectionId,
    pub scid: ConnectionId,
    pub versions: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PacketHeader {
    Long(LongHeader),
    Retry(RetryHeader),
    Short(ShortHeader),
    VersionNegotiation(VersionNegotiation),
    /// A long header whose version this crate does not interpret; only the
    /// version-independent fields are decoded.
    UnsupportedVersion { first_byte: u8, version: u32, dcid: ConnectionId, scid: ConnectionId },
}

/// Parsing context for headers that are not self-describing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseContext {
    /// Length of the destination connection ID carried by short headers.
    pub short_dcid_len: usize,
}

impl ParseContext {
    pub fn new(short_dcid_len: usize) -> Self {
        ParseContext { short_dcid_len }
    }
}

impl PacketHeader {
    pub fn is_long(&self) -> bool {
        !matches!(self, PacketHeader::Short(_))
    }

    pub fn dcid(&self) -> &ConnectionId {
        match self {
            PacketHeader::Long(h) => &h.dcid,
            PacketHeader::Retry(h) => &h.dcid,
            PacketHeader::Short(h) => &h.dcid,
            PacketHeader::VersionNegotiation(h) => &h.dcid,
            PacketHeader::UnsupportedVersion { dcid, .. } => dcid,
        }
    }

    pub fn packet_number(&self) -> Option<u64> {
        match self {
            PacketHeader::Long(h) => Some(h.packet_number),
            PacketHeader::Short(h) => Some(h.packet_number),
            _ => None,
        }
    }

    pub fn pn_len(&self) -> Option<u8> {
        match self {
            PacketHeader::Long(h) => Some(h.pn_len),
            PacketHeader::Short(h) => Some(h.pn_len),
            _ => None,
        }
    }

    /// Serializes the cleartext header. The packet number is written in its
    /// truncated `pn_len`-byte form; higher bits are dropped.
    pub fn serialize(&self) -> Result<Vec<u8>, WireError> {
        let mut out = Vec::with_capacity(64);
        match self {
            PacketHeader::Long(h) => {
                check_pn_len(h.pn_len)?;
                out.push(LONG_FORM | FIXED_BIT | (h.packet_type.bits() << 4) | (h.pn_len - 1));
                out.extend_from_slice(&h.version.to_be_bytes());
                put_cid(&mut out, &h.dcid);
                put_cid(&mut out, &h.scid);
                if h.packet_type == LongPacketType::Initial {
                    put_varint(&mut out, h.token.len() as u64)?;
                    out.extend_from_slice(&h.token);
                }
                put_varint(&mut out, h.length)?;
                put_truncated_pn(&mut out, h.packet_number, h.pn_len);
            }
            PacketHeader::Retry(h) => {
                out.push(LONG_FORM | FIXED_BIT | (LongPacketType::Retry.bits() << 4));
                out.extend_from_slice(&h.version.to_be_bytes());
                put_cid(&mut out, &h.dcid);
                put_cid(&mut out, &h.scid);
                out.extend_from_slice(&h.token);
                out.extend_from_slice(&h.integrity_tag);
            }
            PacketHeader::Short(h) => {
                check_pn_len(h.pn_len)?;
                let mut first = FIXED_BIT | (h.pn_len - 1);
                if h.spin {
                    first |= 0x20;
                }
                if h.key_phase {
                    first |= 0x04;
                }
                out.push(first);
                out.extend_from_slice(h.dcid.as_bytes());
                put_truncated_pn(&mut out, h.packet_number, h.pn_len);
            }
            PacketHeader::VersionNegotiation(h) => {
                out.push(LONG_FORM | (h.unused & 0x7f));
                out.extend_from_slice(&0u32.to_be_bytes());
                put_cid(&mut out, &h.dcid);
                put_cid(&mut out, &h.scid);
                for v in &h.versions {
                    out.extend_from_slice(&v.to_be_bytes());
                }
            }
            PacketHeader::UnsupportedVersion { first_byte, version, dcid, scid } => {
                out.push(*first_byte | LONG_FORM);
                out.extend_from_slice(&version.to_be_bytes());
                put_cid(&mut out, dcid);
                put_cid(&mut out, scid);
            }
        }
        Ok(out)
    }
}

fn check_pn_len(len: u8) -> Result<(), WireError> {
    if (1..=4).contains(&len) {
        Ok(())
    } else {
        Err(WireError::Invalid { offset: 0, what: "packet number length" })
    }
}

fn put_cid(out: &mut Vec<u8>, cid: &ConnectionId) {
    out.push(cid.len() as u8);
    out.extend_from_slice(cid.as_bytes());
}

fn put_truncated_pn(out: &mut Vec<u8>, pn: u64, len: u8) {
    let bytes = pn.to_be_bytes();
    out.extend_from_slice(&bytes[8 - usize::from(len)..]);
}

fn read_cid(r: &mut Reader<'_>) -> Result<ConnectionId, WireError> {
    let at = r.offset();
    let len = usize::from(r.u8()?);
    if len > MAX_CID_LEN {
        return Err(WireError::Invalid { offset: at, what: "connection ID length" });
    }
    ConnectionId::new(r.bytes(len)?)
}

/// Parses a cleartext header (header protection already removed, as stored
/// in traces). Returns the header and the offset of the first payload byte.
///
/// For long headers the `length` field is reported as found; it is not
/// checked against the bytes that follow, because logged cleartext packets
/// carry no AEAD tag.
pub fn parse_header(buf: &[u8], ctx: ParseContext) -> Result<(PacketHeader, usize), WireError> {
    let mut r = Reader::new(buf);
    let first = r.u8()?;
    if first & LONG_FORM == 0 {
        if first & FIXED_BIT == 0 {
            return Err(WireError::Invalid { offset: 0, what: "fixed bit" });
        }
        if first & 0x18 != 0 {
            return Err(WireError::Invalid { offset: 0, what: "reserved bits" });
        }
        let dcid = ConnectionId::new(r.bytes(ctx.short_dcid_len)?)?;
        let pn_len = (first & 0x03) + 1;
        let packet_number = r.uint(usize::from(pn_len))?;
        let header = ShortHeader {
            spin: first & 0x20 != 0,
            key_phase: first & 0x04 != 0,
            dcid,
            packet_number,
            pn_len,
        };
        return Ok((PacketHeader::Short(header), r.position()));
    }

    let version = r.u32()?;
    let dcid = read_cid(&mut r)?;
    let scid = read_cid(&mut r)?;
    if version == 0 {
        let at = r.offset();
        let rest = r.rest();
        if !rest.len().is_multiple_of(4) {
            return Err(WireError::Invalid { offset: at, what: "version list" });
        }
        let versions =
            rest.chunks_exact(4).map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]])).collect();
        let vn = VersionNegotiation { unused: first & 0x7f, dcid, scid, versions };
        return Ok((PacketHeader::VersionNegotiation(vn), buf.len()));
    }
    if version != QUIC_V1 {
        let header = PacketHeader::UnsupportedVersion { first_byte: first, version, dcid, scid };
        return Ok((header, r.position()));
    }
    if first & FIXED_BIT == 0 {
        return Err(WireError::Invalid { offset: 0, what: "fixed bit" });
    }
    let packet_type = LongPacketType::from_bits(first >> 4);
    if packet_type == LongPacketType::Retry {
        let at = r.offset();
        let rest = r.rest();
        if rest.len() < 16 {
            return Err(WireError::Truncated { offset: at, needed: 16 - rest.len() });
        }
        let (token, tag) = rest.split_at(rest.len() - 16);
        let mut integrity_tag = [0u8; 16];
        integrity_tag.copy_from_slice(tag);
        let header =
            RetryHeader { version, dcid, scid, token: token.to_vec(), integrity_tag };
        return Ok((PacketHeader::Retry(header), buf.len()));
    }
    if first & 0x0c != 0 {
        return Err(WireError::Invalid { offset: 0, what: "reserved bits" });
    }
    let token = if packet_type == LongPacketType::Initial {
        let len = r.varint_len()?;
        r.bytes(len)?.to_vec()
    } else {
        Vec::new()
    };
    let length = r.varint()?;
    let pn_len = (first & 0x03) + 1;
    let packet_number = r.uint(usize::from(pn_len))?;
    let header = LongHeader {
        packet_type,
        version,
        dcid,
        scid,
        token,
        length,
        packet_number,
        pn_len,
    };
    Ok((PacketHeader::Long(header), r.position()))
}

/// Header of a packet as received, before header protection is removed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProtectedHeader {
    Long {
        packet_type: LongPacketType,
        version: u32,
        dcid: ConnectionId,
        scid: ConnectionId,
        token: Vec<u8>,
        pn_offset: usize,
        /// Total bytes of this packet within the datagram.
        packet_len: usize,
    },
    Short { dcid: ConnectionId, pn_offset: usize, packet_len: usize },
    /// Version negotiation, Retry, or an uninterpreted version: nothing to unprotect.
    Unprotected { header: PacketHeader, packet_len: usize },
}

impl ProtectedHeader {
    pub fn packet_len(&self) -> usize {
        match self {
            ProtectedHeader::Long { packet_len, .. }
            | ProtectedHeader::Short { packet_len, .. }
            | ProtectedHeader::Unprotected { packet_len, .. } => *packet_len,
        }
    }
}

/// Parses the unprotected part of the first packet in `buf`, locating the
/// packet number and the end of the packet so that coalesced packets can be
/// split.
pub fn parse_protected_header(buf: &[u8], ctx: ParseContext) -> Result<ProtectedHeader, WireError> {
    let mut r = Reader::new(buf);
    let first = r.u8()?;
    if first & LONG_FORM == 0 {
        if first & FIXED_BIT == 0 {
            return Err(WireError::Invalid { offset: 0, what: "fixed bit" });
        }
        let dcid = ConnectionId::new(r.bytes(ctx.short_dcid_len)?)?;
        return Ok(ProtectedHeader::Short { dcid, pn_offset: r.position(), packet_len: buf.len() });
    }
    let version = r.u32()?;
    let dcid = read_cid(&mut r)?;
    let scid = read_cid(&mut r)?;
    let packet_type = LongPacketType::from_bits(first >> 4);
    if version != QUIC_V1 || packet_type == LongPacketType::Retry {
        let (header, _) = parse_header(buf, ctx)?;
        return Ok(ProtectedHeader::Unprotected { header, packet_len: buf.len() });
    }
    if first & FIXED_BIT == 0 {
        return Err(WireError::Invalid { offset: 0, what: "fixed bit" });
    }
    let token = if packet_type == LongPacketType::Initial {
        let len = r.varint_len()?;
        r.bytes(len)?.to_vec()
    } else {
        Vec::new()
    };
    let length = r.varint_len()?;
    let pn_offset = r.position();
    if r.remaining() < length {
        return Err(WireError::Truncated { offset: buf.len(), needed: length - r.remaining() });
    }
    Ok(ProtectedHeader::Long {
        packet_type,
        version,
        dcid,
        scid,
        token,
        pn_offset,
        packet_len: pn_offset + length,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cid(hex: &str) -> ConnectionId {
        let bytes: Vec<u8> = (0..hex.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&hex[i..i + 2], 16).unwrap())
            .collect();
        ConnectionId::new(&bytes).unwrap()
    }

    #[test]
    fn initial_round_trip() {
        let header = PacketHeader::Long(LongHeader {
            packet_type: LongPacketType::Initial,
            version: QUIC_V1,
            dcid: cid("8394c8f03e515708"),
            scid: ConnectionId::empty(),
            token: Vec::new(),
            length: 1182,
            packet_number: 2,
            pn_len: 4,
        });
        let bytes = header.serialize().unwrap();
        // Same bytes as the published client Initial header.
        assert_eq!(bytes, [
            0xc3, 0, 0, 0, 1, 8, 0x83, 0x94, 0xc8, 0xf0, 0x3e, 0x51, 0x57, 0x08, 0, 0, 0x44, 0x9e,
            0, 0, 0, 2
        ]);
        let (parsed, off) = parse_header(&bytes, ParseContext::new(0)).unwrap();
        assert_eq!(parsed, header);
        assert_eq!(off, bytes.len());
    }

    #[test]
    fn version_negotiation() {
        let mut buf = vec![0x80 | 0x2a, 0, 0, 0, 0, 4, 1, 2, 3, 4, 0];
        buf.extend_from_slice(&1u32.to_be_bytes());
        let (header, _) = parse_header(&buf, ParseContext::new(0)).unwrap();
        match header {
            PacketHeader::VersionNegotiation(vn) => {
                assert_eq!(vn.versions, vec![1]);
                assert_eq!(vn.dcid, cid("01020304"));
            }
            other => panic!("expected VN, got {other:?}"),
        }
        buf.push(0);
        assert!(matches!(
            parse_header(&buf, ParseContext::new(0)),
            Err(WireError::Invalid { what: "version list", .. })
        ));
    }

    #[test]
    fn truncations_and_bit_checks() {
        assert_eq!(
            parse_header(&[0xc0], ParseContext::new(0)),
            Err(WireError::Truncated { offset: 1, needed: 4 })
        );
        // dcid length says 8, only 2 bytes follow
        assert_eq!(
            parse_header(&[0xc0, 0, 0, 0, 1, 8, 1, 2], ParseContext::new(0)),
            Err(WireError::Truncated { offset: 6, needed: 6 })
        );
        assert!(matches!(
            parse_header(&[0xc0, 0, 0, 0, 1, 21], ParseContext::new(0)),
            Err(WireError::Invalid { offset: 5, .. })
        ));
        assert!(matches!(
            parse_header(&[0x00, 1, 2, 3], ParseContext::new(2)),
            Err(WireError::Invalid { what: "fixed bit", .. })
        ));
        assert!(matches!(
            parse_header(&[0x48, 1, 2, 3], ParseContext::new(2)),
            Err(WireError::Invalid { what: "reserved bits", .. })
        ));
    }

    #[test]
    fn short_and_retry() {
        let short = PacketHeader::Short(ShortHeader {
            spin: true,
            key_phase: false,
            dcid: cid("0102030405060708"),
            packet_number: 0x1234,
            pn_len: 2,
        });
        let bytes = short.serialize().unwrap();
        assert_eq!(parse_header(&bytes, ParseContext::new(8)).unwrap(), (short, bytes.len()));

        let retry = PacketHeader::Retry(RetryHeader {
            version: QUIC_V1,
            dcid: ConnectionId::empty(),
            scid: cid("f067a5502a4262b5"),
            token: b"token".to_vec(),
            integrity_tag: [9; 16],
        });
        let bytes = retry.serialize().unwrap();
        assert_eq!(parse_header(&bytes, ParseContext::new(0)).unwrap().0, retry);
    }

    #[test]
    fn protected_header_bounds_coalesced_packets() {
        // A Handshake header claiming 5 bytes of protected payload followed by 3 extra bytes.
        let mut buf = vec![0xe0, 0, 0, 0, 1, 0, 0, 5, 1, 2, 3, 4, 5, 0xaa, 0xbb, 0xcc];
        match parse_protected_header(&buf, ParseContext::new(0)).unwrap() {
            ProtectedHeader::Long { pn_offset, packet_len, .. } => {
                assert_eq!(pn_offset, 8);
                assert_eq!(packet_len, 13);
            }
            other => panic!("unexpected {other:?}"),
        }
        buf.truncate(10);
        assert!(matches!(
            parse_protected_header(&buf, ParseContext::new(0)),
            Err(WireError::Truncated { .. })
        ));
    }
}
