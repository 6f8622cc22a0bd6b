use super::crypto::{header_mask, open, seal};
use super::{KeyMaterial, ProtectionError};
use crate::wire::{
    parse_header, parse_protected_header, PacketHeader, ParseContext, ProtectedHeader, WireError,
};

pub const AEAD_TAG_LEN: usize = 16;
const SAMPLE_OFFSET: usize = 4;
const SAMPLE_LEN: usize = 16;

/// A packet after protection, with the header as it was authenticated
/// (long-header length filled in).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtectedPacket {
    pub bytes: Vec<u8>,
    pub header: PacketHeader,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnprotectedPacket {
    /// Header with the full reconstructed packet number.
    pub header: PacketHeader,
    /// Header bytes with protection removed, exactly as received.
    pub header_bytes: Vec<u8>,
    pub payload: Vec<u8>,
    /// Bytes the packet occupied in its datagram.
    pub packet_len: usize,
}

/// Smallest packet number encoding that lets the peer recover `pn` given the
/// largest number it has acknowledged.
pub fn packet_number_length(pn: u64, largest_acked: Option<u64>) -> u8 {
    let unacked = match largest_acked {
        Some(largest) => pn.saturating_sub(largest),
        None => pn + 1,
    };
    let bits_needed = 64 - unacked.leading_zeros() + 1;
    (bits_needed.div_ceil(8)).clamp(1, 4) as u8
}

/// Reconstructs a full packet number from its truncated encoding.
pub fn decode_packet_number(largest_pn: Option<u64>, truncated: u64, pn_len: u8) -> u64 {
    let expected = largest_pn.map_or(0, |l| l + 1);
    let pn_nbits = u32::from(pn_len) * 8;
    let pn_win = 1u64 << pn_nbits;
    let pn_hwin = pn_win / 2;
    let pn_mask = pn_win - 1;
    let candidate = (expected & !pn_mask) | truncated;
    if candidate + pn_hwin <= expected && candidate < (1u64 << 62) - pn_win {
        candidate + pn_win
    } else if candidate > expected + pn_hwin && candidate >= pn_win {
        candidate - pn_win
    } else {
        candidate
    }
}

/// Applies AEAD and header protection. For long headers the length field is
/// recomputed from the payload.
pub fn protect(
    header: &PacketHeader,
    payload: &[u8],
    keys: &KeyMaterial,
) -> Result<ProtectedPacket, ProtectionError> {
    let mut header = header.clone();
    let (full_pn, pn_len) = match &mut header {
        PacketHeader::Long(h) => {
            h.length = (usize::from(h.pn_len) + payload.len() + AEAD_TAG_LEN) as u64;
            (h.packet_number, h.pn_len)
        }
        PacketHeader::Short(h) => (h.packet_number, h.pn_len),
        _ => return Err(ProtectionError::NotProtected),
    };
    if usize::from(pn_len) + payload.len() + AEAD_TAG_LEN < SAMPLE_OFFSET + SAMPLE_LEN {
        return Err(ProtectionError::PayloadTooShort);
    }
    let mut bytes = header.serialize()?;
    let pn_offset = bytes.len() - usize::from(pn_len);
    let header_len = bytes.len();
    let mut body = payload.to_vec();
    seal(&keys.key, &keys.iv, full_pn, &bytes, &mut body)?;
    bytes.extend_from_slice(&body);

    let sample_at = pn_offset + SAMPLE_OFFSET;
    let mask = header_mask(&keys.header_protection_key, &bytes[sample_at..sample_at + SAMPLE_LEN])?;
    bytes[0] ^= mask[0] & if header.is_long() { 0x0f } else { 0x1f };
    for (b, m) in bytes[pn_offset..header_len].iter_mut().zip(&mask[1..]) {
        *b ^= m;
    }
    Ok(ProtectedPacket { bytes, header })
}

/// Removes header and AEAD protection from the first packet in `buf`.
/// `largest_pn` is the largest packet number received so far in the
/// packet's number space.
pub fn unprotect(
    buf: &[u8],
    ctx: ParseContext,
    keys: &KeyMaterial,
    largest_pn: Option<u64>,
) -> Result<UnprotectedPacket, ProtectionError> {
    let protected = parse_protected_header(buf, ctx)?;
    let (pn_offset, packet_len, long) = match protected {
        ProtectedHeader::Long { pn_offset, packet_len, .. } => (pn_offset, packet_len, true),
        ProtectedHeader::Short { pn_offset, packet_len, .. } => (pn_offset, packet_len, false),
        ProtectedHeader::Unprotected { .. } => return Err(ProtectionError::NotProtected),
    };
    let packet = &buf[..packet_len];
    let sample_at = pn_offset + SAMPLE_OFFSET;
    if packet.len() < sample_at + SAMPLE_LEN {
        return Err(WireError::Truncated {
            offset: packet.len(),
            needed: sample_at + SAMPLE_LEN - packet.len(),
        }
        .into());
    }
    let mask = header_mask(&keys.header_protection_key, &packet[sample_at..sample_at + SAMPLE_LEN])?;
    let first = packet[0] ^ (mask[0] & if long { 0x0f } else { 0x1f });
    let pn_len = usize::from(first & 0x03) + 1;
    let mut header_bytes = packet[..pn_offset + pn_len].to_vec();
    header_bytes[0] = first;
    for (b, m) in header_bytes[pn_offset..].iter_mut().zip(&mask[1..]) {
        *b ^= m;
    }
    let truncated = header_bytes[pn_offset..]
        .iter()
        .fold(0u64, |acc, &b| (acc << 8) | u64::from(b));
    let full_pn = decode_packet_number(largest_pn, truncated, pn_len as u8);
    let payload = open(&keys.key, &keys.iv, full_pn, &header_bytes, &packet[pn_offset + pn_len..])?;

    // Reserved bits are only meaningful once protection is removed.
    let (mut header, _) = parse_header(&header_bytes, ctx)?;
    match &mut header {
        PacketHeader::Long(h) => h.packet_number = full_pn,
        PacketHeader::Short(h) => h.packet_number = full_pn,
        _ => return Err(ProtectionError::NotProtected),
    }
    Ok(UnprotectedPacket { header, header_bytes, payload, packet_len })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pn_decode_published_example() {
        // 2-byte encoding 0x9b32 next to largest 0xa82f30ea.
        assert_eq!(decode_packet_number(Some(0xa82f30ea), 0x9b32, 2), 0xa82f9b32);
    }

    #[test]
    fn pn_decode_one_byte_window() {
        // Expected 0xa82f30eb; the 256-wide window around it holds 0xa82f309b.
        assert_eq!(decode_packet_number(Some(0xa82f30ea), 0x9b, 1), 0xa82f309b);
    }

    #[test]
    fn pn_decode_wraps_forward_and_back() {
        assert_eq!(decode_packet_number(Some(0xff), 0x00, 1), 0x100);
        assert_eq!(decode_packet_number(Some(0x100), 0xff, 1), 0xff);
        assert_eq!(decode_packet_number(None, 0, 1), 0);
        assert_eq!(decode_packet_number(None, 5, 4), 5);
    }

    #[test]
    fn pn_length_choice() {
        assert_eq!(packet_number_length(0, None), 1);
        assert_eq!(packet_number_length(0xac5c02, Some(0xabe8b3)), 2);
        assert_eq!(packet_number_length(0xace8fe, Some(0xabe8b3)), 3);
        assert_eq!(packet_number_length(1 << 40, None), 4);
    }
}
