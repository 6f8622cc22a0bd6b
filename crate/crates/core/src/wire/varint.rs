use std::fmt;

use super::WireError;

/// An integer in `[0, 2^62 - 1]`, the range of the QUIC variable-length encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct VarInt(u64);

impl VarInt {
    pub const MAX: VarInt = VarInt((1 << 62) - 1);

    pub fn new(value: u64) -> Result<Self, WireError> {
        if value > Self::MAX.0 {
            Err(WireError::VarIntRange(value))
        } else {
            Ok(VarInt(value))
        }
    }

    pub const fn from_u32(value: u32) -> Self {
        VarInt(value as u64)
    }

    pub fn value(self) -> u64 {
        self.0
    }

    /// Length of the minimal encoding.
    pub fn encoded_len(self) -> usize {
        varint_len(self.0)
    }
}

impl fmt::Display for VarInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl TryFrom<u64> for VarInt {
    type Error = WireError;
    fn try_from(value: u64) -> Result<Self, Self::Error> {
        VarInt::new(value)
    }
}

impl From<VarInt> for u64 {
    fn from(v: VarInt) -> u64 {
        v.0
    }
}

/// Result of decoding a varint from the front of a buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodedVarInt {
    pub value: u64,
    pub len: usize,
    /// False when a shorter encoding of the same value exists.
    pub minimal: bool,
}

/// Minimal encoded length of `value`. Values above 2^62-1 report 8; callers
/// that encode must range-check first.
pub fn varint_len(value: u64) -> usize {
    match value {
        0..=63 => 1,
        64..=16_383 => 2,
        16_384..=1_073_741_823 => 4,
        _ => 8,
    }
}

pub fn encode_varint(value: u64) -> Result<Vec<u8>, WireError> {
    let mut out = Vec::with_capacity(8);
    put_varint(&mut out, value)?;
    Ok(out)
}

/// Appends the minimal encoding of `value` to `out`.
pub fn put_varint(out: &mut Vec<u8>, value: u64) -> Result<(), WireError> {
    VarInt::new(value)?;
    match varint_len(value) {
        1 => out.push(value as u8),
        2 => out.extend_from_slice(&((value as u16) | 0x4000).to_be_bytes()),
        4 => out.extend_from_slice(&((value as u32) | 0x8000_0000).to_be_bytes()),
        _ => out.extend_from_slice(&(value | 0xc000_0000_0000_0000).to_be_bytes()),
    }
    Ok(())
}

/// Appends `value` using exactly `len` bytes (1, 2, 4 or 8), even when a
/// shorter form exists.
#[cfg(test)]
pub(crate) fn put_varint_with_len(out: &mut Vec<u8>, value: u64, len: usize) {
    debug_assert!(varint_len(value) <= len);
    match len {
        1 => out.push(value as u8),
        2 => out.extend_from_slice(&((value as u16) | 0x4000).to_be_bytes()),
        4 => out.extend_from_slice(&((value as u32) | 0x8000_0000).to_be_bytes()),
        _ => out.extend_from_slice(&(value | 0xc000_0000_0000_0000).to_be_bytes()),
    }
}

pub fn decode_varint(buf: &[u8]) -> Result<DecodedVarInt, WireError> {
    let first = *buf.first().ok_or(WireError::Truncated { offset: 0, needed: 1 })?;
    let len = 1usize << (first >> 6);
    if buf.len() < len {
        return Err(WireError::Truncated { offset: 0, needed: len - buf.len() });
    }
    let value = buf[1..len]
        .iter()
        .fold(u64::from(first & 0x3f), |acc, b| (acc << 8) | u64::from(*b));
    Ok(DecodedVarInt { value, len, minimal: varint_len(value) == len })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_vectors() {
        assert_eq!(encode_varint(0).unwrap(), [0x00]);
        assert_eq!(encode_varint(37).unwrap(), [0x25]);
        assert_eq!(encode_varint(15293).unwrap(), [0x7b, 0xbd]);
        assert_eq!(encode_varint(494_878_333).unwrap(), [0x9d, 0x7f, 0x3e, 0x7d]);
        assert_eq!(
            encode_varint(151_288_809_941_952_652).unwrap(),
            [0xc2, 0x19, 0x7c, 0x5e, 0xff, 0x14, 0xe8, 0x8c]
        );
    }

    #[test]
    fn decode_flags_non_minimal() {
        assert_eq!(
            decode_varint(&[0x25]).unwrap(),
            DecodedVarInt { value: 37, len: 1, minimal: true }
        );
        assert_eq!(
            decode_varint(&[0x40, 0x25]).unwrap(),
            DecodedVarInt { value: 37, len: 2, minimal: false }
        );
        assert_eq!(
            decode_varint(&[0x9d, 0x7f, 0x3e, 0x7d]).unwrap(),
            DecodedVarInt { value: 494_878_333, len: 4, minimal: true }
        );
    }

    #[test]
    fn range_and_truncation_errors() {
        assert_eq!(encode_varint(1 << 62), Err(WireError::VarIntRange(1 << 62)));
        assert_eq!(encode_varint(VarInt::MAX.value()).unwrap().len(), 8);
        assert_eq!(decode_varint(&[0x9d, 0x7f]), Err(WireError::Truncated { offset: 0, needed: 2 }));
        assert!(matches!(decode_varint(&[]), Err(WireError::Truncated { .. })));
    }

    #[test]
    fn boundaries() {
        for (v, len) in [(63, 1), (64, 2), (16_383, 2), (16_384, 4), (1_073_741_823, 4), (1_073_741_824, 8)] {
            let enc = encode_varint(v).unwrap();
            assert_eq!(enc.len(), len, "value {v}");
            assert_eq!(decode_varint(&enc).unwrap().value, v);
        }
    }
}
