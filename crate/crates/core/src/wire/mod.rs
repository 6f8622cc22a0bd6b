//! Lossless parsing and serialization of QUIC version 1 wire elements.
//!
//! Everything here is a pure function over byte slices. Parsers report the
//! byte offset of the first problem they hit so that conformance reports can
//! point at the exact offending byte.

mod cid;
mod frame;
mod header;
mod reader;
mod transport_params;
mod varint;

pub use cid::{ConnectionId, MAX_CID_LEN};
pub use frame::{
    parse_frames, serialize_frames, serialize_frames_unchecked, AckRange, EcnCounts, Frame, FrameAnomaly,
    FrameType,
};
pub use header::{
    parse_header, parse_protected_header, LongHeader, LongPacketType, PacketHeader, ParseContext,
    ProtectedHeader, RetryHeader, ShortHeader, VersionNegotiation, QUIC_V1,
};
pub use reader::Reader;
pub use transport_params::{TransportParameter, TransportParameterId, TransportParameters};
pub use varint::{decode_varint, encode_varint, put_varint, varint_len, DecodedVarInt, VarInt};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("value {0} exceeds the varint range (2^62-1)")]
    VarIntRange(u64),
    #[error("truncated input at offset {offset}: {needed} more byte(s) required")]
    Truncated { offset: usize, needed: usize },
    #[error("invalid {what} at offset {offset}")]
    Invalid { offset: usize, what: &'static str },
    #[error("unknown frame type 0x{frame_type:02x} at offset {offset}")]
    UnknownFrame { frame_type: u64, offset: usize },
    #[error("connection ID of {0} bytes exceeds 20")]
    CidTooLong(usize),
    #[error("duplicate transport parameter 0x{0:x}")]
    DuplicateParameter(u64),
    #[error("refusing to serialize an empty STREAM frame without FIN")]
    EmptyStreamFrame,
    #[error("a packet payload must carry at least one frame")]
    EmptyPayload,
    #[error("packet number {pn} does not fit in {len} byte(s)")]
    PacketNumberTooLarge { pn: u64, len: u8 },
}

impl WireError {
    /// Byte offset the error refers to, when it has one.
    pub fn offset(&self) -> Option<usize> {
        match self {
            WireError::Truncated { offset, .. }
            | WireError::Invalid { offset, .. }
            | WireError::UnknownFrame { offset, .. } => Some(*offset),
            _ => None,
        }
    }
}

#[cfg(test)]
pub(crate) mod proptests;
