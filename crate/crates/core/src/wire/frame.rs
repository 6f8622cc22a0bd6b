use std::fmt;

use super::reader::Reader;
use super::varint::{put_varint, varint_len};
use super::{ConnectionId, WireError};

/// One (gap, length) pair following the first ACK range, exactly as encoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AckRange {
    pub gap: u64,
    pub length: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EcnCounts {
    pub ect0: u64,
    pub ect1: u64,
    pub ce: u64,
}

/// A QUIC version 1 frame. Field values are kept exactly as they appear on
/// the wire so that malformed-but-parseable frames can be reported.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Frame {
    /// A run of consecutive PADDING bytes.
    Padding(usize),
    Ping,
    Ack {
        largest_acked: u64,
        ack_delay: u64,
        first_range: u64,
        ranges: Vec<AckRange>,
        ecn: Option<EcnCounts>,
    },
    ResetStream { stream_id: u64, error_code: u64, final_size: u64 },
    StopSending { stream_id: u64, error_code: u64 },
    Crypto { offset: u64, data: Vec<u8> },
    NewToken { token: Vec<u8> },
    Stream { stream_id: u64, offset: u64, data: Vec<u8>, fin: bool },
    MaxData { max: u64 },
    MaxStreamData { stream_id: u64, max: u64 },
    MaxStreams { bidi: bool, max: u64 },
    DataBlocked { limit: u64 },
    StreamDataBlocked { stream_id: u64, limit: u64 },
    StreamsBlocked { bidi: bool, limit: u64 },
    NewConnectionId { seq: u64, retire_prior_to: u64, cid: ConnectionId, reset_token: [u8; 16] },
    RetireConnectionId { seq: u64 },
    PathChallenge { data: [u8; 8] },
    PathResponse { data: [u8; 8] },
    ConnectionClose { error_code: u64, frame_type: u64, reason: Vec<u8> },
    ApplicationClose { error_code: u64, reason: Vec<u8> },
    HandshakeDone,
}

/// Frame kinds, independent of their contents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FrameType {
    Padding,
    Ping,
    Ack,
    ResetStream,
    StopSending,
    Crypto,
    NewToken,
    Stream,
    MaxData,
    MaxStreamData,
    MaxStreams,
    DataBlocked,
    StreamDataBlocked,
    StreamsBlocked,
    NewConnectionId,
    RetireConnectionId,
    PathChallenge,
    PathResponse,
    ConnectionClose,
    HandshakeDone,
}

impl fmt::Display for FrameType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            FrameType::Padding => "PADDING",
            FrameType::Ping => "PING",
            FrameType::Ack => "ACK",
            FrameType::ResetStream => "RESET_STREAM",
            FrameType::StopSending => "STOP_SENDING",
            FrameType::Crypto => "CRYPTO",
            FrameType::NewToken => "NEW_TOKEN",
            FrameType::Stream => "STREAM",
            FrameType::MaxData => "MAX_DATA",
            FrameType::MaxStreamData => "MAX_STREAM_DATA",
            FrameType::MaxStreams => "MAX_STREAMS",
            FrameType::DataBlocked => "DATA_BLOCKED",
            FrameType::StreamDataBlocked => "STREAM_DATA_BLOCKED",
            FrameType::StreamsBlocked => "STREAMS_BLOCKED",
            FrameType::NewConnectionId => "NEW_CONNECTION_ID",
            FrameType::RetireConnectionId => "RETIRE_CONNECTION_ID",
            FrameType::PathChallenge => "PATH_CHALLENGE",
            FrameType::PathResponse => "PATH_RESPONSE",
            FrameType::ConnectionClose => "CONNECTION_CLOSE",
            FrameType::HandshakeDone => "HANDSHAKE_DONE",
        };
        f.write_str(name)
    }
}

/// Misbehavior visible in a frame that nonetheless parsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameAnomaly {
    /// A STREAM frame without data and without FIN.
    EmptyStreamFrame,
    /// ACK ranges that run below packet number zero.
    AckRangeUnderflow,
}

impl Frame {
    pub fn frame_type(&self) -> FrameType {
        match self {
            Frame::Padding(_) => FrameType::Padding,
            Frame::Ping => FrameType::Ping,
            Frame::Ack { .. } => FrameType::Ack,
            Frame::ResetStream { .. } => FrameType::ResetStream,
            Frame::StopSending { .. } => FrameType::StopSending,
            Frame::Crypto { .. } => FrameType::Crypto,
            Frame::NewToken { .. } => FrameType::NewToken,
            Frame::Stream { .. } => FrameType::Stream,
            Frame::MaxData { .. } => FrameType::MaxData,
            Frame::MaxStreamData { .. } => FrameType::MaxStreamData,
            Frame::MaxStreams { .. } => FrameType::MaxStreams,
            Frame::DataBlocked { .. } => FrameType::DataBlocked,
            Frame::StreamDataBlocked { .. } => FrameType::StreamDataBlocked,
            Frame::StreamsBlocked { .. } => FrameType::StreamsBlocked,
            Frame::NewConnectionId { .. } => FrameType::NewConnectionId,
            Frame::RetireConnectionId { .. } => FrameType::RetireConnectionId,
            Frame::PathChallenge { .. } => FrameType::PathChallenge,
            Frame::PathResponse { .. } => FrameType::PathResponse,
            Frame::ConnectionClose { .. } | Frame::ApplicationClose { .. } => {
                FrameType::ConnectionClose
            }
            Frame::HandshakeDone => FrameType::HandshakeDone,
        }
    }

    /// Whether receiving this frame obliges the peer to acknowledge.
    pub fn is_ack_eliciting(&self) -> bool {
        !matches!(
            self,
            Frame::Padding(_)
                | Frame::Ack { .. }
                | Frame::ConnectionClose { .. }
                | Frame::ApplicationClose { .. }
        )
    }

    /// Whether the frame's information must be resent if its packet is lost.
    pub fn is_retransmittable(&self) -> bool {
        !matches!(
            self,
            Frame::Padding(_)
                | Frame::Ack { .. }
                | Frame::Ping
                | Frame::PathChallenge { .. }
                | Frame::PathResponse { .. }
        )
    }

    pub fn anomaly(&self) -> Option<FrameAnomaly> {
        match self {
            Frame::Stream { data, fin: false, .. } if data.is_empty() => {
                Some(FrameAnomaly::EmptyStreamFrame)
            }
            Frame::Ack { .. } if self.ack_packet_ranges().is_err() => {
                Some(FrameAnomaly::AckRangeUnderflow)
            }
            _ => None,
        }
    }

    /// Builds an ACK frame from inclusive `(low, high)` packet-number ranges
    /// sorted in strictly descending, non-adjacent order.
    pub fn ack_from_ranges(ranges: &[(u64, u64)], ack_delay: u64) -> Option<Frame> {
        let (&(first_low, largest), rest) = ranges.split_first()?;
        let mut prev_low = first_low;
        let mut encoded = Vec::with_capacity(rest.len());
        for &(low, high) in rest {
            // gap counts the unacknowledged packets between ranges, minus one
            let gap = prev_low.checked_sub(high)?.checked_sub(2)?;
            encoded.push(AckRange { gap, length: high.checked_sub(low)? });
            prev_low = low;
        }
        Some(Frame::Ack {
            largest_acked: largest,
            ack_delay,
            first_range: largest.checked_sub(first_low)?,
            ranges: encoded,
            ecn: None,
        })
    }

    /// Decodes the acknowledged packet numbers as inclusive `(low, high)`
    /// ranges, strictly descending and non-overlapping. Fails when the
    /// encoded gaps run below zero.
    pub fn ack_packet_ranges(&self) -> Result<Vec<(u64, u64)>, FrameAnomaly> {
        let Frame::Ack { largest_acked, first_range, ranges, .. } = self else {
            return Ok(Vec::new());
        };
        let underflow = FrameAnomaly::AckRangeUnderflow;
        let mut low = largest_acked.checked_sub(*first_range).ok_or(underflow)?;
        let mut out = Vec::with_capacity(ranges.len() + 1);
        out.push((low, *largest_acked));
        for r in ranges {
            let high = low.checked_sub(r.gap).and_then(|v| v.checked_sub(2)).ok_or(underflow)?;
            low = high.checked_sub(r.length).ok_or(underflow)?;
            out.push((low, high));
        }
        Ok(out)
    }

    pub fn encode(&self, out: &mut Vec<u8>) -> Result<(), WireError> {
        match self {
            Frame::Padding(n) => out.resize(out.len() + n, 0),
            Frame::Ping => out.push(0x01),
            Frame::Ack { largest_acked, ack_delay, first_range, ranges, ecn } => {
                out.push(if ecn.is_some() { 0x03 } else { 0x02 });
                put_varint(out, *largest_acked)?;
                put_varint(out, *ack_delay)?;
                put_varint(out, ranges.len() as u64)?;
                put_varint(out, *first_range)?;
                for r in ranges {
                    put_varint(out, r.gap)?;
                    put_varint(out, r.length)?;
                }
                if let Some(ecn) = ecn {
                    put_varint(out, ecn.ect0)?;
                    put_varint(out, ecn.ect1)?;
                    put_varint(out, ecn.ce)?;
                }
            }
            Frame::ResetStream { stream_id, error_code, final_size } => {
                out.push(0x04);
                put_varint(out, *stream_id)?;
                put_varint(out, *error_code)?;
                put_varint(out, *final_size)?;
            }
            Frame::StopSending { stream_id, error_code } => {
                out.push(0x05);
                put_varint(out, *stream_id)?;
                put_varint(out, *error_code)?;
            }
            Frame::Crypto { offset, data } => {
                out.push(0x06);
                put_varint(out, *offset)?;
                put_varint(out, data.len() as u64)?;
                out.extend_from_slice(data);
            }
            Frame::NewToken { token } => {
                out.push(0x07);
                put_varint(out, token.len() as u64)?;
                out.extend_from_slice(token);
            }
            Frame::Stream { stream_id, offset, data, fin } => {
                // LEN is always set so frames can follow; OFF only when needed.
                let mut ty = 0x08 | 0x02;
                if *offset > 0 {
                    ty |= 0x04;
                }
                if *fin {
                    ty |= 0x01;
                }
                out.push(ty);
                put_varint(out, *stream_id)?;
                if *offset > 0 {
                    put_varint(out, *offset)?;
                }
                put_varint(out, data.len() as u64)?;
                out.extend_from_slice(data);
            }
            Frame::MaxData { max } => {
                out.push(0x10);
                put_varint(out, *max)?;
            }
            Frame::MaxStreamData { stream_id, max } => {
                out.push(0x11);
                put_varint(out, *stream_id)?;
                put_varint(out, *max)?;
            }
            Frame::MaxStreams { bidi, max } => {
                out.push(if *bidi { 0x12 } else { 0x13 });
                put_varint(out, *max)?;
            }
            Frame::DataBlocked { limit } => {
                out.push(0x14);
                put_varint(out, *limit)?;
            }
            Frame::StreamDataBlocked { stream_id, limit } => {
                out.push(0x15);
                put_varint(out, *stream_id)?;
                put_varint(out, *limit)?;
            }
            Frame::StreamsBlocked { bidi, limit } => {
                out.push(if *bidi { 0x16 } else { 0x17 });
                put_varint(out, *limit)?;
            }
            Frame::NewConnectionId { seq, retire_prior_to, cid, reset_token } => {
                out.push(0x18);
                put_varint(out, *seq)?;
                put_varint(out, *retire_prior_to)?;
                out.push(cid.len() as u8);
                out.extend_from_slice(cid.as_bytes());
                out.extend_from_slice(reset_token);
            }
            Frame::RetireConnectionId { seq } => {
                out.push(0x19);
                put_varint(out, *seq)?;
            }
            Frame::PathChallenge { data } => {
                out.push(0x1a);
                out.extend_from_slice(data);
            }
            Frame::PathResponse { data } => {
                out.push(0x1b);
                out.extend_from_slice(data);
            }
            Frame::ConnectionClose { error_code, frame_type, reason } => {
                out.push(0x1c);
                put_varint(out, *error_code)?;
                put_varint(out, *frame_type)?;
                put_varint(out, reason.len() as u64)?;
                out.extend_from_slice(reason);
            }
            Frame::ApplicationClose { error_code, reason } => {
                out.push(0x1d);
                put_varint(out, *error_code)?;
                put_varint(out, reason.len() as u64)?;
                out.extend_from_slice(reason);
            }
            Frame::HandshakeDone => out.push(0x1e),
        }
        Ok(())
    }

    /// Encoded size in bytes. Assumes every field is within varint range.
    pub fn encoded_len(&self) -> usize {
        let v = varint_len;
        match self {
            Frame::Padding(n) => *n,
            Frame::Ping | Frame::HandshakeDone => 1,
            Frame::Ack { largest_acked, ack_delay, first_range, ranges, ecn } => {
                1 + v(*largest_acked)
                    + v(*ack_delay)
                    + v(ranges.len() as u64)
                    + v(*first_range)
                    + ranges.iter().map(|r| v(r.gap) + v(r.length)).sum::<usize>()
                    + ecn.map_or(0, |e| v(e.ect0) + v(e.ect1) + v(e.ce))
            }
            Frame::ResetStream { stream_id, error_code, final_size } => {
                1 + v(*stream_id) + v(*error_code) + v(*final_size)
            }
            Frame::StopSending { stream_id, error_code } => 1 + v(*stream_id) + v(*error_code),
            Frame::Crypto { offset, data } => {
                1 + v(*offset) + v(data.len() as u64) + data.len()
            }
            Frame::NewToken { token } => 1 + v(token.len() as u64) + token.len(),
            Frame::Stream { stream_id, offset, data, .. } => {
                1 + v(*stream_id)
                    + if *offset > 0 { v(*offset) } else { 0 }
                    + v(data.len() as u64)
                    + data.len()
            }
            Frame::MaxData { max } => 1 + v(*max),
            Frame::MaxStreamData { stream_id, max } => 1 + v(*stream_id) + v(*max),
            Frame::MaxStreams { max, .. } => 1 + v(*max),
            Frame::DataBlocked { limit } => 1 + v(*limit),
            Frame::StreamDataBlocked { stream_id, limit } => 1 + v(*stream_id) + v(*limit),
            Frame::StreamsBlocked { limit, .. } => 1 + v(*limit),
            Frame::NewConnectionId { seq, retire_prior_to, cid, .. } => {
                1 + v(*seq) + v(*retire_prior_to) + 1 + cid.len() + 16
            }
            Frame::RetireConnectionId { seq } => 1 + v(*seq),
            Frame::PathChallenge { .. } | Frame::PathResponse { .. } => 9,
            Frame::ConnectionClose { error_code, frame_type, reason } => {
                1 + v(*error_code)
                    + v(*frame_type)
                    + v(reason.len() as u64)
                    + reason.len()
            }
            Frame::ApplicationClose { error_code, reason } => {
                1 + v(*error_code) + v(reason.len() as u64) + reason.len()
            }
        }
    }
}

/// Serializes a packet payload. Refuses an empty frame list and empty
/// STREAM frames without FIN.
pub fn serialize_frames(frames: &[Frame]) -> Result<Vec<u8>, WireError> {
    if frames.is_empty() {
        return Err(WireError::EmptyPayload);
    }
    if frames.iter().any(|f| f.anomaly() == Some(FrameAnomaly::EmptyStreamFrame)) {
        return Err(WireError::EmptyStreamFrame);
    }
    serialize_frames_unchecked(frames)
}

/// Serializes frames without the conformance checks of [`serialize_frames`].
/// Only the fault-injection server should need this.
pub fn serialize_frames_unchecked(frames: &[Frame]) -> Result<Vec<u8>, WireError> {
    let mut out = Vec::with_capacity(frames.iter().map(Frame::encoded_len).sum());
    for frame in frames {
        frame.encode(&mut out)?;
    }
    Ok(out)
}

/// Parses a full decrypted payload. Consecutive PADDING bytes are coalesced
/// into a single [`Frame::Padding`]. Anomalous frames are returned as parsed;
/// see [`Frame::anomaly`].
pub fn parse_frames(payload: &[u8]) -> Result<Vec<Frame>, WireError> {
    let mut r = Reader::new(payload);
    let mut frames = Vec::new();
    while !r.is_empty() {
        frames.push(parse_one(&mut r)?);
    }
    Ok(frames)
}

fn array<const N: usize>(r: &mut Reader<'_>) -> Result<[u8; N], WireError> {
    let mut out = [0u8; N];
    out.copy_from_slice(r.bytes(N)?);
    Ok(out)
}

fn parse_one(r: &mut Reader<'_>) -> Result<Frame, WireError> {
    let start = r.offset();
    let ty = r.varint()?;
    let frame = match ty {
        0x00 => {
            let mut n = 1;
            while r.peek_u8().ok() == Some(0) {
                r.u8()?;
                n += 1;
            }
            Frame::Padding(n)
        }
        0x01 => Frame::Ping,
        0x02 | 0x03 => {
            let largest_acked = r.varint()?;
            let ack_delay = r.varint()?;
            let count = r.varint()?;
            let first_range = r.varint()?;
            // Each range needs at least two bytes; bound the allocation by what is left.
            let mut ranges = Vec::with_capacity((count as usize).min(r.remaining() / 2));
            for _ in 0..count {
                ranges.push(AckRange { gap: r.varint()?, length: r.varint()? });
            }
            let ecn = if ty == 0x03 {
                Some(EcnCounts { ect0: r.varint()?, ect1: r.varint()?, ce: r.varint()? })
            } else {
                None
            };
            Frame::Ack { largest_acked, ack_delay, first_range, ranges, ecn }
        }
        0x04 => Frame::ResetStream {
            stream_id: r.varint()?,
            error_code: r.varint()?,
            final_size: r.varint()?,
        },
        0x05 => Frame::StopSending { stream_id: r.varint()?, error_code: r.varint()? },
        0x06 => {
            let offset = r.varint()?;
            let len = r.varint_len()?;
            Frame::Crypto { offset, data: r.bytes(len)?.to_vec() }
        }
        0x07 => {
            let len = r.varint_len()?;
            Frame::NewToken { token: r.bytes(len)?.to_vec() }
        }
        0x08..=0x0f => {
            let stream_id = r.varint()?;
            let offset = if ty & 0x04 != 0 { r.varint()? } else { 0 };
            let data = if ty & 0x02 != 0 {
                let len = r.varint_len()?;
                r.bytes(len)?
            } else {
                r.bytes(r.remaining())?
            };
            Frame::Stream { stream_id, offset, data: data.to_vec(), fin: ty & 0x01 != 0 }
        }
        0x10 => Frame::MaxData { max: r.varint()? },
        0x11 => Frame::MaxStreamData { stream_id: r.varint()?, max: r.varint()? },
        0x12 | 0x13 => Frame::MaxStreams { bidi: ty == 0x12, max: r.varint()? },
        0x14 => Frame::DataBlocked { limit: r.varint()? },
        0x15 => Frame::StreamDataBlocked { stream_id: r.varint()?, limit: r.varint()? },
        0x16 | 0x17 => Frame::StreamsBlocked { bidi: ty == 0x16, limit: r.varint()? },
        0x18 => {
            let seq = r.varint()?;
            let retire_prior_to = r.varint()?;
            let at = r.offset();
            let len = usize::from(r.u8()?);
            if !(1..=20).contains(&len) {
                return Err(WireError::Invalid { offset: at, what: "connection ID length" });
            }
            let cid = ConnectionId::new(r.bytes(len)?)?;
            Frame::NewConnectionId { seq, retire_prior_to, cid, reset_token: array(r)? }
        }
        0x19 => Frame::RetireConnectionId { seq: r.varint()? },
        0x1a => Frame::PathChallenge { data: array(r)? },
        0x1b => Frame::PathResponse { data: array(r)? },
        0x1c => {
            let error_code = r.varint()?;
            let frame_type = r.varint()?;
            let len = r.varint_len()?;
            Frame::ConnectionClose { error_code, frame_type, reason: r.bytes(len)?.to_vec() }
        }
        0x1d => {
            let error_code = r.varint()?;
            let len = r.varint_len()?;
            Frame::ApplicationClose { error_code, reason: r.bytes(len)?.to_vec() }
        }
        0x1e => Frame::HandshakeDone,
        other => return Err(WireError::UnknownFrame { frame_type: other, offset: start }),
    };
    Ok(frame)
}
