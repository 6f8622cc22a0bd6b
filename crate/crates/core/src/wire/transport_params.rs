use super::reader::Reader;
use super::varint::{decode_varint, encode_varint, put_varint};
use super::{ConnectionId, WireError};

/// Transport parameters defined for QUIC version 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransportParameterId {
    OriginalDestinationConnectionId,
    MaxIdleTimeout,
    StatelessResetToken,
    MaxUdpPayloadSize,
    InitialMaxData,
    InitialMaxStreamDataBidiLocal,
    InitialMaxStreamDataBidiRemote,
    InitialMaxStreamDataUni,
    InitialMaxStreamsBidi,
    InitialMaxStreamsUni,
    AckDelayExponent,
    MaxAckDelay,
    DisableActiveMigration,
    PreferredAddress,
    ActiveConnectionIdLimit,
    InitialSourceConnectionId,
    RetrySourceConnectionId,
}

impl TransportParameterId {
    const ALL: [TransportParameterId; 17] = [
        Self::OriginalDestinationConnectionId,
        Self::MaxIdleTimeout,
        Self::StatelessResetToken,
        Self::MaxUdpPayloadSize,
        Self::InitialMaxData,
        Self::InitialMaxStreamDataBidiLocal,
        Self::InitialMaxStreamDataBidiRemote,
        Self::InitialMaxStreamDataUni,
        Self::InitialMaxStreamsBidi,
        Self::InitialMaxStreamsUni,
        Self::AckDelayExponent,
        Self::MaxAckDelay,
        Self::DisableActiveMigration,
        Self::PreferredAddress,
        Self::ActiveConnectionIdLimit,
        Self::InitialSourceConnectionId,
        Self::RetrySourceConnectionId,
    ];

    pub fn code(self) -> u64 {
        Self::ALL.iter().position(|p| *p == self).unwrap() as u64
    }

    pub fn from_code(code: u64) -> Option<Self> {
        usize::try_from(code).ok().and_then(|i| Self::ALL.get(i).copied())
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::OriginalDestinationConnectionId => "original_destination_connection_id",
            Self::MaxIdleTimeout => "max_idle_timeout",
            Self::StatelessResetToken => "stateless_reset_token",
            Self::MaxUdpPayloadSize => "max_udp_payload_size",
            Self::InitialMaxData => "initial_max_data",
            Self::InitialMaxStreamDataBidiLocal => "initial_max_stream_data_bidi_local",
            Self::InitialMaxStreamDataBidiRemote => "initial_max_stream_data_bidi_remote",
            Self::InitialMaxStreamDataUni => "initial_max_stream_data_uni",
            Self::InitialMaxStreamsBidi => "initial_max_streams_bidi",
            Self::InitialMaxStreamsUni => "initial_max_streams_uni",
            Self::AckDelayExponent => "ack_delay_exponent",
            Self::MaxAckDelay => "max_ack_delay",
            Self::DisableActiveMigration => "disable_active_migration",
            Self::PreferredAddress => "preferred_address",
            Self::ActiveConnectionIdLimit => "active_connection_id_limit",
            Self::InitialSourceConnectionId => "initial_source_connection_id",
            Self::RetrySourceConnectionId => "retry_source_connection_id",
        }
    }

    /// Whether the value is a single varint.
    pub fn is_integer(self) -> bool {
        !matches!(
            self,
            Self::OriginalDestinationConnectionId
                | Self::StatelessResetToken
                | Self::DisableActiveMigration
                | Self::PreferredAddress
                | Self::InitialSourceConnectionId
                | Self::RetrySourceConnectionId
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportParameter {
    pub id: u64,
    pub value: Vec<u8>,
}

/// An ordered list of transport parameters. Values are stored as raw bytes,
/// so unknown parameters survive a decode/encode cycle unchanged.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TransportParameters {
    entries: Vec<TransportParameter>,
}

macro_rules! integer_accessors {
    ($($get:ident, $set:ident => $id:ident;)*) => {
        $(
            pub fn $get(&self) -> Option<u64> {
                self.get_varint(TransportParameterId::$id.code())
            }

            pub fn $set(&mut self, value: u64) -> &mut Self {
                self.set_varint(TransportParameterId::$id.code(), value)
            }
        )*
    };
}

impl TransportParameters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[TransportParameter] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, id: u64) -> Option<&[u8]> {
        self.entries.iter().find(|e| e.id == id).map(|e| e.value.as_slice())
    }

    /// Sets a raw value, replacing an existing entry in place.
    pub fn set(&mut self, id: u64, value: impl Into<Vec<u8>>) -> &mut Self {
        let value = value.into();
        match self.entries.iter_mut().find(|e| e.id == id) {
            Some(e) => e.value = value,
            None => self.entries.push(TransportParameter { id, value }),
        }
        self
    }

    /// Appends an entry even if the id is already present. Produces an
    /// encoding that a conformant decoder must reject.
    pub fn push_duplicate(&mut self, id: u64, value: impl Into<Vec<u8>>) -> &mut Self {
        self.entries.push(TransportParameter { id, value: value.into() });
        self
    }

    /// Reads an integer parameter. Returns `None` when absent or when the
    /// value is not exactly one varint.
    pub fn get_varint(&self, id: u64) -> Option<u64> {
        let raw = self.get(id)?;
        let d = decode_varint(raw).ok()?;
        (d.len == raw.len()).then_some(d.value)
    }

    pub fn set_varint(&mut self, id: u64, value: u64) -> &mut Self {
        let encoded = encode_varint(value).expect("transport parameter value out of varint range");
        self.set(id, encoded)
    }

    integer_accessors! {
        max_idle_timeout, set_max_idle_timeout => MaxIdleTimeout;
        initial_max_data, set_initial_max_data => InitialMaxData;
        initial_max_stream_data_bidi_local, set_initial_max_stream_data_bidi_local => InitialMaxStreamDataBidiLocal;
        initial_max_stream_data_bidi_remote, set_initial_max_stream_data_bidi_remote => InitialMaxStreamDataBidiRemote;
        initial_max_stream_data_uni, set_initial_max_stream_data_uni => InitialMaxStreamDataUni;
        initial_max_streams_bidi, set_initial_max_streams_bidi => InitialMaxStreamsBidi;
        initial_max_streams_uni, set_initial_max_streams_uni => InitialMaxStreamsUni;
    }

    pub fn original_dcid(&self) -> Option<ConnectionId> {
        self.get(TransportParameterId::OriginalDestinationConnectionId.code())
            .and_then(|b| ConnectionId::new(b).ok())
    }

    pub fn set_original_dcid(&mut self, cid: &ConnectionId) -> &mut Self {
        self.set(TransportParameterId::OriginalDestinationConnectionId.code(), cid.as_bytes())
    }

    pub fn initial_scid(&self) -> Option<ConnectionId> {
        self.get(TransportParameterId::InitialSourceConnectionId.code())
            .and_then(|b| ConnectionId::new(b).ok())
    }

    pub fn set_initial_scid(&mut self, cid: &ConnectionId) -> &mut Self {
        self.set(TransportParameterId::InitialSourceConnectionId.code(), cid.as_bytes())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for e in &self.entries {
            put_varint(&mut out, e.id).expect("parameter id out of range");
            put_varint(&mut out, e.value.len() as u64).expect("parameter too long");
            out.extend_from_slice(&e.value);
        }
        out
    }

    /// Decodes a parameter list, rejecting duplicate ids.
    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let (params, duplicates) = Self::decode_lenient(bytes)?;
        match duplicates.first() {
            Some(id) => Err(WireError::DuplicateParameter(*id)),
            None => Ok(params),
        }
    }

    /// Decodes a parameter list keeping the first occurrence of each id and
    /// reporting the ids that were repeated.
    pub fn decode_lenient(bytes: &[u8]) -> Result<(Self, Vec<u64>), WireError> {
        let mut r = Reader::new(bytes);
        let mut params = TransportParameters::new();
        let mut duplicates = Vec::new();
        while !r.is_empty() {
            let id = r.varint()?;
            let len = r.varint_len()?;
            let value = r.bytes(len)?;
            if params.get(id).is_some() {
                if !duplicates.contains(&id) {
                    duplicates.push(id);
                }
            } else {
                params.entries.push(TransportParameter { id, value: value.to_vec() });
            }
        }
        Ok((params, duplicates))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_data_limit_round_trip() {
        let mut tp = TransportParameters::new();
        tp.set_initial_max_stream_data_bidi_local(80);
        let bytes = tp.encode();
        assert_eq!(bytes, [0x05, 0x02, 0x40, 0x50]);
        let back = TransportParameters::decode(&bytes).unwrap();
        assert_eq!(back.initial_max_stream_data_bidi_local(), Some(80));
        assert_eq!(back, tp);
    }

    #[test]
    fn empty_list() {
        assert!(TransportParameters::new().encode().is_empty());
        assert!(TransportParameters::decode(&[]).unwrap().is_empty());
    }

    #[test]
    fn unknown_parameter_preserved() {
        // id 0x7f39 needs the 4-byte varint form; value is the raw bytes 0xdead
        let bytes = [0x80, 0x00, 0x7f, 0x39, 0x02, 0xde, 0xad];
        let tp = TransportParameters::decode(&bytes).unwrap();
        assert_eq!(tp.get(0x7f39), Some(&[0xde, 0xad][..]));
        assert_eq!(tp.get_varint(0x7f39), None);
        assert_eq!(tp.encode(), bytes);
    }

    #[test]
    fn duplicates_rejected_or_reported() {
        let mut tp = TransportParameters::new();
        tp.set_initial_max_data(1000).push_duplicate(0x04, encode_varint(2000).unwrap());
        let bytes = tp.encode();
        assert_eq!(TransportParameters::decode(&bytes), Err(WireError::DuplicateParameter(4)));
        let (lenient, dups) = TransportParameters::decode_lenient(&bytes).unwrap();
        assert_eq!(dups, vec![4]);
        assert_eq!(lenient.initial_max_data(), Some(1000));
    }

    #[test]
    fn ids_and_names() {
        assert_eq!(TransportParameterId::InitialMaxStreamDataBidiLocal.code(), 5);
        assert_eq!(TransportParameterId::from_code(0x0f), Some(TransportParameterId::InitialSourceConnectionId));
        assert_eq!(TransportParameterId::from_code(0x11), None);
        assert_eq!(TransportParameterId::InitialMaxData.name(), "initial_max_data");
    }
}
