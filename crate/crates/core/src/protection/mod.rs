//! Packet protection: the Initial key schedule, AEAD and header protection,
//! and the boundary behind which a handshake (TLS or a scripted stand-in)
//! produces the keys for the later encryption levels.

mod crypto;
mod initial;
mod null;
mod packet;
mod provider;

pub use crypto::{hkdf_expand_label, hkdf_extract, hmac_sha256, sha256};
pub use initial::{derive_initial_keys, INITIAL_SALT_V1};
pub use null::{NullConfig, NullHandshakeProvider, Role};
pub use packet::{
    decode_packet_number, packet_number_length, protect, unprotect, ProtectedPacket,
    UnprotectedPacket, AEAD_TAG_LEN,
};
pub use provider::{CryptoOutput, HandshakeError, HandshakeProvider};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wire::{LongPacketType, WireError};

/// Encryption levels in the order they become available during a handshake.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncryptionLevel {
    Initial,
    ZeroRtt,
    Handshake,
    OneRtt,
}

impl EncryptionLevel {
    pub const ALL: [EncryptionLevel; 4] =
        [Self::Initial, Self::ZeroRtt, Self::Handshake, Self::OneRtt];

    pub fn space(self) -> PacketNumberSpace {
        match self {
            Self::Initial => PacketNumberSpace::Initial,
            Self::Handshake => PacketNumberSpace::Handshake,
            Self::ZeroRtt | Self::OneRtt => PacketNumberSpace::Application,
        }
    }

    /// Long-header packet type carrying this level, `None` for 1-RTT.
    pub fn long_packet_type(self) -> Option<LongPacketType> {
        match self {
            Self::Initial => Some(LongPacketType::Initial),
            Self::ZeroRtt => Some(LongPacketType::ZeroRtt),
            Self::Handshake => Some(LongPacketType::Handshake),
            Self::OneRtt => None,
        }
    }

    pub fn from_long_packet_type(ty: LongPacketType) -> Option<Self> {
        match ty {
            LongPacketType::Initial => Some(Self::Initial),
            LongPacketType::ZeroRtt => Some(Self::ZeroRtt),
            LongPacketType::Handshake => Some(Self::Handshake),
            LongPacketType::Retry => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl std::fmt::Display for EncryptionLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Initial => "Initial",
            Self::ZeroRtt => "0-RTT",
            Self::Handshake => "Handshake",
            Self::OneRtt => "1-RTT",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PacketNumberSpace {
    Initial,
    Handshake,
    Application,
}

impl PacketNumberSpace {
    pub const ALL: [PacketNumberSpace; 3] = [Self::Initial, Self::Handshake, Self::Application];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Client,
    Server,
}

/// Keys protecting one direction of one encryption level.
#[derive(Clone, PartialEq, Eq)]
pub struct KeyMaterial {
    pub level: EncryptionLevel,
    pub direction: Direction,
    pub key: Vec<u8>,
    pub iv: Vec<u8>,
    pub header_protection_key: Vec<u8>,
}

impl std::fmt::Debug for KeyMaterial {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyMaterial")
            .field("level", &self.level)
            .field("direction", &self.direction)
            .finish_non_exhaustive()
    }
}

impl KeyMaterial {
    pub const KEY_LEN: usize = 16;
    pub const IV_LEN: usize = 12;
    pub const HP_LEN: usize = 16;

    /// Expands a traffic secret into packet protection keys for the default
    /// AEAD (AES-128-GCM).
    pub fn from_secret(level: EncryptionLevel, direction: Direction, secret: &[u8]) -> Self {
        KeyMaterial {
            level,
            direction,
            key: hkdf_expand_label(secret, b"quic key", &[], Self::KEY_LEN),
            iv: hkdf_expand_label(secret, b"quic iv", &[], Self::IV_LEN),
            header_protection_key: hkdf_expand_label(secret, b"quic hp", &[], Self::HP_LEN),
        }
    }
}

/// Both directions of one encryption level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelKeys {
    pub level: EncryptionLevel,
    pub client: KeyMaterial,
    pub server: KeyMaterial,
}

impl LevelKeys {
    /// Keys used to protect packets sent by `role`.
    pub fn sealing(&self, role: Role) -> &KeyMaterial {
        match role {
            Role::Client => &self.client,
            Role::Server => &self.server,
        }
    }

    /// Keys used to remove protection from packets received by `role`.
    pub fn opening(&self, role: Role) -> &KeyMaterial {
        match role {
            Role::Client => &self.server,
            Role::Server => &self.client,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtectionError {
    #[error("unsupported QUIC version 0x{0:08x}")]
    UnsupportedVersion(u32),
    #[error("destination connection ID must not be empty")]
    EmptyConnectionId,
    #[error("payload too short to sample for header protection")]
    PayloadTooShort,
    #[error("AEAD authentication failed")]
    Authentication,
    #[error("packet carries no protection")]
    NotProtected,
    #[error("invalid key material")]
    InvalidKey,
    #[error(transparent)]
    Wire(#[from] WireError),
}
