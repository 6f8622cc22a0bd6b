use super::crypto::{hkdf_expand_label, hkdf_extract};
use super::{Direction, EncryptionLevel, KeyMaterial, ProtectionError};
use crate::wire::{ConnectionId, QUIC_V1};

pub const INITIAL_SALT_V1: [u8; 20] = [
    0x38, 0x76, 0x2c, 0xf7, 0xf5, 0x59, 0x34, 0xb3, 0x4d, 0x17, 0x9a, 0xe6, 0xa4, 0xc8, 0x0c, 0xad,
    0xcc, 0xbb, 0x7f, 0x0a,
];

/// Derives the client and server Initial keys from the client's first
/// destination connection ID.
pub fn derive_initial_keys(
    dcid: &ConnectionId,
    version: u32,
) -> Result<(KeyMaterial, KeyMaterial), ProtectionError> {
    if version != QUIC_V1 {
        return Err(ProtectionError::UnsupportedVersion(version));
    }
    if dcid.is_empty() {
        return Err(ProtectionError::EmptyConnectionId);
    }
    let initial_secret = hkdf_extract(&INITIAL_SALT_V1, dcid.as_bytes());
    let client_secret = hkdf_expand_label(&initial_secret, b"client in", &[], 32);
    let server_secret = hkdf_expand_label(&initial_secret, b"server in", &[], 32);
    Ok((
        KeyMaterial::from_secret(EncryptionLevel::Initial, Direction::Client, &client_secret),
        KeyMaterial::from_secret(EncryptionLevel::Initial, Direction::Server, &server_secret),
    ))
}
