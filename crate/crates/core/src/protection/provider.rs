use thiserror::Error;

use super::{EncryptionLevel, LevelKeys};
use crate::wire::{TransportParameters, WireError};

/// Handshake bytes to send in CRYPTO frames at the given level.
pub type CryptoOutput = (EncryptionLevel, Vec<u8>);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HandshakeError {
    #[error("unexpected handshake message {msg_type} at {level}")]
    UnexpectedMessage { level: EncryptionLevel, msg_type: u8 },
    #[error("malformed handshake message: {0}")]
    Malformed(&'static str),
    #[error("peer authentication failed")]
    VerificationFailed,
    #[error("handshake not started")]
    NotStarted,
}

/// Drives the cryptographic handshake for one connection.
///
/// The connection feeds received CRYPTO stream bytes in order per level and
/// sends whatever comes back. Newly available keys are collected with
/// [`exported_secrets`](Self::exported_secrets).
pub trait HandshakeProvider: Send {
    /// Encoded local transport parameters; set before [`initiate`](Self::initiate).
    fn set_transport_parameters(&mut self, encoded: Vec<u8>);

    fn initiate(&mut self) -> Result<Vec<CryptoOutput>, HandshakeError>;

    fn consume(
        &mut self,
        level: EncryptionLevel,
        data: &[u8],
    ) -> Result<Vec<CryptoOutput>, HandshakeError>;

    /// Keys that became available since the last call.
    fn exported_secrets(&mut self) -> Vec<LevelKeys>;

    /// Raw transport parameters extension sent by the peer.
    fn peer_transport_parameters_raw(&self) -> Option<&[u8]>;

    fn peer_transport_parameters(&self) -> Option<Result<TransportParameters, WireError>> {
        self.peer_transport_parameters_raw().map(TransportParameters::decode)
    }

    fn resumption_ticket(&self) -> Option<Vec<u8>>;

    fn is_complete(&self) -> bool;

    /// `None` until the server has answered an early-data attempt.
    fn early_data_accepted(&self) -> Option<bool>;
}
