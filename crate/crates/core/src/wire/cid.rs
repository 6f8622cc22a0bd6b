use std::fmt;

use super::WireError;

pub const MAX_CID_LEN: usize = 20;

/// A connection ID of 0 to 20 bytes.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct ConnectionId {
    len: u8,
    bytes: [u8; MAX_CID_LEN],
}

impl ConnectionId {
    pub fn new(bytes: &[u8]) -> Result<Self, WireError> {
        if bytes.len() > MAX_CID_LEN {
            return Err(WireError::CidTooLong(bytes.len()));
        }
        let mut buf = [0u8; MAX_CID_LEN];
        buf[..bytes.len()].copy_from_slice(bytes);
        Ok(ConnectionId { len: bytes.len() as u8, bytes: buf })
    }

    pub fn empty() -> Self {
        ConnectionId::default()
    }

    pub fn len(&self) -> usize {
        usize::from(self.len)
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes[..self.len()]
    }
}

impl fmt::Debug for ConnectionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ConnectionId({self})")
    }
}

impl fmt::Display for ConnectionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.as_bytes() {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl TryFrom<&[u8]> for ConnectionId {
    type Error = WireError;
    fn try_from(value: &[u8]) -> Result<Self, Self::Error> {
        ConnectionId::new(value)
    }
}
