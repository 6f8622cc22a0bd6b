use super::varint::decode_varint;
use super::WireError;

/// Forward-only cursor over a byte slice that tracks its absolute offset.
#[derive(Debug, Clone)]
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0, base: 0 }
    }

    /// A reader whose reported offsets start at `base` instead of zero.
    pub fn with_base(buf: &'a [u8], base: usize) -> Self {
        Reader { buf, pos: 0, base }
    }

    /// Absolute offset of the next unread byte.
    pub fn offset(&self) -> usize {
        self.base + self.pos
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn is_empty(&self) -> bool {
        self.remaining() == 0
    }

    pub fn rest(&self) -> &'a [u8] {
        &self.buf[self.pos..]
    }

    fn need(&self, n: usize) -> Result<(), WireError> {
        if self.remaining() < n {
            Err(WireError::Truncated { offset: self.offset(), needed: n - self.remaining() })
        } else {
            Ok(())
        }
    }

    pub fn peek_u8(&self) -> Result<u8, WireError> {
        self.need(1)?;
        Ok(self.buf[self.pos])
    }

    pub fn u8(&mut self) -> Result<u8, WireError> {
        let b = self.peek_u8()?;
        self.pos += 1;
        Ok(b)
    }

    pub fn uint(&mut self, len: usize) -> Result<u64, WireError> {
        debug_assert!(len <= 8);
        let bytes = self.bytes(len)?;
        Ok(bytes.iter().fold(0u64, |acc, b| (acc << 8) | u64::from(*b)))
    }

    pub fn u32(&mut self) -> Result<u32, WireError> {
        self.uint(4).map(|v| v as u32)
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        self.need(n)?;
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn varint(&mut self) -> Result<u64, WireError> {
        let decoded = decode_varint(&self.buf[self.pos..]).map_err(|e| match e {
            WireError::Truncated { needed, .. } => {
                WireError::Truncated { offset: self.offset(), needed }
            }
            other => other,
        })?;
        self.pos += decoded.len;
        Ok(decoded.value)
    }

    /// A varint used as a length; rejects values that cannot index memory.
    pub fn varint_len(&mut self) -> Result<usize, WireError> {
        let at = self.offset();
        let v = self.varint()?;
        usize::try_from(v).map_err(|_| WireError::Invalid { offset: at, what: "length" })
    }
}
