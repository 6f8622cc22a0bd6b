use std::collections::BTreeMap;

/// Receive-side reassembly: accepts segments at arbitrary offsets and
/// exposes the contiguous prefix. Bytes already held win over later
/// overlapping copies.
#[derive(Debug, Clone, Default)]
pub struct RecvBuffer {
    contiguous: Vec<u8>,
    pending: BTreeMap<u64, Vec<u8>>,
    read: usize,
}

impl RecvBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Offset one past the contiguous prefix.
    pub fn contiguous_end(&self) -> u64 {
        self.contiguous.len() as u64
    }

    /// Highest offset covered by any received segment.
    pub fn max_end(&self) -> u64 {
        self.pending
            .iter()
            .next_back()
            .map_or(0, |(&k, v)| k + v.len() as u64)
            .max(self.contiguous_end())
    }

    /// Stores `data` at `offset`; returns true if the contiguous prefix grew.
    pub fn insert(&mut self, offset: u64, data: &[u8]) -> bool {
        let end = offset + data.len() as u64;
        let before = self.contiguous_end();
        if end <= before {
            return false;
        }
        let mut pos = offset.max(before);
        while pos < end {
            if let Some((&k, v)) = self.pending.range(..=pos).next_back() {
                let covered = k + v.len() as u64;
                if covered > pos {
                    pos = covered;
                    continue;
                }
            }
            let next = self.pending.range(pos + 1..).next().map_or(end, |(&k, _)| k.min(end));
            let slice = &data[(pos - offset) as usize..(next - offset) as usize];
            self.pending.insert(pos, slice.to_vec());
            pos = next;
        }
        while let Some(segment) = self.pending.remove(&self.contiguous_end()) {
            self.contiguous.extend_from_slice(&segment);
        }
        self.contiguous_end() > before
    }

    /// Everything received in order so far.
    pub fn assembled(&self) -> &[u8] {
        &self.contiguous
    }

    /// Contiguous bytes not yet returned by a previous `read`.
    pub fn read(&mut self) -> Vec<u8> {
        let out = self.contiguous[self.read..].to_vec();
        self.read = self.contiguous.len();
        out
    }

    /// Missing ranges `[start, end)` below the highest received offset.
    pub fn gaps(&self) -> Vec<(u64, u64)> {
        let mut gaps = Vec::new();
        let mut cursor = self.contiguous_end();
        for (&k, v) in &self.pending {
            if k > cursor {
                gaps.push((cursor, k));
            }
            cursor = cursor.max(k + v.len() as u64);
        }
        gaps
    }
}

/// Per-stream state for one direction pair.
#[derive(Debug, Clone, Default)]
pub struct Stream {
    pub recv: RecvBuffer,
    pub fin_offset: Option<u64>,
    pub reset: Option<u64>,
    pub send_offset: u64,
    pub fin_sent: bool,
}

impl Stream {
    /// All data up to the peer's FIN has arrived.
    pub fn is_recv_complete(&self) -> bool {
        self.fin_offset.is_some_and(|fin| self.recv.contiguous_end() >= fin)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reorders_and_tracks_gaps() {
        let mut buf = RecvBuffer::new();
        assert!(!buf.insert(5, b"fgh"));
        assert_eq!(buf.gaps(), [(0, 5)]);
        assert!(buf.insert(0, b"abc"));
        assert_eq!(buf.gaps(), [(3, 5)]);
        assert!(buf.insert(2, b"cde"));
        assert_eq!(buf.assembled(), b"abcdefgh");
        assert!(buf.gaps().is_empty());
        assert_eq!(buf.read(), b"abcdefgh");
        assert!(buf.read().is_empty());
        assert!(!buf.insert(0, b"ab"));
        assert!(!buf.insert(8, b""));
        assert_eq!(buf.max_end(), 8);
    }

    #[test]
    fn first_copy_wins_on_overlap() {
        let mut buf = RecvBuffer::new();
        buf.insert(2, b"XY");
        buf.insert(0, b"abcd");
        assert_eq!(buf.assembled(), b"abXY");
    }

    proptest! {
        #[test]
        fn reassembles_any_segmentation(
            payload in proptest::collection::vec(any::<u8>(), 1..400),
            cuts in proptest::collection::vec((any::<prop::sample::Index>(), any::<prop::sample::Index>()), 1..40),
            order in any::<u64>(),
        ) {
            // Random (possibly overlapping, duplicated) segments plus a full
            // cover so that everything eventually arrives.
            let mut segments: Vec<(usize, usize)> = cuts
                .iter()
                .map(|(a, b)| {
                    let x = a.index(payload.len());
                    let y = b.index(payload.len() + 1);
                    (x.min(y), x.max(y))
                })
                .collect();
            let mut start = 0;
            for (i, (a, _)) in cuts.iter().enumerate() {
                let end = (start + 1 + a.index(50)).min(payload.len());
                segments.push((start, end));
                start = end;
                if start == payload.len() || i > 100 { break; }
            }
            if start < payload.len() {
                segments.push((start, payload.len()));
            }
            let mut rng = order;
            for i in (1..segments.len()).rev() {
                rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                segments.swap(i, (rng >> 33) as usize % (i + 1));
            }
            let mut buf = RecvBuffer::new();
            for (a, b) in segments {
                buf.insert(a as u64, &payload[a..b]);
            }
            prop_assert_eq!(buf.assembled(), payload.as_slice());
            prop_assert!(buf.gaps().is_empty());
        }
    }
}
