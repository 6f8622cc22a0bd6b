use std::collections::BTreeMap;

/// Set of `u64` values stored as disjoint inclusive ranges.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RangeSet {
    // start -> end, inclusive, non-adjacent
    ranges: BTreeMap<u64, u64>,
}

impl RangeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn contains(&self, value: u64) -> bool {
        self.ranges.range(..=value).next_back().is_some_and(|(_, &end)| end >= value)
    }

    /// Inserts `value`; returns false if it was already present.
    pub fn insert(&mut self, value: u64) -> bool {
        self.insert_range(value, value)
    }

    pub fn insert_range(&mut self, mut start: u64, mut end: u64) -> bool {
        debug_assert!(start <= end);
        if let Some((&s, &e)) = self.ranges.range(..=start).next_back() {
            if e >= end {
                return false;
            }
            if e.saturating_add(1) >= start {
                start = s;
                end = end.max(e);
                self.ranges.remove(&s);
            }
        }
        loop {
            let next = self.ranges.range(start..).next().map(|(&s, &e)| (s, e));
            match next {
                Some((s, e)) if s <= end.saturating_add(1) => {
                    end = end.max(e);
                    self.ranges.remove(&s);
                }
                _ => break,
            }
        }
        self.ranges.insert(start, end);
        true
    }

    pub fn max(&self) -> Option<u64> {
        self.ranges.values().next_back().copied()
    }

    /// Ranges as `(low, high)` pairs, highest first (the order ACK frames use).
    pub fn descending(&self) -> Vec<(u64, u64)> {
        self.ranges.iter().rev().map(|(&s, &e)| (s, e)).collect()
    }

    pub fn len_ranges(&self) -> usize {
        self.ranges.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn merges_adjacent_and_overlapping() {
        let mut set = RangeSet::new();
        assert!(set.insert(5));
        assert!(set.insert(7));
        assert_eq!(set.descending(), [(7, 7), (5, 5)]);
        assert!(set.insert(6));
        assert_eq!(set.descending(), [(5, 7)]);
        assert!(!set.insert(6));
        assert!(set.insert_range(0, 10));
        assert_eq!(set.descending(), [(0, 10)]);
        assert_eq!(set.max(), Some(10));
    }

    proptest! {
        #[test]
        fn matches_naive_set(values in proptest::collection::vec(0u64..200, 0..100)) {
            let mut set = RangeSet::new();
            let mut naive = std::collections::BTreeSet::new();
            for v in &values {
                prop_assert_eq!(set.insert(*v), naive.insert(*v));
            }
            for v in 0..200 {
                prop_assert_eq!(set.contains(v), naive.contains(&v));
            }
            let ranges = set.descending();
            for pair in ranges.windows(2) {
                // Disjoint and not adjacent.
                prop_assert!(pair[1].1 + 1 < pair[0].0);
            }
        }
    }
}
