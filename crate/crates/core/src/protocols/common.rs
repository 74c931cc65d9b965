use alloc::collections::BTreeMap;
use alloc::vec::Vec;

/// Set of half-open `u64` ranges, kept merged.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RangeSet {
    ranges: BTreeMap<u64, u64>,
}

impl RangeSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `[lo, hi)` and returns how many positions were new.
    pub fn insert(&mut self, lo: u64, hi: u64) -> u64 {
        if lo >= hi {
            return 0;
        }
        let touching: Vec<(u64, u64)> = self
            .ranges
            .range(..=hi)
            .rev()
            .take_while(|(_, e)| **e >= lo)
            .map(|(s, e)| (*s, *e))
            .collect();
        let (mut a, mut b) = (lo, hi);
        let mut overlap = 0;
        for (s, e) in touching {
            overlap += e.min(hi).saturating_sub(s.max(lo));
            self.ranges.remove(&s);
            a = a.min(s);
            b = b.max(e);
        }
        self.ranges.insert(a, b);
        (hi - lo) - overlap
    }

    /// Removes `[lo, hi)` and returns how many positions were present.
    pub fn remove(&mut self, lo: u64, hi: u64) -> u64 {
        if lo >= hi {
            return 0;
        }
        let touching: Vec<(u64, u64)> = self
            .ranges
            .range(..hi)
            .rev()
            .take_while(|(_, e)| **e > lo)
            .map(|(s, e)| (*s, *e))
            .collect();
        let mut removed = 0;
        for (s, e) in touching {
            self.ranges.remove(&s);
            removed += e.min(hi) - s.max(lo);
            if s < lo {
                self.ranges.insert(s, lo);
            }
            if e > hi {
                self.ranges.insert(hi, e);
            }
        }
        removed
    }

    /// Lowest range.
    pub fn first(&self) -> Option<(u64, u64)> {
        self.ranges.iter().next().map(|(s, e)| (*s, *e))
    }

    pub fn contains(&self, pos: u64) -> bool {
        self.ranges
            .range(..=pos)
            .next_back()
            .is_some_and(|(_, e)| pos < *e)
    }

    /// End of the range containing `pos`, or `pos` if it is not covered.
    pub fn run_end(&self, pos: u64) -> u64 {
        match self.ranges.range(..=pos).next_back() {
            Some((_, e)) if pos < *e => *e,
            _ => pos,
        }
    }

    /// First uncovered `[lo, hi)` inside `[from, to)`.
    pub fn first_gap(&self, from: u64, to: u64) -> Option<(u64, u64)> {
        let start = self.run_end(from);
        if start >= to {
            return None;
        }
        let end = self
            .ranges
            .range(start..)
            .next()
            .map_or(to, |(s, _)| (*s).min(to));
        Some((start, end))
    }

    pub fn total(&self) -> u64 {
        self.ranges.iter().map(|(s, e)| e - s).sum()
    }

    pub fn max(&self) -> Option<u64> {
        self.ranges.values().next_back().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.ranges.iter().map(|(s, e)| (*s, *e))
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }
}

/// SplitMix64 step, for deterministic identifiers derived from seeds.
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
