use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

pub const DEFAULT_WINDOW_CAPACITY: u32 = 65536;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WindowError {
    #[error("range end {hi} beyond window limit {limit}")]
    RangeBeyondWindow { hi: u64, limit: u64 },
    #[error("inverted range [{lo}, {hi})")]
    InvertedRange { lo: u64, hi: u64 },
}

/// Boolean flags over a moving range of sequence positions.
///
/// Positions below `head` are retired and read as set. Positions in
/// `[head, head + capacity)` live in a circular bit array; anything beyond
/// that is unset and cannot be marked.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlidingWindow {
    head: u64,
    capacity: u32,
    bits: Vec<u64>,
}

impl SlidingWindow {
    pub fn new(capacity: u32) -> Self {
        Self::with_head(0, capacity)
    }

    pub fn with_head(head: u64, capacity: u32) -> Self {
        assert!(capacity > 0, "window capacity must be positive");
        SlidingWindow {
            head,
            capacity,
            bits: vec![0; (capacity as usize).div_ceil(64)],
        }
    }

    pub fn head(&self) -> u64 {
        self.head
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    /// One past the last position the window can hold.
    pub fn limit(&self) -> u64 {
        self.head + self.capacity as u64
    }

    #[inline]
    fn slot(&self, pos: u64) -> (usize, u64) {
        let idx = (pos % self.capacity as u64) as usize;
        (idx / 64, 1u64 << (idx % 64))
    }

    #[inline]
    fn raw(&self, pos: u64) -> bool {
        let (w, m) = self.slot(pos);
        self.bits[w] & m != 0
    }

    #[inline]
    fn write(&mut self, pos: u64, flag: bool) {
        let (w, m) = self.slot(pos);
        if flag {
            self.bits[w] |= m;
        } else {
            self.bits[w] &= !m;
        }
    }

    pub fn is_set(&self, pos: u64) -> bool {
        if pos < self.head {
            true
        } else if pos >= self.limit() {
            false
        } else {
            self.raw(pos)
        }
    }

    /// Sets or clears every flag in `[lo, hi)`. Positions below the head are
    /// ignored; a range reaching past the window is rejected untouched.
    pub fn mark(&mut self, lo: u64, hi: u64, flag: bool) -> Result<(), WindowError> {
        if lo > hi {
            return Err(WindowError::InvertedRange { lo, hi });
        }
        if hi > self.limit() {
            return Err(WindowError::RangeBeyondWindow {
                hi,
                limit: self.limit(),
            });
        }
        for pos in lo.max(self.head)..hi {
            self.write(pos, flag);
        }
        Ok(())
    }

    pub fn set(&mut self, lo: u64, hi: u64) -> Result<(), WindowError> {
        self.mark(lo, hi, true)
    }

    pub fn unset(&mut self, lo: u64, hi: u64) -> Result<(), WindowError> {
        self.mark(lo, hi, false)
    }

    /// Smallest position at or after the head whose flag equals `flag`.
    pub fn first(&self, flag: bool) -> Option<u64> {
        (self.head..self.limit()).find(|&p| self.raw(p) == flag)
    }

    /// Advances the head to the first unset position and returns it.
    pub fn slide(&mut self) -> u64 {
        while self.head < self.limit() && self.raw(self.head) {
            let h = self.head;
            self.write(h, false);
            self.head += 1;
        }
        self.head
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;
    use proptest::prelude::*;

    /// Unbounded reference: the set of flagged positions plus a head.
    #[derive(Default)]
    struct NaiveWindow {
        head: u64,
        cap: u64,
        set: BTreeSet<u64>,
    }

    impl NaiveWindow {
        fn mark(&mut self, lo: u64, hi: u64, flag: bool) -> Result<(), ()> {
            if hi > self.head + self.cap {
                return Err(());
            }
            for p in lo..hi {
                if p < self.head {
                    continue;
                }
                if flag {
                    self.set.insert(p);
                } else {
                    self.set.remove(&p);
                }
            }
            Ok(())
        }
        fn first(&self, flag: bool) -> Option<u64> {
            (self.head..self.head + self.cap).find(|p| self.set.contains(p) == flag)
        }
        fn slide(&mut self) -> u64 {
            while self.head < self.head + self.cap && self.set.contains(&self.head) {
                self.set.remove(&self.head);
                self.head += 1;
            }
            self.head
        }
    }

    #[test]
    fn mark_range_sets_flags() {
        let mut w = SlidingWindow::new(16);
        w.set(3, 5).unwrap();
        assert!(w.is_set(3) && w.is_set(4));
        assert!(!w.is_set(2) && !w.is_set(5));
        assert_eq!(w.first(true), Some(3));
        assert_eq!(w.first(false), Some(0));
    }

    #[test]
    fn empty_and_retired_ranges_are_noops() {
        let mut w = SlidingWindow::with_head(20, 16);
        let before = w.clone();
        w.set(7, 7).unwrap();
        assert_eq!(w, before);
        w.set(10, 20).unwrap();
        assert_eq!(w, before);
    }

    #[test]
    fn overflow_is_reported() {
        let mut w = SlidingWindow::new(8);
        assert_eq!(
            w.set(4, 9),
            Err(WindowError::RangeBeyondWindow { hi: 9, limit: 8 })
        );
        assert_eq!(w.first(true), None);
    }

    #[test]
    fn slide_stops_at_first_unset() {
        let mut w = SlidingWindow::new(16);
        w.set(0, 2).unwrap();
        assert_eq!(w.slide(), 2);
        let mut all_unset = SlidingWindow::new(16);
        assert_eq!(all_unset.slide(), 0);
        let mut full = SlidingWindow::new(16);
        full.set(0, 5).unwrap();
        assert_eq!(full.slide(), 5);
        assert_eq!(full.first(true), None);
    }

    #[test]
    fn wraps_around_the_bit_array() {
        let mut w = SlidingWindow::new(8);
        w.set(0, 8).unwrap();
        assert_eq!(w.slide(), 8);
        // positions 8..16 reuse the same bits, which must read clear
        assert_eq!(w.first(true), None);
        w.set(12, 14).unwrap();
        assert_eq!(w.first(true), Some(12));
        assert_eq!(w.slide(), 8);
    }

    #[derive(Debug, Clone)]
    enum Op {
        Mark(u64, u64, bool),
        First(bool),
        Slide,
    }

    fn op(cap: u64) -> impl Strategy<Value = Op> {
        prop_oneof![
            (0..cap * 3, 0..cap + 8, any::<bool>()).prop_map(|(a, len, f)| Op::Mark(a, a + len, f)),
            any::<bool>().prop_map(Op::First),
            Just(Op::Slide),
        ]
    }

    proptest! {
        #[test]
        fn agrees_with_naive_bitset(
            (cap, ops) in (1u64..=256).prop_flat_map(|cap| (Just(cap), proptest::collection::vec(op(cap), 0..1000)))
        ) {
            let mut w = SlidingWindow::new(cap as u32);
            let mut naive = NaiveWindow { cap, ..Default::default() };
            let mut last_head = 0;
            for op in ops {
                match op {
                    Op::Mark(lo, hi, f) => {
                        // shift ranges relative to the head so they hit the window
                        let (lo, hi) = (lo + naive.head.saturating_sub(cap), hi + naive.head.saturating_sub(cap));
                        prop_assert_eq!(w.mark(lo, hi, f).is_ok(), naive.mark(lo, hi, f).is_ok());
                    }
                    Op::First(f) => prop_assert_eq!(w.first(f), naive.first(f)),
                    Op::Slide => prop_assert_eq!(w.slide(), naive.slide()),
                }
                prop_assert!(w.head() >= last_head);
                last_head = w.head();
            }
        }
    }
}
