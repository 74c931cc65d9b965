//! Ordered data units: RX fragment reassembly with flush-to-application, and
//! the TX byte store that packet generation reads payloads from.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use thiserror::Error;

use crate::instruction::{DataSize, Direction, Uid};
use crate::model::FlowKey;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReassemblyError {
    #[error("data unit {0:?} already exists")]
    DuplicateUid(Uid),
    #[error("no data unit {0:?}")]
    UnknownUid(Uid),
    #[error("data unit {0:?} has the wrong direction for this operation")]
    WrongDirection(Uid),
    #[error("byte {end} is beyond the declared size {size}")]
    BeyondDeclaredSize { end: u64, size: u64 },
    #[error("flush of {len} bytes at {fub} crosses a gap ({available} contiguous)")]
    NotContiguous { fub: u64, len: u64, available: u64 },
    #[error("range [{offset}, {end}) is not held", end = offset + len)]
    RangeUnavailable { offset: u64, len: u64 },
    #[error("trim of {len} bytes past the held data ({held} bytes)")]
    TrimPastEnd { len: u64, held: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Store {
    /// Canonical fragment list: sorted, non-overlapping, non-adjacent,
    /// every offset at or above `fub`.
    Rx { fub: u64, frags: BTreeMap<u64, Vec<u8>> },
    /// Appended bytes from `trim` onwards; `buf[skip..]` is live.
    Tx { trim: u64, skip: usize, buf: Vec<u8> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderedDataUnit {
    uid: Uid,
    size: DataSize,
    addr: Option<u64>,
    store: Store,
}

impl OrderedDataUnit {
    pub fn new(dir: Direction, size: DataSize, uid: Uid, addr: Option<u64>) -> Self {
        let store = match dir {
            Direction::Rx => Store::Rx {
                fub: 0,
                frags: BTreeMap::new(),
            },
            Direction::Tx => Store::Tx {
                trim: 0,
                skip: 0,
                buf: Vec::new(),
            },
        };
        OrderedDataUnit {
            uid,
            size,
            addr,
            store,
        }
    }

    pub fn uid(&self) -> Uid {
        self.uid
    }

    pub fn direction(&self) -> Direction {
        match self.store {
            Store::Rx { .. } => Direction::Rx,
            Store::Tx { .. } => Direction::Tx,
        }
    }

    pub fn declared_size(&self) -> DataSize {
        self.size
    }

    pub fn delivery_addr(&self) -> Option<u64> {
        self.addr
    }

    fn check_size(&self, end: u64) -> Result<(), ReassemblyError> {
        match self.size {
            DataSize::Finite(size) if end > size => Err(ReassemblyError::BeyondDeclaredSize { end, size }),
            _ => Ok(()),
        }
    }

    /// First unflushed byte (RX) or trim cursor (TX).
    pub fn cursor(&self) -> u64 {
        match &self.store {
            Store::Rx { fub, .. } => *fub,
            Store::Tx { trim, .. } => *trim,
        }
    }

    /// RX fragments as `(offset, len)`, in order.
    pub fn fragments(&self) -> Vec<(u64, u64)> {
        match &self.store {
            Store::Rx { frags, .. } => frags.iter().map(|(o, b)| (*o, b.len() as u64)).collect(),
            Store::Tx { .. } => Vec::new(),
        }
    }

    /// Bytes available from the first unflushed byte without a gap.
    pub fn contiguous(&self) -> u64 {
        match &self.store {
            Store::Rx { fub, frags } => match frags.iter().next() {
                Some((o, b)) if o == fub => b.len() as u64,
                _ => 0,
            },
            Store::Tx { .. } => 0,
        }
    }

    /// Places `bytes` at `offset`. Bytes already held win over new ones and
    /// anything below the first unflushed byte is ignored.
    pub fn add_rx_segment(&mut self, offset: u64, bytes: &[u8]) -> Result<(), ReassemblyError> {
        let end = offset + bytes.len() as u64;
        self.check_size(end)?;
        let uid = self.uid;
        let Store::Rx { fub, frags } = &mut self.store else {
            return Err(ReassemblyError::WrongDirection(uid));
        };
        let start = offset.max(*fub);
        if start >= end {
            return Ok(());
        }
        let new = &bytes[(start - offset) as usize..];

        // fragments touching [start, end]
        let first = frags
            .range(..=start)
            .next_back()
            .filter(|(o, b)| *o + b.len() as u64 >= start)
            .map(|(o, _)| *o)
            .unwrap_or(start);
        let touching: Vec<u64> = frags.range(first..=end).map(|(o, _)| *o).collect();
        if touching.is_empty() {
            frags.insert(start, new.to_vec());
            return Ok(());
        }

        let base = touching[0].min(start);
        let mut merged = if touching[0] <= start {
            frags.remove(&touching[0]).unwrap()
        } else {
            Vec::with_capacity((end - base) as usize)
        };
        let mut cur = base + merged.len() as u64;
        let fill = |merged: &mut Vec<u8>, cur: &mut u64, upto: u64| {
            if upto > *cur && *cur < end {
                let hi = upto.min(end);
                merged.extend_from_slice(&new[(*cur - start) as usize..(hi - start) as usize]);
                *cur = hi;
            }
        };
        for off in touching.into_iter().filter(|o| *o > base || *o > start) {
            let Some(frag) = frags.remove(&off) else { continue };
            fill(&mut merged, &mut cur, off);
            let frag_end = off + frag.len() as u64;
            if frag_end > cur {
                merged.extend_from_slice(&frag[(cur - off) as usize..]);
                cur = frag_end;
            }
        }
        fill(&mut merged, &mut cur, end);
        frags.insert(base, merged);
        Ok(())
    }

    /// Removes and returns `len` contiguous bytes starting at the first
    /// unflushed byte.
    pub fn rx_flush(&mut self, len: u64) -> Result<Vec<u8>, ReassemblyError> {
        let available = self.contiguous();
        let uid = self.uid;
        let Store::Rx { fub, frags } = &mut self.store else {
            return Err(ReassemblyError::WrongDirection(uid));
        };
        if len == 0 {
            return Ok(Vec::new());
        }
        if len > available {
            return Err(ReassemblyError::NotContiguous {
                fub: *fub,
                len,
                available,
            });
        }
        let mut head = frags.remove(fub).unwrap();
        let rest = head.split_off(len as usize);
        *fub += len;
        if !rest.is_empty() {
            frags.insert(*fub, rest);
        }
        Ok(head)
    }

    /// One past the last appended byte.
    pub fn tx_end(&self) -> u64 {
        match &self.store {
            Store::Tx { trim, skip, buf } => trim + (buf.len() - skip) as u64,
            Store::Rx { .. } => 0,
        }
    }

    pub fn add_tx_data(&mut self, bytes: &[u8]) -> Result<(), ReassemblyError> {
        self.check_size(self.tx_end() + bytes.len() as u64)?;
        let uid = self.uid;
        let Store::Tx { buf, .. } = &mut self.store else {
            return Err(ReassemblyError::WrongDirection(uid));
        };
        buf.extend_from_slice(bytes);
        Ok(())
    }

    pub fn tx_read(&self, offset: u64, len: u64) -> Result<&[u8], ReassemblyError> {
        let Store::Tx { trim, skip, buf } = &self.store else {
            return Err(ReassemblyError::WrongDirection(self.uid));
        };
        if offset < *trim || offset + len > self.tx_end() {
            if len == 0 {
                return Ok(&[]);
            }
            return Err(ReassemblyError::RangeUnavailable { offset, len });
        }
        let lo = skip + (offset - trim) as usize;
        Ok(&buf[lo..lo + len as usize])
    }

    /// Forgets the first `len` held bytes.
    pub fn tx_flush(&mut self, len: u64) -> Result<(), ReassemblyError> {
        let held = self.tx_end() - self.cursor();
        let uid = self.uid;
        let Store::Tx { trim, skip, buf } = &mut self.store else {
            return Err(ReassemblyError::WrongDirection(uid));
        };
        if len > held {
            return Err(ReassemblyError::TrimPastEnd { len, held });
        }
        *trim += len;
        *skip += len as usize;
        if *skip > 64 * 1024 && *skip * 2 > buf.len() {
            buf.drain(..*skip);
            *skip = 0;
        }
        Ok(())
    }
}

/// All live data units of one host, keyed by flow and uid.
#[derive(Clone, Debug, Default)]
pub struct DataUnits {
    units: BTreeMap<(FlowKey, Uid), OrderedDataUnit>,
}

impl DataUnits {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create(
        &mut self,
        flow: FlowKey,
        dir: Direction,
        size: DataSize,
        uid: Uid,
        addr: Option<u64>,
    ) -> Result<(), ReassemblyError> {
        if self.units.contains_key(&(flow, uid)) {
            return Err(ReassemblyError::DuplicateUid(uid));
        }
        self.units
            .insert((flow, uid), OrderedDataUnit::new(dir, size, uid, addr));
        Ok(())
    }

    pub fn get(&self, flow: &FlowKey, uid: Uid) -> Result<&OrderedDataUnit, ReassemblyError> {
        self.units
            .get(&(*flow, uid))
            .ok_or(ReassemblyError::UnknownUid(uid))
    }

    pub fn get_mut(&mut self, flow: &FlowKey, uid: Uid) -> Result<&mut OrderedDataUnit, ReassemblyError> {
        self.units
            .get_mut(&(*flow, uid))
            .ok_or(ReassemblyError::UnknownUid(uid))
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn rx() -> OrderedDataUnit {
        OrderedDataUnit::new(Direction::Rx, DataSize::Infinite, Uid(1), None)
    }

    fn tx(size: DataSize) -> OrderedDataUnit {
        OrderedDataUnit::new(Direction::Tx, size, Uid(2), None)
    }

    fn pattern(n: usize, salt: u8) -> Vec<u8> {
        (0..n).map(|i| (i as u8).wrapping_mul(31).wrapping_add(salt)).collect()
    }

    /// Flat-array oracle: the first writer of each byte wins.
    struct FlatOracle {
        bytes: Vec<Option<u8>>,
    }

    impl FlatOracle {
        fn new(n: usize) -> Self {
            FlatOracle { bytes: vec![None; n] }
        }
        fn write(&mut self, offset: usize, data: &[u8]) {
            for (i, b) in data.iter().enumerate() {
                let slot = &mut self.bytes[offset + i];
                if slot.is_none() {
                    *slot = Some(*b);
                }
            }
        }
    }

    #[test]
    fn out_of_order_segments_become_contiguous() {
        let data = pattern(300, 0);
        let mut u = rx();
        u.add_rx_segment(0, &data[0..100]).unwrap();
        u.add_rx_segment(200, &data[200..300]).unwrap();
        assert_eq!(u.contiguous(), 100);
        u.add_rx_segment(100, &data[100..200]).unwrap();
        assert_eq!(u.fragments(), vec![(0, 300)]);
        assert_eq!(u.rx_flush(300).unwrap(), data);
    }

    #[test]
    fn duplicate_segment_is_idempotent() {
        let data = pattern(100, 3);
        let mut u = rx();
        u.add_rx_segment(0, &data).unwrap();
        let before = u.clone();
        u.add_rx_segment(0, &data).unwrap();
        assert_eq!(u, before);
    }

    #[test]
    fn overlap_keeps_first_writer() {
        let a = pattern(150, 1);
        let b = pattern(150, 99);
        let mut u = rx();
        u.add_rx_segment(0, &a).unwrap();
        u.add_rx_segment(100, &b).unwrap();
        assert_eq!(u.fragments(), vec![(0, 250)]);
        let out = u.rx_flush(250).unwrap();
        assert_eq!(&out[..150], &a[..]);
        assert_eq!(&out[150..], &b[50..]);
    }

    #[test]
    fn flush_rules() {
        let data = pattern(300, 7);
        let mut u = rx();
        u.add_rx_segment(0, &data[..100]).unwrap();
        u.add_rx_segment(150, &data[150..]).unwrap();
        assert_eq!(u.rx_flush(0).unwrap(), Vec::<u8>::new());
        assert_eq!(u.cursor(), 0);
        assert_eq!(
            u.rx_flush(200),
            Err(ReassemblyError::NotContiguous { fub: 0, len: 200, available: 100 })
        );
        assert_eq!(u.rx_flush(60).unwrap(), &data[..60]);
        // below the first unflushed byte: ignored
        u.add_rx_segment(0, &pattern(60, 200)).unwrap();
        assert_eq!(u.fragments(), vec![(60, 40), (150, 150)]);
    }

    #[test]
    fn declared_size_is_enforced() {
        let mut u = OrderedDataUnit::new(Direction::Rx, DataSize::Finite(200), Uid(5), None);
        assert_eq!(
            u.add_rx_segment(150, &[0; 100]),
            Err(ReassemblyError::BeyondDeclaredSize { end: 250, size: 200 })
        );
        let mut t = tx(DataSize::Finite(150));
        t.add_tx_data(&[1; 100]).unwrap();
        assert_eq!(
            t.add_tx_data(&[1; 100]),
            Err(ReassemblyError::BeyondDeclaredSize { end: 200, size: 150 })
        );
    }

    #[test]
    fn tx_append_read_trim() {
        let a = pattern(100, 1);
        let b = pattern(100, 2);
        let mut t = tx(DataSize::Infinite);
        t.add_tx_data(&a).unwrap();
        t.add_tx_data(&[]).unwrap();
        t.add_tx_data(&b).unwrap();
        let all: Vec<u8> = a.iter().chain(b.iter()).copied().collect();
        assert_eq!(t.tx_read(0, 200).unwrap(), &all[..]);
        assert_eq!(t.tx_read(50, 20).unwrap(), t.tx_read(50, 20).unwrap());
        assert_eq!(t.tx_read(7, 0).unwrap(), &[] as &[u8]);
        t.tx_flush(0).unwrap();
        t.tx_flush(100).unwrap();
        assert_eq!(t.tx_read(50, 10), Err(ReassemblyError::RangeUnavailable { offset: 50, len: 10 }));
        assert_eq!(t.tx_read(90, 20), Err(ReassemblyError::RangeUnavailable { offset: 90, len: 20 }));
        assert_eq!(t.tx_read(100, 100).unwrap(), &b[..]);
        assert_eq!(t.tx_read(150, 100), Err(ReassemblyError::RangeUnavailable { offset: 150, len: 100 }));
        assert_eq!(t.tx_flush(101), Err(ReassemblyError::TrimPastEnd { len: 101, held: 100 }));
    }

    #[test]
    fn tx_trim_compacts_without_losing_bytes() {
        let data = pattern(300_000, 9);
        let mut t = tx(DataSize::Infinite);
        t.add_tx_data(&data).unwrap();
        for i in 0..200 {
            t.tx_flush(1000).unwrap();
            let off = (i + 1) * 1000;
            assert_eq!(t.tx_read(off, 1000).unwrap(), &data[off as usize..off as usize + 1000]);
        }
    }

    #[test]
    fn store_rejects_duplicates_and_unknown() {
        let mut s = DataUnits::new();
        let f = FlowKey::new(&[1, 2]);
        s.create(f, Direction::Tx, DataSize::Infinite, Uid(0), None).unwrap();
        assert_eq!(
            s.create(f, Direction::Tx, DataSize::Infinite, Uid(0), None),
            Err(ReassemblyError::DuplicateUid(Uid(0)))
        );
        assert!(matches!(s.get(&f, Uid(9)), Err(ReassemblyError::UnknownUid(Uid(9)))));
        assert!(matches!(
            s.get_mut(&f, Uid(0)).unwrap().add_rx_segment(0, &[1]),
            Err(ReassemblyError::WrongDirection(_))
        ));
    }

    fn check_canonical(u: &OrderedDataUnit) -> Result<(), TestCaseError> {
        let frags = u.fragments();
        for w in frags.windows(2) {
            prop_assert!(w[0].0 + w[0].1 < w[1].0, "fragments touch: {:?}", w);
        }
        for f in &frags {
            prop_assert!(f.0 >= u.cursor());
            prop_assert!(f.1 > 0);
        }
        Ok(())
    }

    proptest! {
        #[test]
        fn matches_flat_oracle(
            n in 1usize..4000,
            segs in proptest::collection::vec((0usize..4000, 1usize..600, any::<u8>()), 1..80),
            flush_every in 0usize..10,
        ) {
            let mut u = rx();
            let mut oracle = FlatOracle::new(n);
            let mut flushed = Vec::new();
            for (i, (off, len, salt)) in segs.into_iter().enumerate() {
                let off = off % n;
                let len = len.min(n - off);
                let data = pattern(len, salt);
                let fub_before = u.cursor();
                u.add_rx_segment(off as u64, &data).unwrap();
                // bytes already flushed are ignored by the unit; mirror that
                let lo = off.max(fub_before as usize);
                if lo < off + len {
                    oracle.write(lo, &data[lo - off..]);
                }
                check_canonical(&u)?;
                if flush_every > 0 && i % flush_every == 0 {
                    let c = u.contiguous();
                    flushed.extend(u.rx_flush(c).unwrap());
                    prop_assert!(u.cursor() >= fub_before);
                }
            }
            let c = u.contiguous();
            flushed.extend(u.rx_flush(c).unwrap());
            let expect: Vec<u8> = oracle.bytes.iter().take_while(|b| b.is_some()).map(|b| b.unwrap()).collect();
            prop_assert_eq!(flushed, expect);
        }
    }
}
