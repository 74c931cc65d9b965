//! Per-flow protocol timers.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use thiserror::Error;

use crate::instruction::TimerOp;
use crate::model::{Event, FlowKey, Name, TimerDecl, TimerId};
use crate::SimTime;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TimerError {
    #[error("timer {0} is not declared by any context")]
    UndeclaredTimer(TimerId),
}

/// At most one deadline per (flow, timer id), ordered by
/// (deadline, flow key, timer id) for expiry.
#[derive(Clone, Debug, Default)]
pub struct Timers {
    decls: BTreeMap<TimerId, Name>,
    active: BTreeMap<(FlowKey, TimerId), SimTime>,
    order: BTreeSet<(SimTime, FlowKey, TimerId)>,
}

impl Timers {
    pub fn new(decls: &[TimerDecl]) -> Self {
        Timers {
            decls: decls.iter().map(|d| (d.id, d.event)).collect(),
            ..Self::default()
        }
    }

    pub fn apply(&mut self, flow: FlowKey, tid: TimerId, op: TimerOp, now: SimTime) -> Result<(), TimerError> {
        if !self.decls.contains_key(&tid) {
            return Err(TimerError::UndeclaredTimer(tid));
        }
        if let Some(old) = self.active.remove(&(flow, tid)) {
            self.order.remove(&(old, flow, tid));
        }
        match op {
            TimerOp::Start(dur) | TimerOp::Restart(dur) => {
                let at = now.saturating_add(dur);
                self.active.insert((flow, tid), at);
                self.order.insert((at, flow, tid));
            }
            TimerOp::Stop => {}
        }
        Ok(())
    }

    pub fn deadline(&self, flow: &FlowKey, tid: TimerId) -> Option<SimTime> {
        self.active.get(&(*flow, tid)).copied()
    }

    pub fn next_deadline(&self) -> Option<SimTime> {
        self.order.first().map(|(t, _, _)| *t)
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    /// Clears every deadline at or before `now` and returns one timer event
    /// per expiry, carrying `tid`.
    pub fn advance(&mut self, now: SimTime) -> Vec<Event> {
        let mut out = Vec::new();
        while let Some(&(at, flow, tid)) = self.order.first() {
            if at > now {
                break;
            }
            self.order.pop_first();
            self.active.remove(&(flow, tid));
            let ty = self.decls[&tid];
            out.push(Event::timer(ty, flow).with("tid", tid.0 as u64).with("deadline", at));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn timers() -> Timers {
        Timers::new(&[
            TimerDecl { id: TimerId(0), event: "rto" },
            TimerDecl { id: TimerId(1), event: "resend" },
        ])
    }

    fn key(n: u64) -> FlowKey {
        FlowKey::new(&[n])
    }

    #[test]
    fn empty_and_stop_inactive() {
        let mut t = timers();
        assert!(t.advance(1000).is_empty());
        t.apply(key(1), TimerId(0), TimerOp::Stop, 0).unwrap();
        assert!(t.is_empty());
        assert_eq!(
            t.apply(key(1), TimerId(9), TimerOp::Start(1), 0),
            Err(TimerError::UndeclaredTimer(TimerId(9)))
        );
    }

    #[test]
    fn zero_duration_fires_next_advance() {
        let mut t = timers();
        t.apply(key(1), TimerId(0), TimerOp::Start(0), 50).unwrap();
        let ev = t.advance(50);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].ty, "rto");
        assert_eq!(ev[0].get("tid"), Some(0));
    }

    #[test]
    fn ties_ordered_by_flow_then_tid() {
        let mut t = timers();
        t.apply(key(2), TimerId(0), TimerOp::Start(10), 0).unwrap();
        t.apply(key(1), TimerId(1), TimerOp::Start(10), 0).unwrap();
        t.apply(key(1), TimerId(0), TimerOp::Start(10), 0).unwrap();
        let ev = t.advance(10);
        let order: Vec<(u64, u64)> = ev.iter().map(|e| (e.flow.part(0), e.get("tid").unwrap())).collect();
        assert_eq!(order, [(1, 0), (1, 1), (2, 0)]);
    }

    #[test]
    fn restart_moves_deadline() {
        let mut t = timers();
        t.apply(key(1), TimerId(0), TimerOp::Start(100), 0).unwrap();
        t.apply(key(1), TimerId(0), TimerOp::Restart(100), 50).unwrap();
        assert!(t.advance(100).is_empty());
        assert_eq!(t.advance(150).len(), 1);
        // start on an active timer behaves as restart
        t.apply(key(1), TimerId(0), TimerOp::Start(10), 0).unwrap();
        t.apply(key(1), TimerId(0), TimerOp::Start(30), 0).unwrap();
        assert_eq!(t.len(), 1);
        assert!(t.advance(20).is_empty());
    }

    proptest! {
        #[test]
        fn no_lost_expiries(ops in proptest::collection::vec((0u64..4, 0u16..2, 0u8..3, 0u64..100), 1..200)) {
            let mut t = timers();
            let mut model: BTreeMap<(u64, u16), u64> = BTreeMap::new();
            let mut now = 0;
            let mut fired = 0usize;
            let mut expected = 0usize;
            for (flow, tid, op, d) in ops {
                now += d / 4;
                let evs = t.advance(now);
                let due: Vec<_> = model.iter().filter(|(_, at)| **at <= now).map(|(k, _)| *k).collect();
                expected += due.len();
                for k in due { model.remove(&k); }
                fired += evs.len();
                let op = match op { 0 => TimerOp::Start(d), 1 => TimerOp::Restart(d), _ => TimerOp::Stop };
                t.apply(key(flow), TimerId(tid), op, now).unwrap();
                match op {
                    TimerOp::Stop => { model.remove(&(flow, tid)); }
                    _ => { model.insert((flow, tid), now + d); }
                }
            }
            fired += t.advance(u64::MAX).len();
            expected += model.len();
            prop_assert_eq!(fired, expected);
        }
    }
}
