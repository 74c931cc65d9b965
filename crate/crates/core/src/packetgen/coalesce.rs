use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec::Vec;

use super::blueprint::Payload;
use crate::instruction::PktGen;
use crate::model::{FlowKey, Name};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Guard {
    BothPayloadEmpty,
    SameFlowAnyPayload,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    /// Replace the pending blueprint with the new one, keeping its place.
    KeepNewest,
    /// Extend the pending Data payload with the new, contiguous one.
    MergePayloadAppend,
}

/// Merge policy for blueprints still waiting in a flow's pending ring.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoalescingRule {
    /// Header fields that must be equal in both blueprints.
    pub match_fields: Vec<Name>,
    pub guard: Guard,
    pub action: Action,
}

impl CoalescingRule {
    pub fn new(match_fields: &[Name], guard: Guard, action: Action) -> Self {
        CoalescingRule {
            match_fields: match_fields.to_vec(),
            guard,
            action,
        }
    }

    fn matches(&self, old: &PktGen, new: &PktGen) -> bool {
        if old.flow != new.flow || !old.bp.same_layout(&new.bp) {
            return false;
        }
        let fields_equal = self.match_fields.iter().all(|f| match (old.bp.get(f), new.bp.get(f)) {
            (Some(a), Some(b)) => a == b,
            _ => false,
        });
        if !fields_equal {
            return false;
        }
        match self.guard {
            Guard::BothPayloadEmpty => old.bp.payload_is_empty() && new.bp.payload_is_empty(),
            Guard::SameFlowAnyPayload => true,
        }
    }

    /// Tries to fold `new` into `old`. Returns false when the action does not
    /// apply, in which case neither is changed.
    fn apply(&self, old: &mut PktGen, new: &PktGen) -> bool {
        match self.action {
            Action::KeepNewest => {
                *old = new.clone();
                true
            }
            Action::MergePayloadAppend => {
                let (Payload::Data(a), Payload::Data(b)) = (&mut old.bp.payload, &new.bp.payload) else {
                    return false;
                };
                let compatible = a.uid == b.uid
                    && a.offset + a.len == b.offset
                    && a.seg_unit == b.seg_unit
                    && old.srule == new.srule
                    && old.queue == new.queue
                    && old.prio == new.prio;
                if compatible {
                    a.len += b.len;
                }
                compatible
            }
        }
    }
}

/// Blueprints waiting to be materialized, per flow, in issue order.
#[derive(Clone, Debug, Default)]
pub struct PendingRings {
    rings: BTreeMap<FlowKey, VecDeque<PktGen>>,
    coalesced: u64,
}

impl PendingRings {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends `p` to its flow's ring unless a rule folds it into a pending
    /// blueprint. Returns true if it was coalesced.
    pub fn push(&mut self, p: PktGen, rules: &[CoalescingRule]) -> bool {
        let ring = self.rings.entry(p.flow).or_default();
        for rule in rules {
            // newest pending first, so repeated acks collapse onto one entry
            for old in ring.iter_mut().rev() {
                if rule.matches(old, &p) && rule.apply(old, &p) {
                    self.coalesced += 1;
                    return true;
                }
            }
        }
        ring.push_back(p);
        false
    }

    pub fn len(&self, flow: &FlowKey) -> usize {
        self.rings.get(flow).map_or(0, VecDeque::len)
    }

    pub fn is_empty(&self) -> bool {
        self.rings.values().all(VecDeque::is_empty)
    }

    pub fn coalesced(&self) -> u64 {
        self.coalesced
    }

    /// Removes everything pending, flows in key order.
    pub fn drain(&mut self) -> Vec<PktGen> {
        let mut out = Vec::new();
        for ring in self.rings.values_mut() {
            out.extend(ring.drain(..));
        }
        self.rings.retain(|_, r| !r.is_empty());
        out
    }
}
