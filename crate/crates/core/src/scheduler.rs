//! Composable packet-scheduling blocks: FIFO, strict priority, weighted
//! round robin (byte deficit round robin) and per-queue token buckets.
//!
//! Blocks form a tree. Each block has at most one outgoing edge, feeding one
//! input queue of its parent; the root block's output feeds the link.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::instruction::QueueParam;
use crate::model::FlowKey;
use crate::packetgen::WirePacket;
use crate::{SimTime, NANOS_PER_SEC};

/// Largest queue count of a non-per-flow block.
pub const MAX_QUEUES: u16 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BlockKind {
    Fifo,
    StrictPriority,
    Wrr,
    RateLimit,
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BlockKind::Fifo => "fifo",
            BlockKind::StrictPriority => "strict_priority",
            BlockKind::Wrr => "wrr",
            BlockKind::RateLimit => "rate_limit",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QueueCount {
    Fixed(u16),
    /// One queue per flow key, created on first use.
    PerFlow,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockSpec {
    pub id: u16,
    pub kind: BlockKind,
    pub queues: QueueCount,
    /// Per-queue priority; missing entries default to the queue index
    /// (per-flow queues default to 0).
    pub priorities: Vec<u8>,
    /// Per-queue weight; missing entries default to 1.
    pub weights: Vec<u32>,
    /// Per-queue rate in bytes per second; missing entries are unlimited.
    /// Per-flow queues take the first entry.
    pub rates: Vec<u64>,
    /// Deficit round-robin quantum in bytes per unit of weight. Defaults to
    /// one byte, so a visit releases at most one packet.
    pub quantum: Option<u64>,
    /// Token-bucket depth in bytes; defaults to two MSS.
    pub burst: Option<u64>,
}

impl BlockSpec {
    pub fn new(id: u16, kind: BlockKind, queues: QueueCount) -> Self {
        BlockSpec {
            id,
            kind,
            queues,
            priorities: Vec::new(),
            weights: Vec::new(),
            rates: Vec::new(),
            quantum: None,
            burst: None,
        }
    }

    pub fn priorities(mut self, p: &[u8]) -> Self {
        self.priorities = p.to_vec();
        self
    }

    pub fn weights(mut self, w: &[u32]) -> Self {
        self.weights = w.to_vec();
        self
    }

    pub fn rates(mut self, r: &[u64]) -> Self {
        self.rates = r.to_vec();
        self
    }

    pub fn quantum(mut self, q: u64) -> Self {
        self.quantum = Some(q);
        self
    }

    pub fn burst(mut self, b: u64) -> Self {
        self.burst = Some(b);
        self
    }
}

/// Output of block `from` feeds input queue `queue` of block `to`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub from: u16,
    pub to: u16,
    pub queue: u16,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SchedulerSpec {
    pub blocks: Vec<BlockSpec>,
    pub edges: Vec<Edge>,
    pub root: u16,
}

impl SchedulerSpec {
    /// A single root block.
    pub fn single(block: BlockSpec) -> Self {
        SchedulerSpec {
            root: block.id,
            blocks: alloc::vec![block],
            edges: Vec::new(),
        }
    }

    /// One FIFO queue.
    pub fn fifo() -> Self {
        Self::single(BlockSpec::new(0, BlockKind::Fifo, QueueCount::Fixed(1)))
    }
}

impl fmt::Display for SchedulerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn walk(s: &SchedulerSpec, f: &mut fmt::Formatter<'_>, id: u16, depth: usize, via: Option<u16>) -> fmt::Result {
            let Some(b) = s.blocks.iter().find(|b| b.id == id) else {
                return Ok(());
            };
            for _ in 0..depth {
                f.write_str("  ")?;
            }
            if let Some(q) = via {
                write!(f, "[q{q}] ")?;
            }
            write!(f, "block {} {}", b.id, b.kind)?;
            match b.queues {
                QueueCount::Fixed(n) => write!(f, " queues={n}")?,
                QueueCount::PerFlow => f.write_str(" queues=per_flow")?,
            }
            if !b.rates.is_empty() {
                write!(f, " rates={:?}", b.rates)?;
            }
            if !b.weights.is_empty() {
                write!(f, " weights={:?}", b.weights)?;
            }
            writeln!(f)?;
            for e in s.edges.iter().filter(|e| e.to == id) {
                walk(s, f, e.from, depth + 1, Some(e.queue))?;
            }
            Ok(())
        }
        walk(self, f, self.root, 0, None)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QueueSel {
    Index(u16),
    Flow(FlowKey),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QueueRef {
    pub block: u16,
    pub sel: QueueSel,
}

impl QueueRef {
    pub fn index(block: u16, q: u16) -> Self {
        QueueRef {
            block,
            sel: QueueSel::Index(q),
        }
    }

    pub fn flow(block: u16, key: FlowKey) -> Self {
        QueueRef {
            block,
            sel: QueueSel::Flow(key),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchedError {
    #[error("invalid scheduler composition: {reason} (block {block})")]
    InvalidComposition { block: u16, reason: &'static str },
    #[error("no scheduling block {0}")]
    UnknownBlock(u16),
    #[error("no queue {sel:?} in block {block}")]
    UnknownQueue { block: u16, sel: QueueSel },
    #[error("queue {sel:?} of block {block} is fed by another block")]
    NotLeafQueue { block: u16, sel: QueueSel },
    #[error("{param:?} is not supported by a {kind} block")]
    UnsupportedParam { kind: BlockKind, param: QueueParam },
}

fn invalid(block: u16, reason: &'static str) -> SchedError {
    SchedError::InvalidComposition { block, reason }
}

/// Checks the composition rules without building anything.
pub fn validate_spec(spec: &SchedulerSpec) -> Result<(), SchedError> {
    if spec.blocks.is_empty() {
        return Err(invalid(spec.root, "no blocks"));
    }
    let find = |id: u16| spec.blocks.iter().position(|b| b.id == id);
    for (i, b) in spec.blocks.iter().enumerate() {
        if spec.blocks[..i].iter().any(|o| o.id == b.id) {
            return Err(invalid(b.id, "duplicate block id"));
        }
        if let QueueCount::Fixed(n) = b.queues {
            if n == 0 || n > MAX_QUEUES {
                return Err(invalid(b.id, "queue count outside 1..=64"));
            }
            if b.priorities.len() > n as usize || b.weights.len() > n as usize || b.rates.len() > n as usize {
                return Err(invalid(b.id, "more queue parameters than queues"));
            }
        }
        if b.weights.contains(&0) {
            return Err(invalid(b.id, "zero weight"));
        }
    }
    if find(spec.root).is_none() {
        return Err(invalid(spec.root, "root block does not exist"));
    }
    for (i, e) in spec.edges.iter().enumerate() {
        let (Some(_), Some(to)) = (find(e.from), find(e.to)) else {
            return Err(invalid(e.from, "edge references a missing block"));
        };
        if e.from == e.to {
            return Err(invalid(e.from, "block feeds itself"));
        }
        match spec.blocks[to].queues {
            QueueCount::PerFlow => return Err(invalid(e.to, "per-flow block cannot be downstream of another block")),
            QueueCount::Fixed(n) if e.queue >= n => return Err(invalid(e.to, "edge targets a missing queue")),
            _ => {}
        }
        if spec.edges[..i].iter().any(|o| o.from == e.from) {
            return Err(invalid(e.from, "block output feeds more than one queue"));
        }
        if spec.edges[..i].iter().any(|o| o.to == e.to && o.queue == e.queue) {
            return Err(invalid(e.to, "queue fed by more than one block"));
        }
        if e.from == spec.root {
            return Err(invalid(e.from, "root block output must feed the link"));
        }
    }
    // every block must reach the root without revisiting a block
    for b in &spec.blocks {
        let mut cur = b.id;
        let mut steps = 0;
        while cur != spec.root {
            match spec.edges.iter().find(|e| e.from == cur) {
                Some(e) => cur = e.to,
                None => return Err(invalid(b.id, "block does not reach the root")),
            }
            steps += 1;
            if steps > spec.blocks.len() {
                return Err(invalid(b.id, "cycle"));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
struct Bucket {
    rate: u64,
    /// Tokens in byte-nanoseconds per second (bytes × 1e9).
    tokens: u128,
    cap: u128,
    last: SimTime,
}

impl Bucket {
    fn new(rate: u64, burst: u64) -> Self {
        let cap = burst as u128 * NANOS_PER_SEC as u128;
        Bucket {
            rate,
            tokens: cap,
            cap,
            last: 0,
        }
    }

    fn tokens_at(&self, now: SimTime) -> u128 {
        let dt = now.saturating_sub(self.last) as u128;
        (self.tokens + dt * self.rate as u128).min(self.cap)
    }

    fn settle(&mut self, now: SimTime) {
        if now > self.last {
            self.tokens = self.tokens_at(now);
            self.last = now;
        }
    }

    /// Packets larger than the bucket need a full bucket.
    fn cost(&self, len: u64) -> u128 {
        (len as u128 * NANOS_PER_SEC as u128).min(self.cap)
    }

    fn allows(&self, len: u64, now: SimTime) -> bool {
        self.tokens_at(now) >= self.cost(len)
    }

    fn take(&mut self, len: u64, now: SimTime) {
        self.settle(now);
        self.tokens -= self.cost(len);
    }

    /// Earliest time at or after `now` when `len` bytes are available.
    fn ready_at(&self, len: u64, now: SimTime) -> Option<SimTime> {
        let need = self.cost(len);
        let have = self.tokens_at(now);
        if have >= need {
            return Some(now);
        }
        if self.rate == 0 {
            return None;
        }
        let wait = (need - have).div_ceil(self.rate as u128);
        Some(now + wait as u64)
    }
}

#[derive(Clone, Debug)]
struct Queue {
    items: VecDeque<(u64, WirePacket)>,
    child: Option<usize>,
    prio: u8,
    weight: u32,
    deficit: u64,
    bucket: Option<Bucket>,
}

#[derive(Clone, Debug)]
struct Block {
    id: u16,
    kind: BlockKind,
    per_flow: bool,
    queues: Vec<Queue>,
    flows: BTreeMap<FlowKey, usize>,
    cursor: usize,
    quantum: u64,
    burst: u64,
    flow_rate: Option<u64>,
}

#[derive(Clone, Copy, Debug)]
struct Head {
    len: u64,
    seq: u64,
}

#[derive(Clone, Copy, Debug)]
struct Pick {
    q: usize,
    /// Deficit round-robin visits credited to the picked queue.
    rounds: u64,
    step: u64,
}

/// A built scheduler holding packets.
#[derive(Clone, Debug)]
pub struct Scheduler {
    blocks: Vec<Block>,
    root: usize,
    seq: u64,
    backlog: usize,
}

impl Scheduler {
    pub fn build(spec: &SchedulerSpec, mss: u64) -> Result<Scheduler, SchedError> {
        validate_spec(spec)?;
        let mut blocks: Vec<Block> = spec
            .blocks
            .iter()
            .map(|b| {
                let burst = b.burst.unwrap_or(2 * mss);
                let n = match b.queues {
                    QueueCount::Fixed(n) => n as usize,
                    QueueCount::PerFlow => 0,
                };
                let queues = (0..n)
                    .map(|i| Queue {
                        items: VecDeque::new(),
                        child: None,
                        prio: b.priorities.get(i).copied().unwrap_or(i as u8),
                        weight: b.weights.get(i).copied().unwrap_or(1),
                        deficit: 0,
                        bucket: match (b.kind, b.rates.get(i)) {
                            (BlockKind::RateLimit, Some(&r)) => Some(Bucket::new(r, burst)),
                            _ => None,
                        },
                    })
                    .collect();
                Block {
                    id: b.id,
                    kind: b.kind,
                    per_flow: b.queues == QueueCount::PerFlow,
                    queues,
                    flows: BTreeMap::new(),
                    cursor: 0,
                    quantum: b.quantum.unwrap_or(1).max(1),
                    burst,
                    flow_rate: b.rates.first().copied(),
                }
            })
            .collect();
        let idx = |id: u16| spec.blocks.iter().position(|b| b.id == id).unwrap();
        for e in &spec.edges {
            let (from, to) = (idx(e.from), idx(e.to));
            blocks[to].queues[e.queue as usize].child = Some(from);
        }
        Ok(Scheduler {
            root: idx(spec.root),
            blocks,
            seq: 0,
            backlog: 0,
        })
    }

    pub fn root_id(&self) -> u16 {
        self.blocks[self.root].id
    }

    /// Default queue for packets that name none: queue 0 of the root.
    pub fn default_queue(&self) -> QueueRef {
        QueueRef::index(self.root_id(), 0)
    }

    /// Packets held across all queues.
    pub fn backlog(&self) -> usize {
        self.backlog
    }

    fn block_index(&self, id: u16) -> Result<usize, SchedError> {
        self.blocks
            .iter()
            .position(|b| b.id == id)
            .ok_or(SchedError::UnknownBlock(id))
    }

    fn queue_index(&mut self, q: QueueRef) -> Result<(usize, usize), SchedError> {
        let b = self.block_index(q.block)?;
        let block = &mut self.blocks[b];
        let unknown = SchedError::UnknownQueue {
            block: q.block,
            sel: q.sel,
        };
        let qi = match (q.sel, block.per_flow) {
            (QueueSel::Index(i), false) if (i as usize) < block.queues.len() => i as usize,
            (QueueSel::Flow(key), true) => match block.flows.get(&key) {
                Some(&i) => i,
                None => {
                    let i = block.queues.len();
                    block.queues.push(Queue {
                        items: VecDeque::new(),
                        child: None,
                        prio: 0,
                        weight: 1,
                        deficit: 0,
                        bucket: match (block.kind, block.flow_rate) {
                            (BlockKind::RateLimit, Some(r)) => Some(Bucket::new(r, block.burst)),
                            _ => None,
                        },
                    });
                    block.flows.insert(key, i);
                    i
                }
            },
            _ => return Err(unknown),
        };
        Ok((b, qi))
    }

    pub fn enqueue(&mut self, q: QueueRef, pkt: WirePacket) -> Result<(), SchedError> {
        let (b, qi) = self.queue_index(q)?;
        let queue = &mut self.blocks[b].queues[qi];
        if queue.child.is_some() {
            return Err(SchedError::NotLeafQueue {
                block: q.block,
                sel: q.sel,
            });
        }
        self.seq += 1;
        queue.items.push_back((self.seq, pkt));
        self.backlog += 1;
        Ok(())
    }

    pub fn set_queue_param(&mut self, q: QueueRef, param: QueueParam, now: SimTime) -> Result<(), SchedError> {
        let (b, qi) = self.queue_index(q)?;
        let block = &mut self.blocks[b];
        let burst = block.burst;
        let queue = &mut block.queues[qi];
        match (block.kind, param) {
            (BlockKind::RateLimit, QueueParam::Rate(r)) => match &mut queue.bucket {
                Some(bucket) => {
                    bucket.settle(now);
                    bucket.rate = r;
                }
                None => {
                    let mut bucket = Bucket::new(r, burst);
                    bucket.last = now;
                    queue.bucket = Some(bucket);
                }
            },
            (BlockKind::StrictPriority, QueueParam::Priority(p)) => queue.prio = p,
            (BlockKind::Wrr, QueueParam::Weight(w)) if w > 0 => queue.weight = w,
            (kind, param) => return Err(SchedError::UnsupportedParam { kind, param }),
        }
        Ok(())
    }

    fn queue_head(&self, b: usize, qi: usize, now: SimTime) -> Option<Head> {
        let q = &self.blocks[b].queues[qi];
        let head = match q.child {
            Some(c) => self.head(c, now)?,
            None => {
                let (seq, p) = q.items.front()?;
                Head {
                    len: p.len() as u64,
                    seq: *seq,
                }
            }
        };
        match &q.bucket {
            Some(bucket) if !bucket.allows(head.len, now) => None,
            _ => Some(head),
        }
    }

    fn head(&self, b: usize, now: SimTime) -> Option<Head> {
        let pick = self.select(b, now)?;
        self.queue_head(b, pick.q, now)
    }

    fn select(&self, b: usize, now: SimTime) -> Option<Pick> {
        let block = &self.blocks[b];
        let heads = (0..block.queues.len()).filter_map(|qi| self.queue_head(b, qi, now).map(|h| (qi, h)));
        let simple = |q: usize| Pick { q, rounds: 0, step: 0 };
        match block.kind {
            BlockKind::Fifo | BlockKind::RateLimit => heads.min_by_key(|(_, h)| h.seq).map(|(q, _)| simple(q)),
            BlockKind::StrictPriority => heads
                .min_by_key(|(qi, _)| (block.queues[*qi].prio, *qi))
                .map(|(q, _)| simple(q)),
            BlockKind::Wrr => {
                let n = block.queues.len() as u64;
                let c = block.cursor;
                heads
                    .map(|(qi, h)| {
                        let q = &block.queues[qi];
                        let credit = block.quantum * q.weight as u64;
                        let mut rounds = if q.deficit >= h.len {
                            0
                        } else {
                            (h.len - q.deficit).div_ceil(credit)
                        };
                        let step = if qi == c {
                            rounds * n
                        } else {
                            rounds = rounds.max(1);
                            let pos = (qi as u64 + n - c as u64) % n;
                            pos + (rounds - 1) * n
                        };
                        Pick { q: qi, rounds, step }
                    })
                    .min_by_key(|p| p.step)
            }
        }
    }

    fn pop(&mut self, b: usize, now: SimTime) -> Option<WirePacket> {
        let pick = self.select(b, now)?;
        if self.blocks[b].kind == BlockKind::Wrr {
            self.credit_drr(b, pick, now);
        }
        let pkt = match self.blocks[b].queues[pick.q].child {
            Some(c) => self.pop(c, now)?,
            None => {
                let (_, p) = self.blocks[b].queues[pick.q].items.pop_front()?;
                self.backlog -= 1;
                p
            }
        };
        let len = pkt.len() as u64;
        let queue = &mut self.blocks[b].queues[pick.q];
        if let Some(bucket) = &mut queue.bucket {
            bucket.take(len, now);
        }
        if self.blocks[b].kind == BlockKind::Wrr {
            let block = &mut self.blocks[b];
            let q = &mut block.queues[pick.q];
            q.deficit -= len;
            block.cursor = pick.q;
            let empty = match q.child {
                Some(_) => false,
                None => q.items.is_empty(),
            };
            if empty {
                q.deficit = 0;
            }
        }
        Some(pkt)
    }

    /// Applies the quantum credits every backlogged queue collects while the
    /// round-robin pointer travels to the picked queue.
    fn credit_drr(&mut self, b: usize, pick: Pick, now: SimTime) {
        let n = self.blocks[b].queues.len() as u64;
        let c = self.blocks[b].cursor;
        let quantum = self.blocks[b].quantum;
        let backlogged: Vec<usize> = (0..self.blocks[b].queues.len())
            .filter(|&qi| qi != pick.q && self.queue_head(b, qi, now).is_some())
            .collect();
        for qi in backlogged {
            let visits = if qi == c {
                pick.step.saturating_sub(1) / n
            } else {
                let pos = (qi as u64 + n - c as u64) % n;
                if pick.step > pos {
                    (pick.step - pos).div_ceil(n)
                } else {
                    0
                }
            };
            let q = &mut self.blocks[b].queues[qi];
            q.deficit += visits * quantum * q.weight as u64;
        }
        let q = &mut self.blocks[b].queues[pick.q];
        q.deficit += pick.rounds * quantum * q.weight as u64;
    }

    /// Next packet the root releases at `now`, if any is eligible.
    pub fn dequeue(&mut self, now: SimTime) -> Option<WirePacket> {
        if self.backlog == 0 {
            return None;
        }
        self.pop(self.root, now)
    }

    /// Earliest time at or after `now` when a dequeue can succeed, or `None`
    /// when nothing is queued or every packet is blocked by a zero rate.
    pub fn next_eligible_time(&self, now: SimTime) -> Option<SimTime> {
        if self.backlog == 0 {
            return None;
        }
        self.block_ready(self.root, now)
    }

    fn block_ready(&self, b: usize, now: SimTime) -> Option<SimTime> {
        let block = &self.blocks[b];
        block
            .queues
            .iter()
            .filter_map(|q| {
                let (t, len) = match q.child {
                    Some(c) => {
                        let t = self.block_ready(c, now)?;
                        (t, self.head(c, t).map_or(0, |h| h.len))
                    }
                    None => (now, q.items.front()?.1.len() as u64),
                };
                match &q.bucket {
                    Some(bucket) => bucket.ready_at(len, t),
                    None => Some(t),
                }
            })
            .min()
    }
}

/// Builds a scheduler from `spec`.
pub fn build_scheduler(spec: &SchedulerSpec, mss: u64) -> Result<Scheduler, SchedError> {
    Scheduler::build(spec, mss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn pkt(tag: u8, len: usize) -> WirePacket {
        let mut body = vec![0u8; len.saturating_sub(16)];
        if let Some(b) = body.first_mut() {
            *b = tag;
        }
        WirePacket::new(0, 0, 0, 0, body)
    }

    fn tag(p: &WirePacket) -> u8 {
        p.transport[0]
    }

    fn sp(n: u16) -> SchedulerSpec {
        SchedulerSpec::single(BlockSpec::new(0, BlockKind::StrictPriority, QueueCount::Fixed(n)))
    }

    #[test]
    fn strict_priority_order() {
        let mut s = build_scheduler(&sp(2), 1460).unwrap();
        s.enqueue(QueueRef::index(0, 1), pkt(1, 100)).unwrap();
        s.enqueue(QueueRef::index(0, 0), pkt(0, 100)).unwrap();
        assert_eq!(tag(&s.dequeue(0).unwrap()), 0);
        assert_eq!(tag(&s.dequeue(0).unwrap()), 1);
        assert!(s.dequeue(0).is_none());
    }

    #[test]
    fn swapping_priorities_reverses_preference() {
        let mut s = build_scheduler(&sp(2), 1460).unwrap();
        s.set_queue_param(QueueRef::index(0, 0), QueueParam::Priority(1), 0).unwrap();
        s.set_queue_param(QueueRef::index(0, 1), QueueParam::Priority(0), 0).unwrap();
        s.enqueue(QueueRef::index(0, 0), pkt(0, 100)).unwrap();
        s.enqueue(QueueRef::index(0, 1), pkt(1, 100)).unwrap();
        assert_eq!(tag(&s.dequeue(0).unwrap()), 1);
    }

    #[test]
    fn unknown_queue_and_param_errors() {
        let mut s = build_scheduler(&sp(8), 1460).unwrap();
        assert!(matches!(
            s.enqueue(QueueRef::index(0, 9), pkt(0, 100)),
            Err(SchedError::UnknownQueue { .. })
        ));
        assert!(matches!(
            s.set_queue_param(QueueRef::index(0, 0), QueueParam::Weight(2), 0),
            Err(SchedError::UnsupportedParam { .. })
        ));
        assert!(matches!(s.enqueue(QueueRef::index(5, 0), pkt(0, 1)), Err(SchedError::UnknownBlock(5))));
    }

    #[test]
    fn per_flow_queue_created_on_first_use() {
        let spec = SchedulerSpec::single(BlockSpec::new(0, BlockKind::Wrr, QueueCount::PerFlow));
        let mut s = build_scheduler(&spec, 1460).unwrap();
        s.enqueue(QueueRef::flow(0, FlowKey::new(&[7])), pkt(7, 100)).unwrap();
        assert_eq!(tag(&s.dequeue(0).unwrap()), 7);
        assert!(matches!(
            s.enqueue(QueueRef::index(0, 0), pkt(0, 100)),
            Err(SchedError::UnknownQueue { .. })
        ));
    }

    #[test]
    fn fifo_is_arrival_order() {
        let spec = SchedulerSpec::single(BlockSpec::new(0, BlockKind::Fifo, QueueCount::Fixed(3)));
        let mut s = build_scheduler(&spec, 1460).unwrap();
        for (i, q) in [2u16, 0, 1, 0].iter().enumerate() {
            s.enqueue(QueueRef::index(0, *q), pkt(i as u8, 100)).unwrap();
        }
        let order: Vec<u8> = core::iter::from_fn(|| s.dequeue(0)).map(|p| tag(&p)).collect();
        assert_eq!(order, [0, 1, 2, 3]);
    }

    #[test]
    fn composition_rules() {
        let wrr = BlockSpec::new(1, BlockKind::Wrr, QueueCount::PerFlow);
        let spq = BlockSpec::new(0, BlockKind::StrictPriority, QueueCount::Fixed(2));
        let ok = SchedulerSpec {
            blocks: vec![spq.clone(), wrr.clone()],
            edges: vec![Edge { from: 1, to: 0, queue: 1 }],
            root: 0,
        };
        assert!(build_scheduler(&ok, 1460).is_ok());

        let into_per_flow = SchedulerSpec {
            blocks: vec![spq.clone(), wrr.clone()],
            edges: vec![Edge { from: 0, to: 1, queue: 0 }],
            root: 1,
        };
        assert!(matches!(
            validate_spec(&into_per_flow),
            Err(SchedError::InvalidComposition { reason, .. }) if reason.contains("per-flow")
        ));

        let a = BlockSpec::new(1, BlockKind::Fifo, QueueCount::Fixed(1));
        let b = BlockSpec::new(2, BlockKind::Fifo, QueueCount::Fixed(1));
        let cycle = SchedulerSpec {
            blocks: vec![spq.clone(), a, b],
            edges: vec![Edge { from: 1, to: 2, queue: 0 }, Edge { from: 2, to: 1, queue: 0 }],
            root: 0,
        };
        assert!(validate_spec(&cycle).is_err());

        let dangling = SchedulerSpec {
            blocks: vec![spq.clone()],
            edges: vec![Edge { from: 4, to: 0, queue: 0 }],
            root: 0,
        };
        assert!(validate_spec(&dangling).is_err());

        let too_many = SchedulerSpec::single(BlockSpec::new(0, BlockKind::Fifo, QueueCount::Fixed(65)));
        assert!(validate_spec(&too_many).is_err());
    }

    #[test]
    fn child_fed_queue_rejects_direct_enqueue() {
        let spec = SchedulerSpec {
            blocks: vec![
                BlockSpec::new(0, BlockKind::StrictPriority, QueueCount::Fixed(2)),
                BlockSpec::new(1, BlockKind::Fifo, QueueCount::Fixed(1)),
            ],
            edges: vec![Edge { from: 1, to: 0, queue: 0 }],
            root: 0,
        };
        let mut s = build_scheduler(&spec, 1460).unwrap();
        assert!(matches!(
            s.enqueue(QueueRef::index(0, 0), pkt(0, 10)),
            Err(SchedError::NotLeafQueue { .. })
        ));
        s.enqueue(QueueRef::index(1, 0), pkt(1, 100)).unwrap();
        s.enqueue(QueueRef::index(0, 1), pkt(2, 100)).unwrap();
        assert_eq!(tag(&s.dequeue(0).unwrap()), 1);
        assert_eq!(tag(&s.dequeue(0).unwrap()), 2);
    }

    fn rl(rate: u64) -> SchedulerSpec {
        SchedulerSpec::single(BlockSpec::new(0, BlockKind::RateLimit, QueueCount::Fixed(1)).rates(&[rate]))
    }

    /// Drains by repeatedly jumping to the next eligible time.
    fn release_times(s: &mut Scheduler, until: SimTime) -> Vec<(SimTime, u64)> {
        let mut now = 0;
        let mut out = Vec::new();
        while let Some(t) = s.next_eligible_time(now) {
            if t > until {
                break;
            }
            now = t;
            let p = s.dequeue(now).expect("eligible time must admit a packet");
            out.push((now, p.len() as u64));
        }
        out
    }

    #[test]
    fn token_bucket_burst_then_rate() {
        // 1 MB/s, burst of two 1000-byte packets
        let mut s = build_scheduler(&rl(1_000_000), 1000).unwrap();
        for _ in 0..10 {
            s.enqueue(QueueRef::index(0, 0), pkt(0, 1000)).unwrap();
        }
        let times: Vec<SimTime> = release_times(&mut s, u64::MAX).iter().map(|(t, _)| *t).collect();
        let expect: Vec<SimTime> = (0..10u64).map(|i| i.saturating_sub(1) * 1_000_000).collect();
        assert_eq!(times, expect);
        assert_eq!(times[9], 8_000_000);
    }

    #[test]
    fn rate_change_takes_effect() {
        let mut s = build_scheduler(&rl(1_000_000), 1000).unwrap();
        for _ in 0..2000 {
            s.enqueue(QueueRef::index(0, 0), pkt(0, 1000)).unwrap();
        }
        let first = release_times(&mut s, NANOS_PER_SEC).len();
        s.set_queue_param(QueueRef::index(0, 0), QueueParam::Rate(500_000), NANOS_PER_SEC)
            .unwrap();
        let mut now = NANOS_PER_SEC;
        let mut second = 0;
        while let Some(t) = s.next_eligible_time(now) {
            if t > 2 * NANOS_PER_SEC {
                break;
            }
            now = t;
            s.dequeue(now).unwrap();
            second += 1;
        }
        assert!((999..=1002).contains(&first), "{first}");
        assert!((499..=501).contains(&second), "{second}");
    }

    #[test]
    fn wrr_equal_weights_alternate() {
        let spec = SchedulerSpec::single(BlockSpec::new(0, BlockKind::Wrr, QueueCount::Fixed(3)));
        let mut s = build_scheduler(&spec, 1460).unwrap();
        for q in 0..3u16 {
            for _ in 0..50 {
                s.enqueue(QueueRef::index(0, q), pkt(q as u8, 1016)).unwrap();
            }
        }
        let mut counts = [0u32; 3];
        while let Some(p) = s.dequeue(0) {
            counts[tag(&p) as usize] += 1;
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            assert!(hi - lo <= 1, "{counts:?}");
        }
    }

    #[test]
    fn wrr_weights_share_bytes() {
        let spec = SchedulerSpec::single(
            BlockSpec::new(0, BlockKind::Wrr, QueueCount::Fixed(2))
                .weights(&[1, 3])
                .quantum(1000),
        );
        let mut s = build_scheduler(&spec, 1460).unwrap();
        for _ in 0..400 {
            s.enqueue(QueueRef::index(0, 0), pkt(0, 700)).unwrap();
            s.enqueue(QueueRef::index(0, 1), pkt(1, 300)).unwrap();
        }
        let mut bytes = [0u64; 2];
        for _ in 0..400 {
            let p = s.dequeue(0).unwrap();
            bytes[tag(&p) as usize] += p.len() as u64;
        }
        let ratio = bytes[1] as f64 / bytes[0] as f64;
        assert!((2.7..3.3).contains(&ratio), "{bytes:?}");
    }

    proptest! {
        #[test]
        fn strict_priority_never_inverts(ops in proptest::collection::vec((0u16..8, any::<bool>()), 1..400)) {
            let mut s = build_scheduler(&sp(8), 1460).unwrap();
            let mut depth = [0usize; 8];
            for (q, deq) in ops {
                if deq {
                    let got = s.dequeue(0);
                    match depth.iter().position(|d| *d > 0) {
                        Some(best) => {
                            let p = got.unwrap();
                            prop_assert_eq!(tag(&p) as usize, best);
                            depth[best] -= 1;
                        }
                        None => prop_assert!(got.is_none()),
                    }
                } else {
                    s.enqueue(QueueRef::index(0, q), pkt(q as u8, 64)).unwrap();
                    depth[q as usize] += 1;
                }
            }
        }

        #[test]
        fn work_conserving_without_rate_limits(
            kind in prop_oneof![Just(BlockKind::Fifo), Just(BlockKind::StrictPriority), Just(BlockKind::Wrr)],
            ops in proptest::collection::vec((0u16..4, 20usize..1500, any::<bool>()), 1..300),
        ) {
            let spec = SchedulerSpec::single(BlockSpec::new(0, kind, QueueCount::Fixed(4)));
            let mut s = build_scheduler(&spec, 1460).unwrap();
            let mut held = 0usize;
            for (q, len, deq) in ops {
                if deq {
                    let got = s.dequeue(0);
                    prop_assert_eq!(got.is_some(), held > 0);
                    if got.is_some() { held -= 1; }
                } else {
                    s.enqueue(QueueRef::index(0, q), pkt(0, len)).unwrap();
                    held += 1;
                }
            }
        }
    }
}
