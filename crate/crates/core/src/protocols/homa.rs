//! Homa-lite: receiver-driven message transport.
//!
//! A sender pushes the first `unscheduled` bytes of a message at a priority
//! chosen by message size, then waits for grants. Each receiver grants to
//! one message at a time, the one with the fewest remaining bytes, keeping
//! granted-but-unreceived bytes within a budget. Lost data is recovered by
//! receiver-initiated RESEND; a DONE packet lets the sender release the
//! message.
//!
//! Flow keys are `(laddr, raddr, msg_id)`. Sender and receiver state live in
//! separate contexts so a host can send and receive the same id.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::common::RangeSet;
use super::ProtocolParams;
use crate::impl_context;
use crate::instruction::{DataSize, Direction, Instruction, PktGen, Route, TimerOp, Uid};
use crate::model::{
    ByteRef, ChainCtx, ContextSpec, DispatchTable, Event, FlowKey, Granularity, Instructions,
    Processor, ProcessorError, TimerId,
};
use crate::packetgen::{
    verifies, Action, CoalescingRule, Cover, Expr, FieldRule, Guard, HeaderLayout, PacketBlueprint,
    PacketError, SegRule,
};
use crate::registry::{DeploySpec, EventSchedSpec, RawPacket};
use crate::scheduler::{BlockKind, BlockSpec, QueueCount, QueueRef, SchedulerSpec};
use crate::sim::{AppAdapter, AppNote, DeliveryKey, HostInfo, SendPlan, SendReq, SimError};
use crate::{SimTime, NANOS_PER_MILLI};

pub const HEADER: HeaderLayout = HeaderLayout::new(
    "homa",
    &[
        ("type", 8),
        ("prio", 8),
        ("checksum", 16),
        ("msg_id", 64),
        ("msg_len", 32),
        ("offset", 32),
        ("length", 32),
    ],
);

pub const DATA: u64 = 0;
pub const GRANT: u64 = 1;
pub const RESEND: u64 = 2;
pub const DONE: u64 = 3;

pub const TX_CTX: &str = "homa_tx";
pub const RX_CTX: &str = "homa_rx";
pub const GRANT_CTX: &str = "homa_grant";

pub const TX: Uid = Uid(0);
pub const RX: Uid = Uid(1);
pub const TX_TIMER: u16 = 0;
pub const RX_TIMER: u16 = 1;
pub const SEG_RULE: u16 = 1;

pub const TX_TIMEOUT: SimTime = 5 * NANOS_PER_MILLI;
pub const RX_TIMEOUT: SimTime = 2 * NANOS_PER_MILLI;

/// Priority of grants, resends and DONE packets.
pub const CONTROL_PRIO: u8 = 0;
/// Priority of all scheduled (granted) data.
pub const SCHED_PRIO: u8 = 7;
/// Upper message-size bounds for unscheduled priorities 1 to 6; larger
/// messages use 7.
pub const PRIO_CUTOFFS: [u64; 6] = [1_000, 5_000, 20_000, 60_000, 200_000, 500_000];

pub fn unsched_prio(msg_len: u64) -> u8 {
    PRIO_CUTOFFS
        .iter()
        .position(|c| msg_len <= *c)
        .map_or(SCHED_PRIO, |i| i as u8 + 1)
}

/// Outbound message state.
#[derive(Clone, Debug)]
pub struct HomaTx {
    pub laddr: u32,
    pub raddr: u32,
    pub msg_id: u64,
    pub mss: u32,
    pub unsched_limit: u64,
    pub msg_len: u64,
    /// Highest offset transmitted.
    pub sent: u64,
    /// Highest offset the receiver allows.
    pub granted: u64,
}

impl_context!(HomaTx {
    laddr: u32,
    raddr: u32,
    msg_id: u64,
    mss: u32,
    unsched_limit: u64,
    msg_len: u64,
    sent: u64,
    granted: u64,
});

/// Inbound message state.
#[derive(Clone, Debug)]
pub struct HomaRx {
    pub laddr: u32,
    pub raddr: u32,
    pub msg_id: u64,
    pub unsched_limit: u64,
    pub msg_len: u64,
    pub received: u64,
    pub complete: bool,
    pub ranges: RangeSet,
}

impl_context!(HomaRx {
    laddr: u32,
    raddr: u32,
    msg_id: u64,
    unsched_limit: u64,
    msg_len: u64,
    received: u64,
    complete: bool,
});

impl HomaRx {
    pub fn unsched(&self) -> u64 {
        self.msg_len.min(self.unsched_limit)
    }
}

/// A message that needs grants, as tracked by the receiver's grant state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Inbound {
    pub raddr: u32,
    pub msg_id: u64,
    pub msg_len: u64,
    pub received: u64,
    pub granted: u64,
    pub unsched: u64,
}

impl Inbound {
    pub fn remaining(&self) -> u64 {
        self.msg_len - self.received
    }

    /// Scheduled bytes granted but not yet received.
    pub fn outstanding(&self) -> u64 {
        self.granted.saturating_sub(self.received.max(self.unsched))
    }
}

/// Per-receiver grant scheduler.
#[derive(Clone, Debug)]
pub struct HomaGrant {
    pub budget: u64,
    pub mss: u32,
    pub grants: u64,
    pub active: BTreeMap<(u32, u64), Inbound>,
}

impl_context!(HomaGrant {
    budget: u64,
    mss: u32,
    grants: u64,
});

impl HomaGrant {
    pub fn outstanding(&self) -> u64 {
        self.active.values().map(Inbound::outstanding).sum()
    }

    /// Shortest remaining message; ties go to the lower id.
    pub fn top(&self) -> Option<Inbound> {
        self.active
            .values()
            .min_by_key(|m| (m.remaining(), m.msg_id, m.raddr))
            .copied()
    }

    pub fn granted(&self, raddr: u32, msg_id: u64) -> Option<u64> {
        self.active.get(&(raddr, msg_id)).map(|m| m.granted)
    }
}

fn key_of(laddr: u32, raddr: u32, msg_id: u64) -> FlowKey {
    FlowKey::new(&[laddr as u64, raddr as u64, msg_id])
}

fn header(ty: u64, prio: u8, msg_id: u64, msg_len: u64, offset: u64, length: u64) -> PacketBlueprint {
    HEADER
        .blueprint()
        .set("type", ty)
        .set("prio", prio as u64)
        .set("msg_id", msg_id)
        .set("msg_len", msg_len)
        .set("offset", offset)
        .set("length", length)
        .checksum("checksum", &[Cover::Header, Cover::Payload])
}

fn pkt(key: FlowKey, laddr: u32, raddr: u32, bp: PacketBlueprint, prio: u8) -> Instruction {
    let mut p = PktGen::new(key, Route { src: laddr, dst: raddr }, bp)
        .queue(QueueRef::index(0, prio as u16))
        .prio(prio);
    if matches!(p.bp.payload, crate::packetgen::Payload::Data(_)) {
        p = p.seg_rule(SEG_RULE);
    }
    Instruction::PktGen(p)
}

fn timer(key: FlowKey, tid: u16, op: TimerOp) -> Instruction {
    Instruction::Timer {
        flow: key,
        tid: TimerId(tid),
        op,
    }
}

impl HomaTx {
    fn key(&self) -> FlowKey {
        key_of(self.laddr, self.raddr, self.msg_id)
    }

    fn unsched(&self) -> u64 {
        self.msg_len.min(self.unsched_limit)
    }

    /// DATA packets for `[lo, hi)`.
    fn data(&self, lo: u64, hi: u64, prio: u8) -> Instruction {
        let bp = header(DATA, prio, self.msg_id, self.msg_len, lo, 0).data(TX, lo, hi - lo, self.mss as u64);
        pkt(self.key(), self.laddr, self.raddr, bp, prio)
    }

    fn prio_for(&self, lo: u64) -> u8 {
        if lo < self.unsched() {
            unsched_prio(self.msg_len)
        } else {
            SCHED_PRIO
        }
    }
}

fn h_send(cx: &mut ChainCtx<'_>) -> Result<(), ProcessorError> {
    let len = cx.event.field("msg_len")?;
    let data = cx.event.payload.unwrap_or(ByteRef::new(0, 0, 0));
    let t = cx.ctxs.create::<HomaTx>(TX_CTX, cx.event.flow, cx.out)?;
    t.msg_len = len;
    cx.out.push(Instruction::NewOrderedData {
        flow: t.key(),
        dir: Direction::Tx,
        size: DataSize::Finite(len),
        uid: TX,
        addr: None,
    });
    cx.out.push(Instruction::AddTxData {
        flow: t.key(),
        uid: TX,
        data,
    });
    let n = t.unsched();
    if n > 0 {
        cx.out.push(t.data(0, n, unsched_prio(len)));
    }
    t.sent = n;
    t.granted = n;
    cx.out.push(timer(t.key(), TX_TIMER, TimerOp::Start(TX_TIMEOUT)));
    Ok(())
}

fn h_on_grant(cx: &mut ChainCtx<'_>) -> Result<(), ProcessorError> {
    let granted = cx.event.field("offset")?;
    let Some(t) = cx.ctxs.get::<HomaTx>(TX_CTX)? else {
        return Ok(());
    };
    let g = granted.min(t.msg_len);
    if g <= t.granted {
        return Ok(());
    }
    t.granted = g;
    if g > t.sent {
        cx.out.push(t.data(t.sent, g, SCHED_PRIO));
        t.sent = g;
    }
    cx.out.push(timer(t.key(), TX_TIMER, TimerOp::Restart(TX_TIMEOUT)));
    Ok(())
}

fn h_on_resend(cx: &mut ChainCtx<'_>) -> Result<(), ProcessorError> {
    let lo = cx.event.field("offset")?;
    let len = cx.event.field("length")?;
    let Some(t) = cx.ctxs.get::<HomaTx>(TX_CTX)? else {
        return Ok(());
    };
    let hi = lo.saturating_add(len).min(t.msg_len);
    if hi <= lo {
        return Ok(());
    }
    cx.out.push(t.data(lo, hi, t.prio_for(lo)));
    t.granted = t.granted.max(hi);
    t.sent = t.sent.max(hi);
    cx.out.push(timer(t.key(), TX_TIMER, TimerOp::Restart(TX_TIMEOUT)));
    Ok(())
}

fn h_on_done(cx: &mut ChainCtx<'_>) -> Result<(), ProcessorError> {
    let Some(t) = cx.ctxs.get::<HomaTx>(TX_CTX)? else {
        return Ok(());
    };
    let key = t.key();
    cx.out.push(Instruction::TxFlush {
        flow: key,
        uid: TX,
        len: t.msg_len,
    });
    cx.out.push(timer(key, TX_TIMER, TimerOp::Stop));
    cx.ctxs.delete(TX_CTX, cx.out)
}

/// No DONE yet: resend the first packet so a receiver that never heard of
/// the message starts recovery.
fn h_tx_timeout(cx: &mut ChainCtx<'_>) -> Result<(), ProcessorError> {
    let Some(t) = cx.ctxs.get::<HomaTx>(TX_CTX)? else {
        return Ok(());
    };
    let hi = t.msg_len.min(t.mss as u64);
    if hi > 0 {
        cx.out.push(t.data(0, hi, t.prio_for(0)));
    }
    cx.out.push(timer(t.key(), TX_TIMER, TimerOp::Start(TX_TIMEOUT)));
    Ok(())
}

fn done_pkt(rx: &HomaRx) -> Instruction {
    let key = key_of(rx.laddr, rx.raddr, rx.msg_id);
    pkt(key, rx.laddr, rx.raddr, header(DONE, CONTROL_PRIO, rx.msg_id, rx.msg_len, 0, 0), CONTROL_PRIO)
}

fn h_on_data(cx: &mut ChainCtx<'_>) -> Result<(), ProcessorError> {
    let msg_len = cx.event.field("msg_len")?;
    let offset = cx.event.field("offset")?;
    let len = cx.event.field("data_len")?;
    let payload = cx.event.payload.unwrap_or(ByteRef::new(0, 0, 0));
    let key = cx.event.flow;
    if cx.ctxs.get::<HomaRx>(RX_CTX)?.is_none() {
        let r = cx.ctxs.create::<HomaRx>(RX_CTX, key, cx.out)?;
        r.msg_len = msg_len;
        cx.out.push(Instruction::NewOrderedData {
            flow: key,
            dir: Direction::Rx,
            size: DataSize::Finite(msg_len),
            uid: RX,
            addr: Some(0),
        });
    }
    let r = cx.ctxs.require::<HomaRx>(RX_CTX)?;
    if r.complete {
        cx.out.push(done_pkt(r));
        return Ok(());
    }
    let hi = offset.saturating_add(len).min(r.msg_len);
    if hi > offset && r.ranges.insert(offset, hi) > 0 {
        cx.out.push(Instruction::AddRxSegment {
            flow: key,
            uid: RX,
            offset,
            data: payload.slice(0, hi - offset),
        });
        r.received = r.ranges.total();
    }
    if r.received == r.msg_len {
        r.complete = true;
        cx.out.push(Instruction::RxFlushAndNotify {
            flow: key,
            uid: RX,
            len: r.msg_len,
            addr: 0,
        });
        cx.out.push(done_pkt(r));
        cx.out.push(timer(key, RX_TIMER, TimerOp::Stop));
    } else {
        cx.out.push(timer(key, RX_TIMER, TimerOp::Restart(RX_TIMEOUT)));
    }
    Ok(())
}

fn grant_pkt(laddr: u32, m: &Inbound) -> Instruction {
    let bp = header(GRANT, SCHED_PRIO, m.msg_id, m.msg_len, m.granted, 0);
    pkt(key_of(laddr, m.raddr, m.msg_id), laddr, m.raddr, bp, CONTROL_PRIO)
}

/// Updates this message's grant entry, then grants to the shortest
/// remaining message as far as the budget allows.
fn h_grant(cx: &mut ChainCtx<'_>) -> Result<(), ProcessorError> {
    let key = cx.event.flow;
    let laddr = key.part(0) as u32;
    if cx.ctxs.get::<HomaGrant>(GRANT_CTX)?.is_none() {
        let gk = key.prefix(1).ok_or(ProcessorError::Invalid("grant key"))?;
        cx.ctxs.create::<HomaGrant>(GRANT_CTX, gk, cx.out)?;
    }
    let (r, g) = cx.ctxs.pair::<HomaRx, HomaGrant>(RX_CTX, GRANT_CTX)?;
    let (r, g) = (r.ok_or(ProcessorError::MissingContext(RX_CTX))?, g.unwrap());
    let id = (r.raddr, r.msg_id);
    if r.complete {
        g.active.remove(&id);
    } else if r.msg_len > r.unsched() {
        let e = g.active.entry(id).or_insert(Inbound {
            raddr: r.raddr,
            msg_id: r.msg_id,
            msg_len: r.msg_len,
            received: 0,
            granted: r.unsched(),
            unsched: r.unsched(),
        });
        e.received = r.received;
    }
    grant_top(g, laddr, cx.out);
    Ok(())
}

fn grant_top(g: &mut HomaGrant, laddr: u32, out: &mut Instructions) {
    let Some(top) = g.top() else { return };
    let id = (top.raddr, top.msg_id);
    let others = g.outstanding() - top.outstanding();
    let room = g.budget.saturating_sub(others);
    let target = (top.received.max(top.unsched) + room).min(top.msg_len);
    if target <= top.granted || (target < top.msg_len && target < top.granted + g.mss as u64) {
        return;
    }
    let e = g.active.get_mut(&id).unwrap();
    e.granted = target;
    g.grants += 1;
    out.push(grant_pkt(laddr, e));
}

/// No progress: request the first missing granted range, or repeat the
/// grant if everything granted has arrived.
fn h_rx_timeout(cx: &mut ChainCtx<'_>) -> Result<(), ProcessorError> {
    let (r, g) = cx.ctxs.pair::<HomaRx, HomaGrant>(RX_CTX, GRANT_CTX)?;
    let Some(r) = r else { return Ok(()) };
    if r.complete {
        return Ok(());
    }
    let key = key_of(r.laddr, r.raddr, r.msg_id);
    let entry = g.and_then(|g| g.active.get(&(r.raddr, r.msg_id)).copied());
    let limit = entry.map_or(r.unsched(), |e| e.granted.max(e.unsched));
    if let Some((lo, hi)) = r.ranges.first_gap(0, limit) {
        let bp = header(RESEND, CONTROL_PRIO, r.msg_id, r.msg_len, lo, hi - lo);
        cx.out.push(pkt(key, r.laddr, r.raddr, bp, CONTROL_PRIO));
    } else if let Some(e) = entry.filter(|e| e.granted > e.unsched) {
        cx.out.push(grant_pkt(r.laddr, &e));
    }
    cx.out.push(timer(key, RX_TIMER, TimerOp::Start(RX_TIMEOUT)));
    Ok(())
}

pub fn parse(raw: &RawPacket<'_>) -> Result<Vec<Event>, PacketError> {
    if !verifies(raw.bytes) {
        return Err(PacketError::BadChecksum);
    }
    let h = HEADER.parse(raw.bytes)?;
    let key = key_of(raw.dst_addr, raw.src_addr, h.val("msg_id"));
    let hlen = HEADER.len();
    let data_len = raw.bytes.len() - hlen;
    let ev = match h.val("type") {
        DATA => Event::net("homa_data", key)
            .with("data_len", data_len as u64)
            .with_payload(raw.payload_ref(hlen, data_len)),
        GRANT => Event::net("homa_grant", key),
        RESEND => Event::net("homa_resend", key).with("length", h.val("length")),
        DONE => Event::net("homa_done", key),
        t => return Err(PacketError::UnknownType(t)),
    };
    Ok(vec![ev
        .with("msg_len", h.val("msg_len"))
        .with("offset", h.val("offset"))
        .with("prio", h.val("prio"))])
}

pub fn seg_rule() -> SegRule {
    SegRule::new(
        SEG_RULE,
        vec![FieldRule::new(
            "offset",
            Expr::Bp("offset"),
            Expr::running("offset"),
            Expr::running("offset"),
        )],
    )
}

pub fn dispatch_table() -> DispatchTable {
    DispatchTable::new()
        .chain("homa_send", &["h_send"])
        .chain("homa_grant", &["h_on_grant"])
        .chain("homa_resend", &["h_on_resend"])
        .chain("homa_done", &["h_on_done"])
        .chain("homa_tx_timeout", &["h_tx_timeout"])
        .chain("homa_data", &["h_on_data", "h_grant"])
        .chain("homa_rx_timeout", &["h_rx_timeout"])
}

pub fn processors() -> Vec<Processor> {
    let seg: &'static [u16] = &[SEG_RULE];
    let tx: &'static [u16] = &[TX_TIMER];
    let rx: &'static [u16] = &[RX_TIMER];
    vec![
        Processor::new("h_send", h_send).uses(seg, tx),
        Processor::new("h_on_grant", h_on_grant).uses(seg, tx),
        Processor::new("h_on_resend", h_on_resend).uses(seg, tx),
        Processor::new("h_on_done", h_on_done).uses(&[], tx),
        Processor::new("h_tx_timeout", h_tx_timeout).uses(seg, tx),
        Processor::new("h_on_data", h_on_data).uses(&[], rx),
        Processor::new("h_grant", h_grant),
        Processor::new("h_rx_timeout", h_rx_timeout).uses(&[], rx),
    ]
}

pub fn ctx_specs(params: &ProtocolParams) -> Vec<ContextSpec> {
    let (mss, unsched, budget) = (params.mss, params.tuning.homa_unscheduled, params.tuning.homa_budget);
    let part = |k: &FlowKey, i: usize| k.parts().get(i).copied().unwrap_or(0);
    vec![
        ContextSpec::new(TX_CTX, Granularity::PerFlow, move |k| {
            Box::new(HomaTx {
                laddr: part(k, 0) as u32,
                raddr: part(k, 1) as u32,
                msg_id: part(k, 2),
                mss,
                unsched_limit: unsched,
                msg_len: 0,
                sent: 0,
                granted: 0,
            })
        })
        .timer(TX_TIMER, "homa_tx_timeout"),
        ContextSpec::new(RX_CTX, Granularity::PerFlow, move |k| {
            Box::new(HomaRx {
                laddr: part(k, 0) as u32,
                raddr: part(k, 1) as u32,
                msg_id: part(k, 2),
                unsched_limit: unsched,
                msg_len: 0,
                received: 0,
                complete: false,
                ranges: RangeSet::new(),
            })
        })
        .timer(RX_TIMER, "homa_rx_timeout"),
        ContextSpec::new(GRANT_CTX, Granularity::Group(1), move |_| {
            Box::new(HomaGrant {
                budget,
                mss,
                grants: 0,
                active: BTreeMap::new(),
            })
        }),
    ]
}

pub fn deploy_spec(params: &ProtocolParams) -> DeploySpec {
    DeploySpec {
        name: "homa",
        flow_arity: 3,
        dispatch: dispatch_table(),
        processors: processors(),
        ctx_specs: ctx_specs(params),
        scratch: Vec::new(),
        parser: parse,
        seg_rules: vec![seg_rule()],
        coalescing: vec![CoalescingRule::new(&["type", "msg_id"], Guard::BothPayloadEmpty, Action::KeepNewest)],
        pkt_sched: SchedulerSpec::single(BlockSpec::new(0, BlockKind::StrictPriority, QueueCount::Fixed(8))),
        ev_sched: EventSchedSpec::Fifo,
        headers: vec![HEADER],
    }
}

/// Application glue: every send is a new message with a per-host id.
#[derive(Debug, Default)]
pub struct HomaApp {
    next_id: u64,
}

impl AppAdapter for HomaApp {
    fn on_start(&mut self, _host: &HostInfo<'_>) -> Vec<Event> {
        Vec::new()
    }

    fn on_send(&mut self, host: &HostInfo<'_>, req: &SendReq) -> Result<SendPlan, SimError> {
        let f = req.flow;
        if f.src_host != host.id {
            return Err(SimError::UnknownFlow(f.id));
        }
        self.next_id += 1;
        let id = self.next_id;
        Ok(SendPlan {
            events: vec![Event::app("homa_send", key_of(f.src_addr, f.dst_addr, id))
                .with("msg_len", req.bytes)
                .with_payload(req.data)],
            delivery: DeliveryKey {
                host: f.dst_host,
                flow: key_of(f.dst_addr, f.src_addr, id),
                uid: RX,
            },
            offset: 0,
        })
    }

    fn on_notify(&mut self, _host: &HostInfo<'_>, _note: &AppNote) -> Vec<Event> {
        Vec::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{dispatch, Contexts};
    use crate::packetgen::serialize;
    use crate::reassembly::ReassemblyError;

    fn run(ev: &Event, states: Vec<(&'static str, FlowKey, Box<dyn crate::model::Context>)>) -> (Vec<Instruction>, Contexts) {
        let spec = deploy_spec(&ProtocolParams::default());
        let procs = processors();
        let chain: Vec<Processor> = spec
            .dispatch
            .get(ev.ty)
            .unwrap()
            .iter()
            .map(|n| *procs.iter().find(|p| p.name == *n).unwrap())
            .collect();
        let mut ctxs = Contexts::from_states(&spec.ctx_specs, states);
        let out = dispatch(&chain, &spec.scratch, ev, &mut ctxs, 0).unwrap();
        (out, ctxs)
    }

    fn data_ranges(out: &[Instruction]) -> Vec<(u64, u64, u8)> {
        out.iter()
            .filter_map(Instruction::as_pkt_gen)
            .filter_map(|p| p.bp.data_ref().map(|d| (d.offset, d.len, p.prio)))
            .collect()
    }

    #[test]
    fn priorities_follow_size_classes() {
        assert_eq!(unsched_prio(500), 1);
        assert_eq!(unsched_prio(60_000), 4);
        assert_eq!(unsched_prio(300_000), 6);
        assert_eq!(unsched_prio(1_000_000), 7);
    }

    #[test]
    fn send_pushes_unscheduled_prefix() {
        let ev = Event::app("homa_send", key_of(1, 2, 7)).with("msg_len", 200_000);
        let (out, ctxs) = run(&ev, vec![]);
        assert_eq!(data_ranges(&out), vec![(0, 60_000, 5)]);
        let t = ctxs.peek::<HomaTx>(TX_CTX).unwrap();
        assert_eq!((t.sent, t.granted), (60_000, 60_000));
    }

    #[test]
    fn stale_grant_without_context_is_a_no_op() {
        let ev = Event::net("homa_grant", key_of(1, 2, 7)).with("offset", 90_000);
        let (out, _) = run(&ev, vec![]);
        assert!(out.is_empty());
    }

    fn rx_state(id: u64, len: u64, received: u64) -> HomaRx {
        let mut ranges = RangeSet::new();
        ranges.insert(0, received);
        HomaRx {
            laddr: 2,
            raddr: 1,
            msg_id: id,
            unsched_limit: 60_000,
            msg_len: len,
            received,
            complete: false,
            ranges,
        }
    }

    #[test]
    fn grants_go_to_shortest_remaining_within_budget() {
        let mut g = HomaGrant { budget: 60_000, mss: 1460, grants: 0, active: BTreeMap::new() };
        let long = Inbound { raddr: 1, msg_id: 1, msg_len: 1_000_000, received: 60_000, granted: 100_000, unsched: 60_000 };
        g.active.insert((1, 1), long);
        let ev = Event::net("homa_data", key_of(2, 1, 2))
            .with("msg_len", 200_000)
            .with("offset", 58_540)
            .with("data_len", 1460);
        let rx = rx_state(2, 200_000, 58_540);
        let (out, ctxs) = run(
            &ev,
            vec![
                (RX_CTX, key_of(2, 1, 2), Box::new(rx)),
                (GRANT_CTX, FlowKey::new(&[2]), Box::new(g)),
            ],
        );
        let grants: Vec<_> = out
            .iter()
            .filter_map(Instruction::as_pkt_gen)
            .filter(|p| p.bp.get("type") == Some(GRANT))
            .collect();
        assert_eq!(grants.len(), 1);
        assert_eq!(grants[0].bp.get("msg_id"), Some(2));
        // 40 000 bytes of the long message are still outstanding.
        assert_eq!(grants[0].bp.get("offset"), Some(60_000 + 20_000));
        let g = ctxs.peek::<HomaGrant>(GRANT_CTX).unwrap();
        assert!(g.outstanding() <= g.budget);
    }

    #[test]
    fn completion_flushes_and_sends_done() {
        let ev = Event::net("homa_data", key_of(2, 1, 3))
            .with("msg_len", 1000)
            .with("offset", 0)
            .with("data_len", 1000);
        let (out, _) = run(&ev, vec![]);
        assert!(out.contains(&Instruction::RxFlushAndNotify { flow: key_of(2, 1, 3), uid: RX, len: 1000, addr: 0 }));
        assert!(out
            .iter()
            .filter_map(Instruction::as_pkt_gen)
            .any(|p| p.bp.get("type") == Some(DONE)));
    }

    #[test]
    fn rx_timeout_requests_first_gap() {
        let mut rx = rx_state(4, 100_000, 10_000);
        rx.ranges.insert(20_000, 60_000);
        rx.received = rx.ranges.total();
        let ev = Event::timer("homa_rx_timeout", key_of(2, 1, 4));
        let (out, _) = run(&ev, vec![(RX_CTX, key_of(2, 1, 4), Box::new(rx))]);
        let p = out.iter().find_map(Instruction::as_pkt_gen).unwrap();
        assert_eq!(p.bp.get("type"), Some(RESEND));
        assert_eq!((p.bp.get("offset"), p.bp.get("length")), (Some(10_000), Some(10_000)));
    }

    #[test]
    fn header_round_trips_through_parser() {
        let ins = pkt(key_of(1, 2, 9), 1, 2, header(DATA, 3, 9, 4000, 1460, 0).data(TX, 1460, 4, 1460), 3);
        let p = ins.as_pkt_gen().unwrap();
        let mut src = |_u: Uid, _o: u64, l: u64| -> Result<Vec<u8>, ReassemblyError> { Ok(vec![0xab; l as usize]) };
        let s = serialize(&p.bp, &mut src).unwrap();
        assert_eq!(s.hdr_len, 24);
        let raw = RawPacket { bytes: &s.bytes, buf: 1, src_host: 1, dst_host: 2, src_addr: 1, dst_addr: 2 };
        let ev = &parse(&raw).unwrap()[0];
        assert_eq!(ev.ty, "homa_data");
        assert_eq!(ev.flow, key_of(2, 1, 9));
        assert_eq!((ev.get("msg_len"), ev.get("offset"), ev.get("data_len")), (Some(4000), Some(1460), Some(4)));
        let mut bad = s.bytes.clone();
        bad[0] = 9;
        assert!(parse(&RawPacket { bytes: &bad, ..raw }).is_err());
    }
}
