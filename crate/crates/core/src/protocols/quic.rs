//! QUIC-Lite: independent byte streams multiplexed on one connection.
//!
//! Every packet carries a fresh packet number, cumulative-plus-bitmap ack
//! information and a list of stream frames. Lost frames are detected by a
//! packet-number gap of three or by a probe timeout, and go back into their
//! stream's retransmission set. New data is scheduled round-robin across
//! streams with a fixed byte quantum per turn, so a loss or a long transfer
//! on one stream never holds back another stream's delivery.
//!
//! Flow keys are `(laddr, raddr, conn_id)`; stream `s` uses ordered data
//! unit `2s` for sending and `2s + 1` for receiving.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::common::RangeSet;
use super::ProtocolParams;
use crate::impl_context;
use crate::instruction::{DataSize, Direction, Instruction, PktGen, Route, TimerOp, Uid};
use crate::model::{
    ByteRef, ChainCtx, ContextSpec, Contexts, DispatchTable, Event, FlowKey, Granularity,
    Instructions, Processor, ProcessorError, TimerId,
};
use crate::packetgen::{
    verifies, Action, CoalescingRule, Cover, Guard, HeaderLayout, PacketBlueprint, PacketError,
};
use crate::registry::{DeploySpec, EventSchedSpec, RawPacket};
use crate::scheduler::SchedulerSpec;
use crate::sim::{AppAdapter, AppNote, DeliveryKey, HostInfo, SendPlan, SendReq, SimError};
use crate::{SimTime, NANOS_PER_MILLI, NANOS_PER_SEC};

pub const HEADER: HeaderLayout = HeaderLayout::new(
    "quic",
    &[
        ("type", 8),
        ("flags", 8),
        ("checksum", 16),
        ("conn_id", 32),
        ("pn", 64),
        ("ack_cum", 64),
        ("ack_largest", 64),
        ("ack_bits", 64),
    ],
);

pub const FRAME: HeaderLayout = HeaderLayout::new("quic_stream", &[("stream_id", 32), ("offset", 64), ("len", 32)]);

pub const SHORT: u64 = 1;
/// The packet carries ack information.
pub const HAS_ACK: u64 = 0x01;

pub const CTX: &str = "quic_conn";
pub const PTO_TIMER: u16 = 0;
/// Packets this far below the largest acked one are declared lost.
pub const PACKET_THRESHOLD: u64 = 3;
pub const INITIAL_PTO: SimTime = 10 * NANOS_PER_MILLI;
pub const MAX_PTO: SimTime = 60 * NANOS_PER_SEC;
const PTO_GRANULARITY: SimTime = NANOS_PER_MILLI;

pub fn tx_uid(stream: u64) -> Uid {
    Uid(2 * stream)
}

pub fn rx_uid(stream: u64) -> Uid {
    Uid(2 * stream + 1)
}

#[derive(Clone, Debug, Default)]
pub struct TxStream {
    /// Bytes handed over by the application.
    pub end: u64,
    /// Next never-sent offset.
    pub next: u64,
    /// Acked prefix already released.
    pub flushed: u64,
    pub acked: RangeSet,
    /// Ranges declared lost and not yet resent.
    pub lost: RangeSet,
}

#[derive(Clone, Debug, Default)]
pub struct RxStream {
    pub ranges: RangeSet,
    pub flushed: u64,
}

#[derive(Clone, Debug)]
pub struct SentPkt {
    pub time: SimTime,
    pub bytes: u64,
    /// `(stream, offset, len)`.
    pub frames: Vec<(u64, u64, u64)>,
}

/// Connection state; both endpoints hold one.
#[derive(Clone, Debug)]
pub struct QuicConn {
    pub laddr: u32,
    pub raddr: u32,
    pub conn_id: u64,
    pub mss: u32,
    pub quantum: u64,
    pub next_pn: u64,
    pub cwnd: u64,
    pub ssthresh: u64,
    pub in_flight: u64,
    pub largest_acked: u64,
    /// Losses of packets up to this number belong to the current
    /// reduction.
    pub recovery_pn: u64,
    pub srtt: u64,
    pub rttvar: u64,
    pub has_rtt: bool,
    pub pto_count: u32,
    pub timer_on: bool,
    /// Stream whose round-robin turn is in progress.
    pub rr_stream: u64,
    pub rr_used: u64,
    pub tx: BTreeMap<u64, TxStream>,
    pub sent: BTreeMap<u64, SentPkt>,
    pub rx: BTreeMap<u64, RxStream>,
    pub recv_pns: RangeSet,
}

impl_context!(QuicConn {
    laddr: u32,
    raddr: u32,
    conn_id: u64,
    mss: u32,
    quantum: u64,
    next_pn: u64,
    cwnd: u64,
    ssthresh: u64,
    in_flight: u64,
    largest_acked: u64,
    recovery_pn: u64,
    srtt: u64,
    rttvar: u64,
    has_rtt: bool,
    pto_count: u32,
    timer_on: bool,
    rr_stream: u64,
    rr_used: u64,
});

impl QuicConn {
    pub fn fresh(mss: u32, quantum: u64, key: &FlowKey) -> QuicConn {
        let part = |i: usize| key.parts().get(i).copied().unwrap_or(0);
        QuicConn {
            laddr: part(0) as u32,
            raddr: part(1) as u32,
            conn_id: part(2),
            mss,
            quantum,
            next_pn: 1,
            cwnd: 10 * mss as u64,
            ssthresh: u64::MAX / 2,
            in_flight: 0,
            largest_acked: 0,
            recovery_pn: 0,
            srtt: 0,
            rttvar: 0,
            has_rtt: false,
            pto_count: 0,
            timer_on: false,
            rr_stream: 0,
            rr_used: 0,
            tx: BTreeMap::new(),
            sent: BTreeMap::new(),
            rx: BTreeMap::new(),
            recv_pns: RangeSet::new(),
        }
    }

    pub fn key(&self) -> FlowKey {
        FlowKey::new(&[self.laddr as u64, self.raddr as u64, self.conn_id])
    }

    pub fn pto(&self) -> SimTime {
        let base = if self.has_rtt {
            self.srtt + (4 * self.rttvar).max(PTO_GRANULARITY)
        } else {
            INITIAL_PTO
        };
        base.saturating_mul(1 << self.pto_count.min(16)).min(MAX_PTO)
    }

    fn sample_rtt(&mut self, r: u64) {
        if self.has_rtt {
            self.rttvar = (3 * self.rttvar + self.srtt.abs_diff(r)) / 4;
            self.srtt = (7 * self.srtt + r) / 8;
        } else {
            self.srtt = r;
            self.rttvar = r / 2;
            self.has_rtt = true;
        }
    }

    /// `(flags, ack_cum, ack_largest, ack_bits)`; bit `i` stands for packet
    /// `ack_largest - 1 - i`.
    pub fn ack_info(&self) -> (u64, u64, u64, u64) {
        let Some(max) = self.recv_pns.max() else {
            return (0, 0, 0, 0);
        };
        let cum = self.recv_pns.run_end(1).saturating_sub(1);
        let largest = max - 1;
        let mut bits = 0u64;
        for i in 0..largest.min(64) {
            if self.recv_pns.contains(largest - 1 - i) {
                bits |= 1 << i;
            }
        }
        (HAS_ACK, cum, largest, bits)
    }

    fn header(&self, pn: u64) -> PacketBlueprint {
        let (flags, cum, largest, bits) = self.ack_info();
        HEADER
            .blueprint()
            .set("type", SHORT)
            .set("flags", flags)
            .set("conn_id", self.conn_id)
            .set("pn", pn)
            .set("ack_cum", cum)
            .set("ack_largest", largest)
            .set("ack_bits", bits)
            .checksum("checksum", &[Cover::Header, Cover::Payload])
    }

    fn packet(&self, bp: PacketBlueprint) -> Instruction {
        Instruction::PktGen(PktGen::new(
            self.key(),
            Route {
                src: self.laddr,
                dst: self.raddr,
            },
            bp,
        ))
    }

    fn timer(&self, op: TimerOp) -> Instruction {
        Instruction::Timer {
            flow: self.key(),
            tid: TimerId(PTO_TIMER),
            op,
        }
    }

    /// Next stream with unsent data, continuing the current turn if the
    /// quantum allows.
    fn rr_pick(&mut self) -> Option<u64> {
        let pending = |t: &TxStream| t.next < t.end;
        if self.rr_used < self.quantum && self.tx.get(&self.rr_stream).is_some_and(pending) {
            return Some(self.rr_stream);
        }
        let after = self
            .tx
            .range(self.rr_stream + 1..)
            .chain(self.tx.range(..=self.rr_stream))
            .find(|(_, t)| pending(t))
            .map(|(s, _)| *s)?;
        self.rr_stream = after;
        self.rr_used = 0;
        Some(after)
    }

    /// Fills one packet's worth of frames: lost ranges first, then new data.
    fn fill(&mut self) -> Vec<(u64, u64, u64)> {
        let hdr = FRAME.len() as u64;
        let mut cap = self.mss as u64;
        let mut frames = Vec::new();
        while cap > hdr {
            let Some((s, lo, hi)) = self
                .tx
                .iter()
                .find_map(|(s, t)| t.lost.first().map(|(lo, hi)| (*s, lo, hi)))
            else {
                break;
            };
            let t = self.tx.get_mut(&s).unwrap();
            let n = (hi - lo).min(cap - hdr);
            t.lost.remove(lo, lo + n);
            let lo2 = lo.max(t.flushed);
            if lo2 >= lo + n || t.acked.first_gap(lo2, lo + n).is_none() {
                continue;
            }
            frames.push((s, lo2, lo + n - lo2));
            cap -= hdr + lo + n - lo2;
        }
        while cap > hdr {
            let Some(s) = self.rr_pick() else { break };
            let quantum_left = self.quantum - self.rr_used;
            let t = self.tx.get_mut(&s).unwrap();
            let n = (t.end - t.next).min(cap - hdr).min(quantum_left);
            frames.push((s, t.next, n));
            t.next += n;
            self.rr_used += n;
            cap -= hdr + n;
        }
        frames
    }

    fn declare_lost(&mut self, pkt: &SentPkt) {
        self.in_flight = self.in_flight.saturating_sub(pkt.bytes);
        for &(s, off, len) in &pkt.frames {
            if let Some(t) = self.tx.get_mut(&s) {
                t.lost.insert(off, off + len);
            }
        }
    }

    fn on_congestion(&mut self, pn: u64) {
        if pn > self.recovery_pn {
            self.ssthresh = (self.cwnd / 2).max(2 * self.mss as u64);
            self.cwnd = self.ssthresh;
            self.recovery_pn = self.next_pn - 1;
        }
    }
}

fn conn<'a>(ctxs: &'a mut Contexts, key: FlowKey, out: &mut Instructions) -> Result<&'a mut QuicConn, ProcessorError> {
    if ctxs.get::<QuicConn>(CTX)?.is_none() {
        return ctxs.create::<QuicConn>(CTX, key, out);
    }
    ctxs.require::<QuicConn>(CTX)
}

fn q_record(cx: &mut ChainCtx<'_>) -> Result<(), ProcessorError> {
    let s = cx.event.field("stream")?;
    let len = cx.event.field("len")?;
    let data = cx.event.payload.unwrap_or(ByteRef::new(0, 0, 0));
    let c = conn(cx.ctxs, cx.event.flow, cx.out)?;
    if !c.tx.contains_key(&s) {
        cx.out.push(Instruction::NewOrderedData {
            flow: c.key(),
            dir: Direction::Tx,
            size: DataSize::Infinite,
            uid: tx_uid(s),
            addr: None,
        });
        c.tx.insert(s, TxStream::default());
    }
    cx.out.push(Instruction::AddTxData {
        flow: c.key(),
        uid: tx_uid(s),
        data,
    });
    c.tx.get_mut(&s).unwrap().end += len;
    Ok(())
}

/// Sends packets while the congestion window has room for a full one.
fn q_send(cx: &mut ChainCtx<'_>) -> Result<(), ProcessorError> {
    let now = cx.now;
    let Some(c) = cx.ctxs.get::<QuicConn>(CTX)? else {
        return Ok(());
    };
    while c.in_flight + c.mss as u64 <= c.cwnd {
        let frames = c.fill();
        if frames.is_empty() {
            break;
        }
        let pn = c.next_pn;
        c.next_pn += 1;
        let bps: Vec<PacketBlueprint> = frames
            .iter()
            .map(|&(s, off, len)| {
                FRAME
                    .blueprint()
                    .set("stream_id", s)
                    .set("offset", off)
                    .set("len", len)
                    .data(tx_uid(s), off, len, len)
            })
            .collect();
        let bytes = bps.iter().map(PacketBlueprint::wire_len).sum();
        cx.out.push(c.packet(c.header(pn).nested(bps)));
        c.in_flight += bytes;
        c.sent.insert(pn, SentPkt { time: now, bytes, frames });
    }
    if !c.sent.is_empty() && !c.timer_on {
        cx.out.push(c.timer(TimerOp::Start(c.pto())));
        c.timer_on = true;
    }
    Ok(())
}

fn q_on_ack(cx: &mut ChainCtx<'_>) -> Result<(), ProcessorError> {
    let cum = cx.event.field("ack_cum")?;
    let largest = cx.event.field("ack_largest")?;
    let bits = cx.event.field("ack_bits")?;
    let now = cx.now;
    let Some(c) = cx.ctxs.get::<QuicConn>(CTX)? else {
        return Ok(());
    };
    let acked: Vec<u64> = c
        .sent
        .keys()
        .copied()
        .filter(|&pn| pn <= cum || pn == largest || (pn < largest && largest - 1 - pn < 64 && bits >> (largest - 1 - pn) & 1 == 1))
        .collect();
    for pn in &acked {
        let p = c.sent.remove(pn).unwrap();
        if *pn == largest {
            c.sample_rtt(now.saturating_sub(p.time));
        }
        c.in_flight = c.in_flight.saturating_sub(p.bytes);
        for &(s, off, len) in &p.frames {
            if let Some(t) = c.tx.get_mut(&s) {
                t.acked.insert(off, off + len);
                t.lost.remove(off, off + len);
            }
        }
        if *pn > c.recovery_pn {
            if c.cwnd < c.ssthresh {
                c.cwnd += p.bytes;
            } else {
                c.cwnd += (c.mss as u64 * p.bytes / c.cwnd.max(1)).max(1);
            }
        }
    }
    if !acked.is_empty() {
        c.pto_count = 0;
    }
    c.largest_acked = c.largest_acked.max(largest);
    let lost: Vec<u64> = c
        .sent
        .keys()
        .copied()
        .take_while(|pn| pn + PACKET_THRESHOLD <= c.largest_acked)
        .collect();
    for pn in lost {
        let p = c.sent.remove(&pn).unwrap();
        c.declare_lost(&p);
        c.on_congestion(pn);
    }
    let key = c.key();
    for (s, t) in c.tx.iter_mut() {
        let prefix = t.acked.run_end(t.flushed);
        if prefix > t.flushed {
            cx.out.push(Instruction::TxFlush {
                flow: key,
                uid: tx_uid(*s),
                len: prefix - t.flushed,
            });
            t.flushed = prefix;
        }
    }
    if c.sent.is_empty() {
        if c.timer_on {
            cx.out.push(c.timer(TimerOp::Stop));
            c.timer_on = false;
        }
    } else {
        cx.out.push(c.timer(TimerOp::Restart(c.pto())));
        c.timer_on = true;
    }
    Ok(())
}

/// Probe timeout: everything outstanding is treated as lost.
fn q_on_timeout(cx: &mut ChainCtx<'_>) -> Result<(), ProcessorError> {
    let Some(c) = cx.ctxs.get::<QuicConn>(CTX)? else {
        return Ok(());
    };
    c.timer_on = false;
    if c.sent.is_empty() {
        return Ok(());
    }
    c.pto_count += 1;
    for p in core::mem::take(&mut c.sent).into_values() {
        c.declare_lost(&p);
    }
    c.in_flight = 0;
    c.ssthresh = (c.cwnd / 2).max(2 * c.mss as u64);
    c.cwnd = 2 * c.mss as u64;
    c.recovery_pn = c.next_pn - 1;
    Ok(())
}

fn q_on_frame(cx: &mut ChainCtx<'_>) -> Result<(), ProcessorError> {
    let s = cx.event.field("stream")?;
    let off = cx.event.field("offset")?;
    let len = cx.event.field("len")?;
    let payload = cx.event.payload.unwrap_or(ByteRef::new(0, 0, 0));
    let c = conn(cx.ctxs, cx.event.flow, cx.out)?;
    let key = c.key();
    let st = c.rx.entry(s).or_insert_with(|| {
        cx.out.push(Instruction::NewOrderedData {
            flow: key,
            dir: Direction::Rx,
            size: DataSize::Infinite,
            uid: rx_uid(s),
            addr: Some(0),
        });
        RxStream::default()
    });
    let hi = off + len;
    if len == 0 || hi <= st.flushed {
        return Ok(());
    }
    st.ranges.insert(off.max(st.flushed), hi);
    cx.out.push(Instruction::AddRxSegment {
        flow: key,
        uid: rx_uid(s),
        offset: off,
        data: payload,
    });
    let prefix = st.ranges.run_end(st.flushed);
    if prefix > st.flushed {
        cx.out.push(Instruction::RxFlushAndNotify {
            flow: key,
            uid: rx_uid(s),
            len: prefix - st.flushed,
            addr: st.flushed,
        });
        st.flushed = prefix;
    }
    Ok(())
}

/// Records the packet number and acknowledges immediately.
fn q_on_pkt(cx: &mut ChainCtx<'_>) -> Result<(), ProcessorError> {
    let pn = cx.event.field("pn")?;
    let c = conn(cx.ctxs, cx.event.flow, cx.out)?;
    if pn == 0 {
        return Ok(());
    }
    c.recv_pns.insert(pn, pn + 1);
    cx.out.push(c.packet(c.header(0)));
    Ok(())
}

pub fn parse(raw: &RawPacket<'_>) -> Result<Vec<Event>, PacketError> {
    if !verifies(raw.bytes) {
        return Err(PacketError::BadChecksum);
    }
    let h = HEADER.parse(raw.bytes)?;
    if h.val("type") != SHORT {
        return Err(PacketError::UnknownType(h.val("type")));
    }
    let key = FlowKey::new(&[raw.dst_addr as u64, raw.src_addr as u64, h.val("conn_id")]);
    let mut out = Vec::new();
    if h.val("flags") & HAS_ACK != 0 {
        out.push(
            Event::net("quic_ack", key)
                .with("ack_cum", h.val("ack_cum"))
                .with("ack_largest", h.val("ack_largest"))
                .with("ack_bits", h.val("ack_bits")),
        );
    }
    let mut pos = HEADER.len();
    while pos < raw.bytes.len() {
        let f = FRAME.parse(&raw.bytes[pos..])?;
        let start = pos + FRAME.len();
        let len = f.val("len") as usize;
        if start + len > raw.bytes.len() {
            return Err(PacketError::LengthMismatch {
                declared: start + len,
                actual: raw.bytes.len(),
            });
        }
        out.push(
            Event::net("quic_frame", key)
                .with("stream", f.val("stream_id"))
                .with("offset", f.val("offset"))
                .with("len", len as u64)
                .with_payload(raw.payload_ref(start, len)),
        );
        pos = start + len;
    }
    let pn = h.val("pn");
    if pn != 0 {
        out.push(Event::net("quic_pkt", key).with("pn", pn));
    }
    Ok(out)
}

pub fn dispatch_table() -> DispatchTable {
    DispatchTable::new()
        .chain("quic_send", &["q_record", "q_send"])
        .chain("quic_ack", &["q_on_ack", "q_send"])
        .chain("quic_frame", &["q_on_frame"])
        .chain("quic_pkt", &["q_on_pkt"])
        .chain("quic_timeout", &["q_on_timeout", "q_send"])
}

pub fn processors() -> Vec<Processor> {
    let tmr: &'static [u16] = &[PTO_TIMER];
    vec![
        Processor::new("q_record", q_record),
        Processor::new("q_send", q_send).uses(&[], tmr),
        Processor::new("q_on_ack", q_on_ack).uses(&[], tmr),
        Processor::new("q_on_frame", q_on_frame),
        Processor::new("q_on_pkt", q_on_pkt),
        Processor::new("q_on_timeout", q_on_timeout),
    ]
}

pub fn deploy_spec(params: &ProtocolParams) -> DeploySpec {
    let (mss, quantum) = (params.mss, params.tuning.quic_quantum);
    DeploySpec {
        name: "quic",
        flow_arity: 3,
        dispatch: dispatch_table(),
        processors: processors(),
        ctx_specs: vec![ContextSpec::new(CTX, Granularity::PerFlow, move |k| {
            Box::new(QuicConn::fresh(mss, quantum, k))
        })
        .timer(PTO_TIMER, "quic_timeout")],
        scratch: Vec::new(),
        parser: parse,
        seg_rules: Vec::new(),
        coalescing: vec![CoalescingRule::new(&["pn"], Guard::BothPayloadEmpty, Action::KeepNewest)],
        pkt_sched: SchedulerSpec::fifo(),
        ev_sched: EventSchedSpec::Fifo,
        headers: vec![HEADER, FRAME],
    }
}

/// Application glue: one connection per scenario flow, streams chosen by
/// the workload line (stream 0 by default).
#[derive(Debug, Default)]
pub struct QuicApp {
    sent: BTreeMap<(u64, u64), u64>,
}

impl QuicApp {
    pub fn new(_params: &ProtocolParams) -> Self {
        Self::default()
    }
}

impl AppAdapter for QuicApp {
    fn on_start(&mut self, _host: &HostInfo<'_>) -> Vec<Event> {
        Vec::new()
    }

    fn on_send(&mut self, host: &HostInfo<'_>, req: &SendReq) -> Result<SendPlan, SimError> {
        let f = req.flow;
        if f.src_host != host.id {
            return Err(SimError::UnknownFlow(f.id));
        }
        let s = req.stream.unwrap_or(0);
        let offset = self.sent.entry((f.id, s)).or_insert(0);
        let plan = SendPlan {
            events: vec![Event::app(
                "quic_send",
                FlowKey::new(&[f.src_addr as u64, f.dst_addr as u64, f.id]),
            )
            .with("stream", s)
            .with("len", req.bytes)
            .with_payload(req.data)],
            delivery: DeliveryKey {
                host: f.dst_host,
                flow: FlowKey::new(&[f.dst_addr as u64, f.src_addr as u64, f.id]),
                uid: rx_uid(s),
            },
            offset: *offset,
        };
        *offset += req.bytes;
        Ok(plan)
    }

    fn on_notify(&mut self, _host: &HostInfo<'_>, _note: &AppNote) -> Vec<Event> {
        Vec::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::dispatch;
    use crate::packetgen::{serialize, Payload};
    use crate::reassembly::ReassemblyError;

    fn key() -> FlowKey {
        FlowKey::new(&[1, 2, 5])
    }

    fn run(ev: &Event, c: Option<QuicConn>) -> (Vec<Instruction>, QuicConn) {
        let spec = deploy_spec(&ProtocolParams::default());
        let procs = processors();
        let chain: Vec<Processor> = spec
            .dispatch
            .get(ev.ty)
            .unwrap()
            .iter()
            .map(|n| *procs.iter().find(|p| p.name == *n).unwrap())
            .collect();
        let states = c
            .into_iter()
            .map(|c| (CTX, key(), Box::new(c) as Box<dyn crate::model::Context>))
            .collect();
        let mut ctxs = Contexts::from_states(&spec.ctx_specs, states);
        let out = dispatch(&chain, &spec.scratch, ev, &mut ctxs, 1000).unwrap();
        (out, ctxs.peek::<QuicConn>(CTX).unwrap().clone())
    }

    fn frames(out: &[Instruction]) -> Vec<Vec<(u64, u64, u64)>> {
        out.iter()
            .filter_map(Instruction::as_pkt_gen)
            .filter_map(|p| match &p.bp.payload {
                Payload::Nested(f) => Some(
                    f.iter()
                        .map(|b| (b.get("stream_id").unwrap(), b.get("offset").unwrap(), b.get("len").unwrap()))
                        .collect(),
                ),
                _ => None,
            })
            .collect()
    }

    fn send(s: u64, len: u64) -> Event {
        Event::app("quic_send", key()).with("stream", s).with("len", len)
    }

    #[test]
    fn streams_alternate_by_quantum() {
        let mut c = QuicConn::fresh(1460, 3000, &key());
        c.cwnd = 0;
        let (_, c) = run(&send(0, 10_000), Some(c));
        let (_, mut c) = run(&send(1, 10_000), Some(c));
        c.cwnd = 100 * 1460;
        let ev = Event::timer("quic_timeout", key());
        let (out, _) = run(&ev, Some(c));
        let order: Vec<u64> = frames(&out).into_iter().flatten().map(|f| f.0).collect();
        // 3000-byte turns: packets of at most 1444 payload bytes per frame.
        assert_eq!(&order[..6], &[0, 0, 0, 1, 1, 1]);
        assert_eq!(order[6], 0);
    }

    #[test]
    fn gap_of_three_declares_loss_and_resends() {
        let (_, c) = run(&send(0, 6000), None);
        assert_eq!(c.sent.len(), 5);
        // Packets 2..=5 acked, 1 missing.
        let ack = Event::net("quic_ack", key())
            .with("ack_cum", 0)
            .with("ack_largest", 5)
            .with("ack_bits", 0b111);
        let (out, c) = run(&ack, Some(c));
        assert!(c.sent.keys().all(|pn| *pn > 5));
        assert_eq!(frames(&out), vec![vec![(0, 0, 1444)]]);
        assert!(!out.iter().any(|i| i.kind() == "tx_flush"));
    }

    #[test]
    fn cumulative_ack_releases_prefix() {
        let (_, c) = run(&send(0, 2000), None);
        let ack = Event::net("quic_ack", key()).with("ack_cum", 2).with("ack_largest", 2).with("ack_bits", 0);
        let (out, c) = run(&ack, Some(c));
        assert!(out.contains(&Instruction::TxFlush { flow: key(), uid: tx_uid(0), len: 2000 }));
        assert!(c.sent.is_empty());
        assert!(out.iter().any(|i| i.kind() == "timer_stop"));
    }

    #[test]
    fn receiver_delivers_each_stream_independently() {
        let frame = |s: u64, off: u64, len: u64| {
            Event::net("quic_frame", key())
                .with("stream", s)
                .with("offset", off)
                .with("len", len)
                .with_payload(ByteRef::new(1, 0, len))
        };
        let (_, c) = run(&frame(0, 100, 100), None);
        let (out, c) = run(&frame(1, 0, 50), Some(c));
        assert!(out.contains(&Instruction::RxFlushAndNotify { flow: key(), uid: rx_uid(1), len: 50, addr: 0 }));
        let (out, _) = run(&frame(0, 0, 100), Some(c));
        assert!(out.contains(&Instruction::RxFlushAndNotify { flow: key(), uid: rx_uid(0), len: 200, addr: 0 }));
    }

    #[test]
    fn ack_info_encodes_gaps() {
        let mut c = QuicConn::fresh(1460, 1000, &key());
        for pn in [1, 2, 4, 6] {
            c.recv_pns.insert(pn, pn + 1);
        }
        assert_eq!(c.ack_info(), (HAS_ACK, 2, 6, 0b11010));
    }

    #[test]
    fn packet_round_trips_through_parser() {
        let mut c = QuicConn::fresh(1460, 1000, &key());
        c.recv_pns.insert(1, 4);
        let f = |s: u64, off: u64, len: u64| {
            FRAME.blueprint().set("stream_id", s).set("offset", off).set("len", len).data(tx_uid(s), off, len, len)
        };
        let bp = c.header(9).nested(vec![f(0, 10, 3), f(3, 0, 2)]);
        let mut src = |u: Uid, _o: u64, l: u64| -> Result<Vec<u8>, ReassemblyError> { Ok(vec![u.0 as u8; l as usize]) };
        let s = serialize(&bp, &mut src).unwrap();
        assert_eq!(s.bytes.len(), 40 + 16 + 3 + 16 + 2);
        let raw = RawPacket { bytes: &s.bytes, buf: 4, src_host: 1, dst_host: 2, src_addr: 1, dst_addr: 2 };
        let evs = parse(&raw).unwrap();
        let tys: Vec<&str> = evs.iter().map(|e| e.ty).collect();
        assert_eq!(tys, ["quic_ack", "quic_frame", "quic_frame", "quic_pkt"]);
        assert_eq!(evs[0].get("ack_cum"), Some(3));
        assert_eq!(evs[2].get("stream"), Some(3));
        assert_eq!(evs[2].payload, Some(ByteRef::new(4, 40 + 16 + 3 + 16, 2)));
        assert_eq!(evs[0].flow, FlowKey::new(&[2, 1, 5]));
    }
}
