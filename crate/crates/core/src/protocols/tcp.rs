//! TCP-lite: reliable in-order byte stream with RFC 5681 congestion control,
//! NewReno-style recovery, limited transmit and RFC 6298 retransmission
//! timeouts.
//!
//! Flow keys are local-first: `(laddr, lport, raddr, rport)`. Servers listen
//! on port 80; the client side of flow `n` uses port `10000 + n`. Only
//! connection setup is modelled, there is no teardown.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use super::common::mix64;
use super::ProtocolParams;
use crate::impl_context;
use crate::instruction::{DataSize, Direction, Instruction, PktGen, Route, TimerOp, Uid};
use crate::model::{
    ByteRef, ChainCtx, ContextSpec, DispatchTable, Event, FlowKey, Granularity, Processor,
    ProcessorError, SlidingWindow, TimerId,
};
use crate::packetgen::{
    verifies, Action, CoalescingRule, Cover, Expr, FieldRule, Guard, HeaderLayout, PacketBlueprint,
    PacketError, SegRule,
};
use crate::registry::{DeploySpec, EventSchedSpec, RawPacket};
use crate::scheduler::SchedulerSpec;
use crate::seq::{seq_diff, seq_ge, seq_gt, seq_lt, seq_max};
use crate::sim::{AppAdapter, AppNote, DeliveryKey, HostInfo, NoteKind, SendPlan, SendReq, SimError};
use crate::{SimTime, NANOS_PER_MILLI, NANOS_PER_SEC};

pub const HEADER: HeaderLayout = HeaderLayout::new(
    "tcp",
    &[
        ("src_port", 16),
        ("dst_port", 16),
        ("seq_no", 32),
        ("ack_seq", 32),
        ("data_off", 4),
        ("flags", 12),
        ("window", 16),
        ("checksum", 16),
        ("urg_ptr", 16),
    ],
);

pub const FIN: u64 = 0x01;
pub const SYN: u64 = 0x02;
pub const RST: u64 = 0x04;
pub const PSH: u64 = 0x08;
pub const ACK: u64 = 0x10;

pub const CTX: &str = "tcp";
pub const LISTEN_CTX: &str = "tcp_listen";

pub const SERVER_PORT: u64 = 80;
pub const CLIENT_PORT_BASE: u64 = 10_000;

pub const NOTIFY_ACCEPTED: u64 = 1;
pub const NOTIFY_CONNECTED: u64 = 2;

pub const TX: Uid = Uid(0);
pub const RX: Uid = Uid(1);
pub const RTO_TIMER: u16 = 0;
pub const SEG_RULE: u16 = 1;

pub const INITIAL_RTO: SimTime = NANOS_PER_SEC;
pub const MIN_RTO: SimTime = 200 * NANOS_PER_MILLI;
pub const MAX_RTO: SimTime = 60 * NANOS_PER_SEC;
/// Clock granularity term of the RTO formula.
const CLOCK_G: SimTime = 1_000;

/// Window advertised to the peer.
pub const ADV_WINDOW: u32 = 65_535;
/// Capacity of the receive-side sliding window.
pub const RECV_WINDOW: u32 = 65_536;

pub const CLOSED: u8 = 0;
pub const LISTEN: u8 = 1;
pub const SYN_SENT: u8 = 2;
pub const SYN_RCVD: u8 = 3;
pub const ESTABLISHED: u8 = 4;

/// Per-connection state.
#[derive(Clone, Debug)]
pub struct TcpCtx {
    pub laddr: u32,
    pub lport: u16,
    pub raddr: u32,
    pub rport: u16,
    pub state: u8,
    pub smss: u32,

    pub init_seq: u32,
    pub send_una: u32,
    pub send_next: u32,
    /// Highest sequence number sent so far.
    pub send_max: u32,
    /// One past the last byte the application has handed over.
    pub data_end: u32,
    pub first_send_req: bool,

    pub cwnd: u32,
    pub ssthresh: u32,
    pub last_rwnd: u32,
    pub dup_acks: u32,
    pub in_recovery: bool,
    pub recover: u32,

    pub rto: u64,
    pub srtt: u64,
    pub rttvar: u64,
    pub has_rtt: bool,
    pub rtt_active: bool,
    pub rtt_seq: u32,
    pub rtt_time: u64,
    pub timer_on: bool,

    pub recv_init_seq: u32,
    pub recv_next: u32,
    pub first_data_rcvd: bool,
    /// Bytes the application asked for but has not received yet.
    pub recv_pending: u64,
    /// Stream bytes handed to the application.
    pub flushed: u64,
    /// Received stream offsets; the head is the next expected offset.
    pub meta_rwnd: SlidingWindow,
}

impl_context!(TcpCtx {
    laddr: u32,
    lport: u16,
    raddr: u32,
    rport: u16,
    state: u8,
    smss: u32,
    init_seq: u32,
    send_una: u32,
    send_next: u32,
    send_max: u32,
    data_end: u32,
    first_send_req: bool,
    cwnd: u32,
    ssthresh: u32,
    last_rwnd: u32,
    dup_acks: u32,
    in_recovery: bool,
    recover: u32,
    rto: u64,
    srtt: u64,
    rttvar: u64,
    has_rtt: bool,
    rtt_active: bool,
    rtt_seq: u32,
    rtt_time: u64,
    timer_on: bool,
    recv_init_seq: u32,
    recv_next: u32,
    first_data_rcvd: bool,
    recv_pending: u64,
    flushed: u64,
});

/// RFC 5681 initial window.
pub fn initial_window(smss: u32) -> u32 {
    if smss > 2190 {
        2 * smss
    } else if smss > 1095 {
        3 * smss
    } else {
        4 * smss
    }
}

impl TcpCtx {
    pub fn fresh(smss: u32, key: &FlowKey) -> TcpCtx {
        let part = |i: usize| key.parts().get(i).copied().unwrap_or(0);
        TcpCtx {
            laddr: part(0) as u32,
            lport: part(1) as u16,
            raddr: part(2) as u32,
            rport: part(3) as u16,
            state: CLOSED,
            smss,
            init_seq: 0,
            send_una: 0,
            send_next: 0,
            send_max: 0,
            data_end: 0,
            first_send_req: true,
            cwnd: initial_window(smss),
            ssthresh: u32::MAX / 2,
            last_rwnd: ADV_WINDOW,
            dup_acks: 0,
            in_recovery: false,
            recover: 0,
            rto: INITIAL_RTO,
            srtt: 0,
            rttvar: 0,
            has_rtt: false,
            rtt_active: false,
            rtt_seq: 0,
            rtt_time: 0,
            timer_on: false,
            recv_init_seq: 0,
            recv_next: 0,
            first_data_rcvd: true,
            recv_pending: 0,
            flushed: 0,
            meta_rwnd: SlidingWindow::new(RECV_WINDOW),
        }
    }

    pub fn key(&self) -> FlowKey {
        FlowKey::new(&[self.laddr as u64, self.lport as u64, self.raddr as u64, self.rport as u64])
    }

    fn route(&self) -> Route {
        Route {
            src: self.laddr,
            dst: self.raddr,
        }
    }

    /// Stream offset of sequence number `seq` on the send side.
    pub fn tx_offset(&self, seq: u32) -> u64 {
        seq_diff(seq, self.init_seq.wrapping_add(1)) as u64
    }

    pub fn flight(&self) -> u32 {
        seq_diff(self.send_max, self.send_una)
    }

    /// Usable send window: `min(cwnd, rwnd)`.
    pub fn window(&self) -> u32 {
        self.cwnd.min(self.last_rwnd)
    }

    fn header(&self, seq: u32, flags: u64) -> PacketBlueprint {
        let ack = if flags & ACK != 0 { self.recv_next as u64 } else { 0 };
        HEADER
            .blueprint()
            .set("src_port", self.lport as u64)
            .set("dst_port", self.rport as u64)
            .set("seq_no", seq as u64)
            .set("ack_seq", ack)
            .set("data_off", 5)
            .set("flags", flags)
            .set("window", ADV_WINDOW as u64)
            .checksum("checksum", &[Cover::Header, Cover::Payload])
    }

    /// Control segment without payload.
    fn control(&self, seq: u32, flags: u64) -> Instruction {
        Instruction::PktGen(PktGen::new(self.key(), self.route(), self.header(seq, flags)))
    }

    /// Data segments covering `[seq, seq + len)`, cut at the SMSS.
    fn data(&self, seq: u32, len: u32) -> Instruction {
        let bp = self
            .header(seq, ACK | PSH)
            .data(TX, self.tx_offset(seq), len as u64, self.smss as u64);
        Instruction::PktGen(PktGen::new(self.key(), self.route(), bp).seg_rule(SEG_RULE))
    }

    fn timer(&self, op: TimerOp) -> Instruction {
        Instruction::Timer {
            flow: self.key(),
            tid: TimerId(RTO_TIMER),
            op,
        }
    }

    fn sample_rtt(&mut self, r: u64) {
        if self.has_rtt {
            let err = self.srtt.abs_diff(r);
            self.rttvar = (3 * self.rttvar + err) / 4;
            self.srtt = (7 * self.srtt + r) / 8;
        } else {
            self.srtt = r;
            self.rttvar = r / 2;
            self.has_rtt = true;
        }
        self.rto = (self.srtt + CLOCK_G.max(4 * self.rttvar)).clamp(MIN_RTO, MAX_RTO);
    }

    fn back_off(&mut self) {
        self.rto = (self.rto * 2).min(MAX_RTO);
    }

    /// Hands any contiguous, requested bytes to the application.
    fn flush_rx(&mut self, out: &mut crate::model::Instructions) {
        let avail = self.meta_rwnd.head() - self.flushed;
        let n = avail.min(self.recv_pending);
        if n > 0 {
            out.push(Instruction::RxFlushAndNotify {
                flow: self.key(),
                uid: RX,
                len: n,
                addr: self.flushed,
            });
            self.flushed += n;
            self.recv_pending -= n;
        }
    }
}

/// Listener state shared by every connection to one local port.
#[derive(Clone, Debug, Default)]
pub struct TcpListen {
    pub state: u8,
    pub accepted: u64,
}

impl_context!(TcpListen { state: u8, accepted: u64 });

fn now_u32(v: u64) -> u32 {
    v as u32
}

fn listen_ep(cx: &mut ChainCtx<'_>) -> Result<(), ProcessorError> {
    if cx.ctxs.get::<TcpListen>(LISTEN_CTX)?.is_some() {
        return Ok(());
    }
    let key = cx
        .event
        .flow
        .prefix(2)
        .ok_or(ProcessorError::Invalid("listen key needs address and port"))?;
    let l = cx.ctxs.create::<TcpListen>(LISTEN_CTX, key, cx.out)?;
    l.state = LISTEN;
    Ok(())
}

fn connect_ep(cx: &mut ChainCtx<'_>) -> Result<(), ProcessorError> {
    let isn = now_u32(cx.event.field("isn")?);
    let c = cx.ctxs.create::<TcpCtx>(CTX, cx.event.flow, cx.out)?;
    c.state = SYN_SENT;
    c.init_seq = isn;
    c.send_una = isn;
    c.send_next = isn.wrapping_add(1);
    c.send_max = c.send_next;
    c.data_end = c.send_next;
    cx.out.push(c.control(isn, SYN));
    cx.out.push(c.timer(TimerOp::Start(c.rto)));
    c.timer_on = true;
    Ok(())
}

fn accept_syn(cx: &mut ChainCtx<'_>) -> Result<(), ProcessorError> {
    let peer_isn = now_u32(cx.event.field("isn")?);
    let window = now_u32(cx.event.field("window")?);
    if let Some(c) = cx.ctxs.get::<TcpCtx>(CTX)? {
        // Retransmitted SYN: our SYN-ACK was lost.
        if c.state == SYN_RCVD && c.recv_init_seq == peer_isn {
            cx.out.push(c.control(c.init_seq, SYN | ACK));
        }
        return Ok(());
    }
    cx.ctxs.require::<TcpListen>(LISTEN_CTX)?.accepted += 1;
    let key = cx.event.flow;
    let isn = mix64(key.parts().iter().fold(0x7c9, |h, p| mix64(h ^ p))) as u32;
    let c = cx.ctxs.create::<TcpCtx>(CTX, key, cx.out)?;
    c.state = SYN_RCVD;
    c.init_seq = isn;
    c.send_una = isn;
    c.send_next = isn.wrapping_add(1);
    c.send_max = c.send_next;
    c.data_end = c.send_next;
    c.recv_init_seq = peer_isn;
    c.recv_next = peer_isn.wrapping_add(1);
    c.last_rwnd = window;
    cx.out.push(c.control(isn, SYN | ACK));
    cx.out.push(c.timer(TimerOp::Start(c.rto)));
    c.timer_on = true;
    cx.out.push(Instruction::Notify {
        flow: key,
        msg: NOTIFY_ACCEPTED,
    });
    Ok(())
}

fn proc_synack(cx: &mut ChainCtx<'_>) -> Result<(), ProcessorError> {
    let peer_isn = now_u32(cx.event.field("isn")?);
    let ack = now_u32(cx.event.field("ack")?);
    let window = now_u32(cx.event.field("window")?);
    let c = cx.ctxs.require::<TcpCtx>(CTX)?;
    match c.state {
        SYN_SENT if ack == c.init_seq.wrapping_add(1) => {
            c.state = ESTABLISHED;
            c.recv_init_seq = peer_isn;
            c.recv_next = peer_isn.wrapping_add(1);
            c.send_una = ack;
            c.last_rwnd = window;
            cx.out.push(c.timer(TimerOp::Stop));
            c.timer_on = false;
            cx.out.push(c.control(c.send_next, ACK));
            cx.out.push(Instruction::Notify {
                flow: c.key(),
                msg: NOTIFY_CONNECTED,
            });
        }
        // Duplicate SYN-ACK: our handshake ACK was lost.
        ESTABLISHED if peer_isn == c.recv_init_seq => cx.out.push(c.control(c.send_next, ACK)),
        _ => {}
    }
    Ok(())
}

fn record_data(cx: &mut ChainCtx<'_>) -> Result<(), ProcessorError> {
    let size = cx.event.field("data_size")?;
    let data = cx.event.payload.unwrap_or(ByteRef::new(0, 0, 0));
    let c = cx.ctxs.require::<TcpCtx>(CTX)?;
    if c.first_send_req {
        cx.out.push(Instruction::NewOrderedData {
            flow: c.key(),
            dir: Direction::Tx,
            size: DataSize::Infinite,
            uid: TX,
            addr: None,
        });
        c.first_send_req = false;
    }
    cx.out.push(Instruction::AddTxData {
        flow: c.key(),
        uid: TX,
        data,
    });
    c.data_end = c.data_end.wrapping_add(size as u32);
    Ok(())
}

/// Sends as much unsent data as the window allows. Partial segments are
/// only sent when nothing is in flight.
fn gen_seg(cx: &mut ChainCtx<'_>) -> Result<(), ProcessorError> {
    if cx.scratch.flag("skip_ack_eps")? || cx.scratch.flag("skip_gen")? {
        return Ok(());
    }
    let now = cx.now;
    let c = cx.ctxs.require::<TcpCtx>(CTX)?;
    if c.state != ESTABLISHED || c.in_recovery {
        return Ok(());
    }
    let flight = seq_diff(c.send_next, c.send_una);
    let avail = c.window().saturating_sub(flight);
    let rest = seq_diff(c.data_end, c.send_next);
    let mut bytes = rest.min(avail);
    if bytes < rest {
        bytes -= bytes % c.smss;
        if bytes == 0 && flight == 0 {
            bytes = rest.min(avail);
        }
    }
    if bytes == 0 {
        return Ok(());
    }
    if c.send_next == c.send_max && !c.rtt_active {
        c.rtt_active = true;
        c.rtt_seq = c.send_next.wrapping_add(bytes.min(c.smss));
        c.rtt_time = now;
    }
    cx.out.push(c.data(c.send_next, bytes));
    c.send_next = c.send_next.wrapping_add(bytes);
    c.send_max = seq_max(c.send_max, c.send_next);
    if !c.timer_on {
        cx.out.push(c.timer(TimerOp::Start(c.rto)));
        c.timer_on = true;
    }
    Ok(())
}

fn flush_data(cx: &mut ChainCtx<'_>) -> Result<(), ProcessorError> {
    let size = cx.event.field("data_size")?;
    let c = cx.ctxs.require::<TcpCtx>(CTX)?;
    c.recv_pending = c.recv_pending.saturating_add(size);
    c.flush_rx(cx.out);
    Ok(())
}

/// Validates the ack, releases acknowledged bytes, samples the RTT and
/// manages the retransmission timer.
fn rto(cx: &mut ChainCtx<'_>) -> Result<(), ProcessorError> {
    let ack = now_u32(cx.event.field("ack")?);
    let window = now_u32(cx.event.field("window")?);
    let data_len = cx.event.get("data_len").unwrap_or(0);
    let now = cx.now;
    let c = cx.ctxs.require::<TcpCtx>(CTX)?;
    if c.state == SYN_RCVD {
        if ack == c.init_seq.wrapping_add(1) {
            c.state = ESTABLISHED;
            c.send_una = ack;
            c.last_rwnd = window;
            cx.out.push(c.timer(TimerOp::Stop));
            c.timer_on = false;
        }
        return cx.scratch.set_flag("skip_ack_eps", true);
    }
    if c.state != ESTABLISHED || seq_gt(ack, c.send_max) || seq_lt(ack, c.send_una) {
        return cx.scratch.set_flag("skip_ack_eps", true);
    }
    c.last_rwnd = window;
    if seq_gt(ack, c.send_una) {
        let acked = seq_diff(ack, c.send_una);
        cx.out.push(Instruction::TxFlush {
            flow: c.key(),
            uid: TX,
            len: acked as u64,
        });
        c.send_una = ack;
        if seq_lt(c.send_next, ack) {
            c.send_next = ack;
        }
        if c.rtt_active && seq_ge(ack, c.rtt_seq) {
            c.sample_rtt(now.saturating_sub(c.rtt_time));
            c.rtt_active = false;
        }
        if c.send_una == c.send_max {
            if c.timer_on {
                cx.out.push(c.timer(TimerOp::Stop));
                c.timer_on = false;
            }
        } else {
            cx.out.push(c.timer(TimerOp::Restart(c.rto)));
            c.timer_on = true;
        }
        cx.scratch.set("new_ack", acked as u64)?;
    } else if data_len == 0 && c.send_max != c.send_una {
        cx.scratch.set_flag("dup_ack", true)?;
    }
    Ok(())
}

/// Window growth on new acks, NewReno partial-ack handling and the
/// duplicate-ack count.
fn cong_ctrl(cx: &mut ChainCtx<'_>) -> Result<(), ProcessorError> {
    if cx.scratch.flag("skip_ack_eps")? {
        return Ok(());
    }
    let acked = cx.scratch.get("new_ack")? as u32;
    let dup = cx.scratch.flag("dup_ack")?;
    let c = cx.ctxs.require::<TcpCtx>(CTX)?;
    if acked > 0 {
        if c.in_recovery {
            if seq_ge(c.send_una, c.recover) {
                c.cwnd = c.ssthresh;
                c.in_recovery = false;
                c.dup_acks = 0;
            } else {
                c.cwnd = c.cwnd.saturating_sub(acked).saturating_add(c.smss).max(c.smss);
                let len = c.smss.min(c.flight());
                if len > 0 {
                    cx.out.push(c.data(c.send_una, len));
                    c.send_next = seq_max(c.send_next, c.send_una.wrapping_add(len));
                }
            }
        } else {
            c.dup_acks = 0;
            if c.cwnd < c.ssthresh {
                c.cwnd = c.cwnd.saturating_add(acked.min(c.smss));
            } else {
                let inc = ((c.smss as u64 * c.smss as u64) / c.cwnd.max(1) as u64).max(1);
                c.cwnd = c.cwnd.saturating_add(inc as u32);
            }
        }
    } else if dup {
        c.dup_acks += 1;
    }
    Ok(())
}

fn enter_recovery(c: &mut TcpCtx, out: &mut crate::model::Instructions) {
    let flight = c.flight();
    c.ssthresh = (flight / 2).max(2 * c.smss);
    c.cwnd = c.ssthresh + 3 * c.smss;
    c.recover = c.send_max;
    c.in_recovery = true;
    c.rtt_active = false;
    let len = c.smss.min(flight);
    if len > 0 {
        out.push(c.data(c.send_una, len));
        c.send_next = c.send_una.wrapping_add(len);
    }
}

/// Third duplicate ack: retransmit at `send_una`. First and second: send
/// one new segment if unsent data exists and the window allows one segment
/// beyond `min(cwnd, rwnd)`.
fn fast_retransmit(cx: &mut ChainCtx<'_>) -> Result<(), ProcessorError> {
    if cx.scratch.flag("skip_ack_eps")? || !cx.scratch.flag("dup_ack")? {
        return Ok(());
    }
    let c = cx.ctxs.require::<TcpCtx>(CTX)?;
    if c.in_recovery {
        return Ok(());
    }
    match c.dup_acks {
        3 => enter_recovery(c, cx.out),
        1 | 2 => {
            let unsent = seq_diff(c.data_end, c.send_next);
            let len = c.smss.min(unsent);
            let flight = seq_diff(c.send_next, c.send_una);
            if len > 0 && flight as u64 + len as u64 <= c.window() as u64 + c.smss as u64 {
                cx.out.push(c.data(c.send_next, len));
                c.send_next = c.send_next.wrapping_add(len);
                c.send_max = seq_max(c.send_max, c.send_next);
            }
        }
        _ => return Ok(()),
    }
    cx.scratch.set_flag("skip_gen", true)
}

/// Same as [`fast_retransmit`] but sends on duplicate acks one and two
/// without checking for unsent data, producing empty segments.
fn fast_retransmit_buggy(cx: &mut ChainCtx<'_>) -> Result<(), ProcessorError> {
    if cx.scratch.flag("skip_ack_eps")? || !cx.scratch.flag("dup_ack")? {
        return Ok(());
    }
    let c = cx.ctxs.require::<TcpCtx>(CTX)?;
    if c.in_recovery {
        return Ok(());
    }
    match c.dup_acks {
        3 => enter_recovery(c, cx.out),
        1 | 2 => {
            let len = c.smss.min(seq_diff(c.data_end, c.send_next));
            let flight = seq_diff(c.send_next, c.send_una);
            if flight as u64 + c.smss as u64 <= c.window() as u64 + c.smss as u64 {
                cx.out.push(c.data(c.send_next, len));
                c.send_next = c.send_next.wrapping_add(len);
                c.send_max = seq_max(c.send_max, c.send_next);
            }
        }
        _ => return Ok(()),
    }
    cx.scratch.set_flag("skip_gen", true)
}

/// Places in-window payload into the receive buffer and advances
/// `recv_next` over contiguous data.
fn proc_recv(cx: &mut ChainCtx<'_>) -> Result<(), ProcessorError> {
    let seq = now_u32(cx.event.field("seq")?);
    let len = cx.event.field("data_len")?;
    let payload = cx.event.payload.unwrap_or(ByteRef::new(0, 0, 0));
    let c = cx.ctxs.require::<TcpCtx>(CTX)?;
    if !(c.state == SYN_RCVD || c.state == ESTABLISHED) || len == 0 {
        return Ok(());
    }
    if c.first_data_rcvd {
        cx.out.push(Instruction::NewOrderedData {
            flow: c.key(),
            dir: Direction::Rx,
            size: DataSize::Infinite,
            uid: RX,
            addr: Some(0),
        });
        c.first_data_rcvd = false;
    }
    let head = c.meta_rwnd.head() as i64;
    let start = head + seq.wrapping_sub(c.recv_next) as i32 as i64;
    let end = start + len as i64;
    let limit = head + ADV_WINDOW as i64;
    if end <= head || start >= limit {
        return Ok(());
    }
    let (lo, hi) = (start.max(head), end.min(limit));
    c.meta_rwnd.set(lo as u64, hi as u64)?;
    let new_head = c.meta_rwnd.slide();
    c.recv_next = c.recv_init_seq.wrapping_add(1).wrapping_add(new_head as u32);
    cx.out.push(Instruction::AddRxSegment {
        flow: c.key(),
        uid: RX,
        offset: lo as u64,
        data: payload.slice((lo - start) as u64, (hi - lo) as u64),
    });
    c.flush_rx(cx.out);
    Ok(())
}

fn send_ack(cx: &mut ChainCtx<'_>) -> Result<(), ProcessorError> {
    let c = cx.ctxs.require::<TcpCtx>(CTX)?;
    if c.state == SYN_RCVD || c.state == ESTABLISHED {
        cx.out.push(c.control(c.send_next, ACK));
    }
    Ok(())
}

fn proc_timeout(cx: &mut ChainCtx<'_>) -> Result<(), ProcessorError> {
    let Some(c) = cx.ctxs.get::<TcpCtx>(CTX)? else {
        return Ok(());
    };
    c.timer_on = false;
    match c.state {
        SYN_SENT => {
            c.back_off();
            cx.out.push(c.control(c.init_seq, SYN));
        }
        SYN_RCVD => {
            c.back_off();
            cx.out.push(c.control(c.init_seq, SYN | ACK));
        }
        ESTABLISHED if c.send_una != c.send_max => {
            let flight = c.flight();
            c.ssthresh = (flight / 2).max(2 * c.smss);
            c.cwnd = c.smss;
            c.back_off();
            c.in_recovery = false;
            c.dup_acks = 0;
            c.rtt_active = false;
            let len = c.smss.min(flight);
            cx.out.push(c.data(c.send_una, len));
            c.send_next = c.send_una.wrapping_add(len);
        }
        _ => return Ok(()),
    }
    cx.out.push(c.timer(TimerOp::Start(c.rto)));
    c.timer_on = true;
    Ok(())
}

/// Splits a segment into `tcp_syn`, `tcp_synack`, or `tcp_data_pkt` and
/// `tcp_ack`.
pub fn parse(raw: &RawPacket<'_>) -> Result<Vec<Event>, PacketError> {
    if !verifies(raw.bytes) {
        return Err(PacketError::BadChecksum);
    }
    let h = HEADER.parse(raw.bytes)?;
    let hlen = h.val("data_off") as usize * 4;
    if hlen < HEADER.len() || hlen > raw.bytes.len() {
        return Err(PacketError::LengthMismatch {
            declared: hlen,
            actual: raw.bytes.len(),
        });
    }
    let key = FlowKey::new(&[
        raw.dst_addr as u64,
        h.val("dst_port"),
        raw.src_addr as u64,
        h.val("src_port"),
    ]);
    let flags = h.val("flags");
    let (seq, ack, window) = (h.val("seq_no"), h.val("ack_seq"), h.val("window"));
    if flags & SYN != 0 {
        let ty = if flags & ACK != 0 { "tcp_synack" } else { "tcp_syn" };
        return Ok(vec![Event::net(ty, key)
            .with("isn", seq)
            .with("ack", ack)
            .with("window", window)]);
    }
    let data_len = raw.bytes.len() - hlen;
    let mut out = Vec::new();
    if data_len > 0 {
        out.push(
            Event::net("tcp_data_pkt", key)
                .with("seq", seq)
                .with("data_len", data_len as u64)
                .with_payload(raw.payload_ref(hlen, data_len)),
        );
    }
    if flags & ACK != 0 {
        out.push(
            Event::net("tcp_ack", key)
                .with("ack", ack)
                .with("window", window)
                .with("data_len", data_len as u64),
        );
    }
    Ok(out)
}

pub fn seg_rule() -> SegRule {
    SegRule::new(
        SEG_RULE,
        vec![FieldRule::new(
            "seq_no",
            Expr::Bp("seq_no"),
            Expr::running("seq_no"),
            Expr::running("seq_no"),
        )],
    )
}

pub fn dispatch_table() -> DispatchTable {
    DispatchTable::new()
        .chain("tcp_connect", &["connect_ep"])
        .chain("tcp_send", &["record_data", "gen_seg"])
        .chain("tcp_recv", &["flush_data"])
        .chain("tcp_ack", &["rto", "cong_ctrl", "fast_retransmit", "gen_seg"])
        .chain("tcp_data_pkt", &["proc_recv", "send_ack"])
        .chain("tcp_timeout", &["proc_timeout"])
        .chain("tcp_listen", &["listen_ep"])
        .chain("tcp_syn", &["accept_syn"])
        .chain("tcp_synack", &["proc_synack", "gen_seg"])
}

pub fn processors(buggy: bool) -> Vec<Processor> {
    let fr = if buggy { fast_retransmit_buggy } else { fast_retransmit };
    let seg: &'static [u16] = &[SEG_RULE];
    let tmr: &'static [u16] = &[RTO_TIMER];
    vec![
        Processor::new("listen_ep", listen_ep),
        Processor::new("connect_ep", connect_ep).uses(&[], tmr),
        Processor::new("accept_syn", accept_syn).uses(&[], tmr),
        Processor::new("proc_synack", proc_synack).uses(&[], tmr),
        Processor::new("record_data", record_data),
        Processor::new("gen_seg", gen_seg).uses(seg, tmr),
        Processor::new("flush_data", flush_data),
        Processor::new("rto", rto).uses(&[], tmr),
        Processor::new("cong_ctrl", cong_ctrl).uses(seg, &[]),
        Processor::new("fast_retransmit", fr).uses(seg, &[]),
        Processor::new("proc_recv", proc_recv),
        Processor::new("send_ack", send_ack),
        Processor::new("proc_timeout", proc_timeout).uses(seg, tmr),
    ]
}

pub fn ctx_specs(smss: u32) -> Vec<ContextSpec> {
    vec![
        ContextSpec::new(CTX, Granularity::PerFlow, move |k| {
            alloc::boxed::Box::new(TcpCtx::fresh(smss, k))
        })
        .timer(RTO_TIMER, "tcp_timeout")
        .window("meta_rwnd", RECV_WINDOW),
        ContextSpec::new(LISTEN_CTX, Granularity::Group(2), |_| {
            alloc::boxed::Box::new(TcpListen::default())
        }),
    ]
}

pub fn deploy_spec(params: &ProtocolParams, buggy: bool) -> DeploySpec {
    DeploySpec {
        name: if buggy { "tcp-buggy" } else { "tcp" },
        flow_arity: 4,
        dispatch: dispatch_table(),
        processors: processors(buggy),
        ctx_specs: ctx_specs(params.mss),
        scratch: vec![("skip_ack_eps", 0), ("new_ack", 0), ("dup_ack", 0), ("skip_gen", 0)],
        parser: parse,
        seg_rules: vec![seg_rule()],
        coalescing: vec![CoalescingRule::new(&["flags"], Guard::BothPayloadEmpty, Action::KeepNewest)],
        pkt_sched: SchedulerSpec::fifo(),
        ev_sched: EventSchedSpec::Fifo,
        headers: vec![HEADER],
    }
}

/// Client key of flow `id` as seen by the sender.
pub fn client_key(src_addr: u32, dst_addr: u32, id: u64) -> FlowKey {
    FlowKey::new(&[src_addr as u64, CLIENT_PORT_BASE + id, dst_addr as u64, SERVER_PORT])
}

/// The same connection as seen by the server.
pub fn server_key(src_addr: u32, dst_addr: u32, id: u64) -> FlowKey {
    FlowKey::new(&[dst_addr as u64, SERVER_PORT, src_addr as u64, CLIENT_PORT_BASE + id])
}

/// Application glue: one connection per scenario flow, opened at start;
/// servers post an unbounded receive as soon as a connection is accepted.
#[derive(Debug, Default)]
pub struct TcpApp {
    sent: BTreeMap<u64, u64>,
    listening: BTreeSet<u32>,
}

impl AppAdapter for TcpApp {
    fn on_start(&mut self, host: &HostInfo<'_>) -> Vec<Event> {
        let mut out = Vec::new();
        if host.flows.iter().any(|f| f.dst_host == host.id) && self.listening.insert(host.addr) {
            out.push(Event::app("tcp_listen", FlowKey::new(&[host.addr as u64, SERVER_PORT, 0, 0])));
        }
        for f in host.flows.iter().filter(|f| f.src_host == host.id) {
            let isn = mix64(host.seed ^ mix64(f.id)) as u32;
            out.push(Event::app("tcp_connect", client_key(f.src_addr, f.dst_addr, f.id)).with("isn", isn as u64));
        }
        out
    }

    fn on_send(&mut self, host: &HostInfo<'_>, req: &SendReq) -> Result<SendPlan, SimError> {
        let f = req.flow;
        if f.src_host != host.id {
            return Err(SimError::UnknownFlow(f.id));
        }
        let offset = self.sent.entry(f.id).or_insert(0);
        let plan = SendPlan {
            events: vec![Event::app("tcp_send", client_key(f.src_addr, f.dst_addr, f.id))
                .with("data_size", req.bytes)
                .with_payload(req.data)],
            delivery: DeliveryKey {
                host: f.dst_host,
                flow: server_key(f.src_addr, f.dst_addr, f.id),
                uid: RX,
            },
            offset: *offset,
        };
        *offset += req.bytes;
        Ok(plan)
    }

    fn on_notify(&mut self, _host: &HostInfo<'_>, note: &AppNote) -> Vec<Event> {
        match note.kind {
            NoteKind::Msg(NOTIFY_ACCEPTED) => vec![Event::app("tcp_recv", note.flow).with("data_size", 1 << 40)],
            _ => Vec::new(),
        }
    }
}
