//! Output instructions emitted by event-processing chains.

use core::fmt;

use crate::model::{ByteRef, FlowKey, Name, TimerId};
use crate::packetgen::{PacketBlueprint, Payload};
use crate::scheduler::QueueRef;
use crate::SimTime;

/// Ordered-data-unit identifier, scoped to a flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Uid(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Rx,
    Tx,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataSize {
    Finite(u64),
    Infinite,
}

impl DataSize {
    pub fn admits(&self, end: u64) -> bool {
        match self {
            DataSize::Finite(n) => end <= *n,
            DataSize::Infinite => true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimerOp {
    Start(SimTime),
    Restart(SimTime),
    Stop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QueueParam {
    /// Bytes per second.
    Rate(u64),
    /// 0 is the highest priority.
    Priority(u8),
    Weight(u32),
}

/// Network-layer addressing for generated packets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Route {
    pub src: u32,
    pub dst: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PktGen {
    pub flow: FlowKey,
    pub route: Route,
    pub bp: PacketBlueprint,
    pub srule: Option<u16>,
    /// Defaults to queue 0 of the root scheduling block.
    pub queue: Option<QueueRef>,
    pub prio: u8,
}

impl PktGen {
    pub fn new(flow: FlowKey, route: Route, bp: PacketBlueprint) -> Self {
        PktGen {
            flow,
            route,
            bp,
            srule: None,
            queue: None,
            prio: 0,
        }
    }

    pub fn seg_rule(mut self, id: u16) -> Self {
        self.srule = Some(id);
        self
    }

    pub fn queue(mut self, q: QueueRef) -> Self {
        self.queue = Some(q);
        self
    }

    pub fn prio(mut self, prio: u8) -> Self {
        self.prio = prio;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Instruction {
    NewOrderedData {
        flow: FlowKey,
        dir: Direction,
        size: DataSize,
        uid: Uid,
        addr: Option<u64>,
    },
    AddRxSegment {
        flow: FlowKey,
        uid: Uid,
        offset: u64,
        data: ByteRef,
    },
    RxFlushAndNotify {
        flow: FlowKey,
        uid: Uid,
        len: u64,
        addr: u64,
    },
    AddTxData {
        flow: FlowKey,
        uid: Uid,
        data: ByteRef,
    },
    TxFlush {
        flow: FlowKey,
        uid: Uid,
        len: u64,
    },
    PktGen(PktGen),
    Timer {
        flow: FlowKey,
        tid: TimerId,
        op: TimerOp,
    },
    SetQueueParam {
        queue: QueueRef,
        param: QueueParam,
    },
    NewCtx {
        spec: Name,
        key: FlowKey,
    },
    DelCtx {
        spec: Name,
        key: FlowKey,
    },
    Notify {
        flow: FlowKey,
        msg: u64,
    },
}

impl Instruction {
    pub fn kind(&self) -> &'static str {
        match self {
            Instruction::NewOrderedData { dir: Direction::Rx, .. } => "new_rx_ordered_data",
            Instruction::NewOrderedData { dir: Direction::Tx, .. } => "new_tx_ordered_data",
            Instruction::AddRxSegment { .. } => "add_rx_data_seg",
            Instruction::RxFlushAndNotify { .. } => "rx_flush_and_notify",
            Instruction::AddTxData { .. } => "add_tx_data",
            Instruction::TxFlush { .. } => "tx_flush",
            Instruction::PktGen(_) => "pkt_gen",
            Instruction::Timer { op: TimerOp::Start(_), .. } => "timer_start",
            Instruction::Timer { op: TimerOp::Restart(_), .. } => "timer_restart",
            Instruction::Timer { op: TimerOp::Stop, .. } => "timer_stop",
            Instruction::SetQueueParam { .. } => "set_queue_param",
            Instruction::NewCtx { .. } => "new_ctx",
            Instruction::DelCtx { .. } => "del_ctx",
            Instruction::Notify { .. } => "notify",
        }
    }

    pub fn flow(&self) -> Option<FlowKey> {
        match self {
            Instruction::NewOrderedData { flow, .. }
            | Instruction::AddRxSegment { flow, .. }
            | Instruction::RxFlushAndNotify { flow, .. }
            | Instruction::AddTxData { flow, .. }
            | Instruction::TxFlush { flow, .. }
            | Instruction::Timer { flow, .. }
            | Instruction::Notify { flow, .. } => Some(*flow),
            Instruction::PktGen(p) => Some(p.flow),
            Instruction::NewCtx { key, .. } | Instruction::DelCtx { key, .. } => Some(*key),
            Instruction::SetQueueParam { .. } => None,
        }
    }

    pub fn as_pkt_gen(&self) -> Option<&PktGen> {
        match self {
            Instruction::PktGen(p) => Some(p),
            _ => None,
        }
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instruction::NewOrderedData { size, uid, .. } => {
                write!(f, "{} uid={} size=", self.kind(), uid.0)?;
                match size {
                    DataSize::Finite(n) => write!(f, "{n}"),
                    DataSize::Infinite => f.write_str("inf"),
                }
            }
            Instruction::AddRxSegment { uid, offset, data, .. } => {
                write!(f, "{} uid={} offset={} len={}", self.kind(), uid.0, offset, data.len)
            }
            Instruction::RxFlushAndNotify { uid, len, addr, .. } => {
                write!(f, "{} uid={} len={} addr={}", self.kind(), uid.0, len, addr)
            }
            Instruction::AddTxData { uid, data, .. } => {
                write!(f, "{} uid={} len={}", self.kind(), uid.0, data.len)
            }
            Instruction::TxFlush { uid, len, .. } => {
                write!(f, "{} uid={} len={}", self.kind(), uid.0, len)
            }
            Instruction::PktGen(p) => {
                write!(f, "pkt_gen prio={}", p.prio)?;
                if let Some(s) = p.srule {
                    write!(f, " srule={s}")?;
                }
                for field in &p.bp.header {
                    if let Some(v) = field.concrete() {
                        write!(f, " {}={}", field.name, v)?;
                    }
                }
                match &p.bp.payload {
                    Payload::None => Ok(()),
                    Payload::Data(d) => write!(f, " data(uid={},offset={},len={})", d.uid.0, d.offset, d.len),
                    Payload::Nested(inner) => write!(f, " nested({})", inner.len()),
                }
            }
            Instruction::Timer { tid, op, .. } => match op {
                TimerOp::Start(d) | TimerOp::Restart(d) => write!(f, "{} {} dur={}", self.kind(), tid, d),
                TimerOp::Stop => write!(f, "{} {}", self.kind(), tid),
            },
            Instruction::SetQueueParam { queue, param } => write!(f, "set_queue_param {queue:?} {param:?}"),
            Instruction::NewCtx { spec, key } | Instruction::DelCtx { spec, key } => {
                write!(f, "{} {} {}", self.kind(), spec, key)
            }
            Instruction::Notify { msg, .. } => write!(f, "notify msg={msg}"),
        }
    }
}
