use alloc::vec::Vec;

use crate::instruction::Uid;
use crate::model::{ByteRef, Event, FlowKey};
use crate::SimTime;

/// A scenario flow with its endpoints resolved to addresses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlowInfo {
    pub id: u64,
    pub src_host: u16,
    pub dst_host: u16,
    pub src_addr: u32,
    pub dst_addr: u32,
}

/// What an application adapter knows about the host it runs on.
#[derive(Clone, Copy, Debug)]
pub struct HostInfo<'a> {
    pub id: u16,
    pub addr: u32,
    pub seed: u64,
    pub flows: &'a [FlowInfo],
}

#[derive(Clone, Copy, Debug)]
pub struct SendReq {
    pub flow: FlowInfo,
    pub bytes: u64,
    pub stream: Option<u64>,
    /// The message bytes, held by the target for the duration of the send.
    pub data: ByteRef,
}

/// The receive stream a send's bytes must show up on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct DeliveryKey {
    pub host: u16,
    pub flow: FlowKey,
    pub uid: Uid,
}

#[derive(Clone, Debug)]
pub struct SendPlan {
    /// Application events to dispatch now, in order.
    pub events: Vec<Event>,
    pub delivery: DeliveryKey,
    /// Stream offset of the first byte of this send.
    pub offset: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoteKind {
    /// `len` bytes of `uid` are readable at `addr`.
    Data { uid: Uid, len: u64, addr: u64 },
    /// An opaque `notify` message.
    Msg(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AppNote {
    pub time: SimTime,
    pub host: u16,
    pub flow: FlowKey,
    pub kind: NoteKind,
}

/// Per-host application glue for one protocol: turns workload lines into
/// application events and reacts to notifications.
pub trait AppAdapter {
    fn on_start(&mut self, host: &HostInfo<'_>) -> Vec<Event>;
    fn on_send(&mut self, host: &HostInfo<'_>, req: &SendReq) -> Result<SendPlan, super::SimError>;
    fn on_notify(&mut self, host: &HostInfo<'_>, note: &AppNote) -> Vec<Event>;
}
