use alloc::collections::BTreeMap;

use super::dispatch::ProcessorError;
use super::{FlowKey, Name};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum EventKind {
    Application,
    Network,
    Timer,
}

/// A slice of target-owned bytes: a received packet payload or an
/// application send buffer. Processors pass these through to instructions
/// without ever dereferencing them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ByteRef {
    pub buf: u64,
    pub start: u64,
    pub len: u64,
}

impl ByteRef {
    pub fn new(buf: u64, start: u64, len: u64) -> Self {
        ByteRef { buf, start, len }
    }

    /// Sub-range relative to this reference, clamped to it.
    pub fn slice(&self, offset: u64, len: u64) -> ByteRef {
        let offset = offset.min(self.len);
        ByteRef {
            buf: self.buf,
            start: self.start + offset,
            len: len.min(self.len - offset),
        }
    }
}

pub type Meta = BTreeMap<Name, u64>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub kind: EventKind,
    pub ty: Name,
    pub flow: FlowKey,
    pub meta: Meta,
    pub payload: Option<ByteRef>,
}

impl Event {
    pub fn new(kind: EventKind, ty: Name, flow: FlowKey) -> Self {
        Event {
            kind,
            ty,
            flow,
            meta: Meta::new(),
            payload: None,
        }
    }

    pub fn app(ty: Name, flow: FlowKey) -> Self {
        Self::new(EventKind::Application, ty, flow)
    }

    pub fn net(ty: Name, flow: FlowKey) -> Self {
        Self::new(EventKind::Network, ty, flow)
    }

    pub fn timer(ty: Name, flow: FlowKey) -> Self {
        Self::new(EventKind::Timer, ty, flow)
    }

    pub fn with(mut self, field: Name, value: u64) -> Self {
        self.meta.insert(field, value);
        self
    }

    pub fn with_payload(mut self, payload: ByteRef) -> Self {
        self.payload = Some(payload);
        self
    }

    pub fn get(&self, field: &str) -> Option<u64> {
        self.meta.get(field).copied()
    }

    /// Like [`Event::get`] but reports a missing field as a processor error.
    pub fn field(&self, field: Name) -> Result<u64, ProcessorError> {
        self.get(field).ok_or(ProcessorError::MissingField(field))
    }

    pub fn set(&mut self, field: Name, value: u64) {
        self.meta.insert(field, value);
    }
}
