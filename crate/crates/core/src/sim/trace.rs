use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::SimTime;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum TraceLevel {
    /// Every record, packet headers in hex.
    Full,
    /// Packets, notifications and errors.
    #[default]
    Summary,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum RecordKind {
    EventDispatched,
    ChainError,
    InstructionExecuted,
    InstructionError,
    PacketTx,
    PacketRx,
    PacketDropped,
    AppNotification,
    ParseError,
}

impl RecordKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RecordKind::EventDispatched => "event-dispatched",
            RecordKind::ChainError => "chain-error",
            RecordKind::InstructionExecuted => "instruction-executed",
            RecordKind::InstructionError => "instruction-error",
            RecordKind::PacketTx => "packet-tx",
            RecordKind::PacketRx => "packet-rx",
            RecordKind::PacketDropped => "packet-dropped",
            RecordKind::AppNotification => "app-notification",
            RecordKind::ParseError => "parse-error",
        }
    }

    fn in_summary(&self) -> bool {
        !matches!(self, RecordKind::EventDispatched | RecordKind::InstructionExecuted)
    }
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a record happened: a host or the switch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Node {
    Host(u16),
    Switch,
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Host(h) => write!(f, "h{h}"),
            Node::Switch => f.write_str("switch"),
        }
    }
}

#[cfg(feature = "serde")]
impl serde::Serialize for Node {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct TraceRecord {
    pub time: SimTime,
    pub node: Node,
    pub kind: RecordKind,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    level: TraceLevel,
    records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new(level: TraceLevel) -> Self {
        Trace {
            level,
            records: Vec::new(),
        }
    }

    pub fn level(&self) -> TraceLevel {
        self.level
    }

    pub fn wants(&self, kind: RecordKind) -> bool {
        match self.level {
            TraceLevel::Full => true,
            TraceLevel::Summary => kind.in_summary(),
            TraceLevel::Off => false,
        }
    }

    pub fn full(&self) -> bool {
        self.level == TraceLevel::Full
    }

    /// `detail` is only evaluated when the level keeps the record.
    pub fn push(&mut self, time: SimTime, node: Node, kind: RecordKind, detail: impl FnOnce() -> String) {
        if self.wants(kind) {
            self.records.push(TraceRecord {
                time,
                node,
                kind,
                detail: detail(),
            });
        }
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn of_kind(&self, kind: RecordKind) -> impl Iterator<Item = &TraceRecord> + '_ {
        self.records.iter().filter(move |r| r.kind == kind)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Lowercase hex of `bytes`.
pub fn hex(bytes: &[u8]) -> String {
    const DIGITS: &[u8; 16] = b"0123456789abcdef";
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push(DIGITS[(b >> 4) as usize] as char);
        s.push(DIGITS[(b & 15) as usize] as char);
    }
    s
}
