//! Packet blueprints, segmentation rules, coalescing, checksums and
//! serialization into wire packets.

mod blueprint;
mod checksum;
mod coalesce;
mod segment;
mod serialize;
mod wire;

use thiserror::Error;

pub use blueprint::{
    ChecksumSpec, Cover, DataRef, Field, FieldValue, HeaderLayout, PacketBlueprint, ParsedHeader,
    Payload,
};
pub use checksum::{internet_checksum, internet_checksum_parts, verifies};
pub use coalesce::{Action, CoalescingRule, Guard, PendingRings};
pub use segment::{eval_seg_expr, segment, Expr, FieldRule, SegRule};
pub use serialize::{serialize, PayloadSource, Serialized};
pub use wire::{WirePacket, LINK_HDR_LEN, NET_HDR_LEN};

use crate::model::Name;
use crate::reassembly::ReassemblyError;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PacketError {
    #[error("no header field `{0}`")]
    UnknownField(Name),
    #[error("segmentation expression for `{0}` does not resolve")]
    ExprError(Name),
    #[error("prev.* used where no previous packet exists")]
    PrevUnavailable,
    #[error("value {value:#x} does not fit the {bits}-bit field `{field}`")]
    ValueTooWide { field: Name, value: u64, bits: u8 },
    #[error("field `{0}` has an unsupported width")]
    BadWidth(Name),
    #[error("field `{0}` is not byte aligned")]
    Unaligned(Name),
    #[error("segmentation rule {0} is not registered")]
    UnknownSegRule(u16),
    #[error(transparent)]
    Payload(#[from] ReassemblyError),
    #[error("need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("checksum mismatch")]
    BadChecksum,
    #[error("unknown packet type {0}")]
    UnknownType(u64),
    #[error("declared length {declared} but {actual} bytes present")]
    LengthMismatch { declared: usize, actual: usize },
}
