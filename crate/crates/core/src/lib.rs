//! Target-agnostic transport programming.
//!
//! Protocols are written as event-processing chains over flow contexts. A
//! chain never touches packets or buffers directly: it emits [`Instruction`]s
//! (reassembly, packet generation, scheduling, timers, context management)
//! that a target executes. This crate holds the programming model, the
//! instruction semantics, three protocol programs (TCP-lite, Homa-lite and
//! QUIC-Lite), a bounded chain checker, and a deterministic discrete-event
//! simulator that acts as the execution target.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
#![deny(rust_2018_idioms)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod checker;
pub mod instruction;
pub mod model;
pub mod packetgen;
pub mod protocols;
pub mod reassembly;
pub mod registry;
pub mod scheduler;
pub mod seq;
pub mod sim;
pub mod timers;

pub use instruction::{DataSize, Direction, Instruction, PktGen, QueueParam, Route, TimerOp, Uid};
pub use model::{
    ByteRef, ChainCtx, Context, ContextSpec, Contexts, DispatchError, DispatchTable, Event,
    EventKind, FlowKey, Granularity, Name, Processor, ProcessorError, Scratchpad, SlidingWindow,
    TimerId,
};
pub use registry::{register_deploy, DeployHandle, DeploySpec, RegistryError};

/// Simulated time in integer nanoseconds.
pub type SimTime = u64;

pub const NANOS_PER_SEC: u64 = 1_000_000_000;
pub const NANOS_PER_MILLI: u64 = 1_000_000;
pub const NANOS_PER_MICRO: u64 = 1_000;

#[doc(hidden)]
pub mod __private {
    pub use alloc::boxed::Box;
}
