//! Events, flow contexts, scratchpads, sliding windows and chain dispatch.

mod context;
mod dispatch;
mod event;
mod flow;
mod scratch;
mod window;

pub use context::{
    Context, ContextSpec, Contexts, FieldDecl, Granularity, Scalar, Slot, SlotUpdate, TimerDecl,
    TimerId, WindowDecl,
};
pub use dispatch::{
    dispatch, ChainCtx, DispatchError, DispatchTable, Instructions, Processor, ProcessorError,
    ProcessorFn,
};
pub use event::{ByteRef, Event, EventKind, Meta};
pub use flow::{FlowKey, MAX_KEY_ARITY};
pub use scratch::Scratchpad;
pub use window::{SlidingWindow, WindowError, DEFAULT_WINDOW_CAPACITY};

/// Identifier for events, processors, contexts and fields. Protocol programs
/// are compiled into the binary, so all names are static.
pub type Name = &'static str;
