use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Deref;

use thiserror::Error;

use super::window::WindowError;
use super::{Contexts, Event, Name, Scratchpad};
use crate::instruction::Instruction;
use crate::SimTime;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProcessorError {
    #[error("no live context `{0}` for this event")]
    MissingContext(Name),
    #[error("context `{0}` is not declared by the protocol")]
    UnknownContextSpec(Name),
    #[error("context `{0}` has an unexpected type")]
    ContextType(Name),
    #[error("context `{0}` already exists")]
    DuplicateContext(Name),
    #[error("event has no field `{0}`")]
    MissingField(Name),
    #[error("scratchpad field `{0}` is not declared")]
    UndeclaredScratch(Name),
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error("{0}")]
    Invalid(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DispatchError {
    #[error("event type `{0}` has no registered chain")]
    UnknownEventType(Name),
    #[error("processor `{processor}` failed: {error}")]
    Processor {
        processor: Name,
        error: ProcessorError,
    },
}

impl DispatchError {
    /// True when the chain failed because a context it needs does not exist.
    pub fn is_missing_context(&self) -> bool {
        matches!(
            self,
            DispatchError::Processor {
                error: ProcessorError::MissingContext(_),
                ..
            }
        )
    }
}

/// Instruction list shared by all processors of one chain.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Instructions(Vec<Instruction>);

impl Instructions {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, instr: Instruction) {
        self.0.push(instr);
    }

    pub fn into_vec(self) -> Vec<Instruction> {
        self.0
    }
}

impl Deref for Instructions {
    type Target = [Instruction];
    fn deref(&self) -> &[Instruction] {
        &self.0
    }
}

/// Everything a processor sees. Fields are public so a processor can hold a
/// context borrow while pushing instructions.
pub struct ChainCtx<'a> {
    pub event: &'a Event,
    pub now: SimTime,
    pub ctxs: &'a mut Contexts,
    pub scratch: &'a mut Scratchpad,
    pub out: &'a mut Instructions,
}

pub type ProcessorFn = fn(&mut ChainCtx<'_>) -> Result<(), ProcessorError>;

/// A named event processor plus the registered objects it refers to, so
/// that deployment can reject dangling references up front.
#[derive(Clone, Copy)]
pub struct Processor {
    pub name: Name,
    pub run: ProcessorFn,
    pub seg_rules: &'static [u16],
    pub timers: &'static [u16],
}

impl Processor {
    pub const fn new(name: Name, run: ProcessorFn) -> Self {
        Processor {
            name,
            run,
            seg_rules: &[],
            timers: &[],
        }
    }

    pub const fn uses(mut self, seg_rules: &'static [u16], timers: &'static [u16]) -> Self {
        self.seg_rules = seg_rules;
        self.timers = timers;
        self
    }
}

impl fmt::Debug for Processor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Processor")
            .field("name", &self.name)
            .field("seg_rules", &self.seg_rules)
            .field("timers", &self.timers)
            .finish()
    }
}

/// Event type → ordered processor names.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DispatchTable {
    entries: BTreeMap<Name, Vec<Name>>,
    order: Vec<Name>,
}

impl DispatchTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn chain(mut self, event: Name, processors: &[Name]) -> Self {
        if self.entries.insert(event, processors.to_vec()).is_none() {
            self.order.push(event);
        }
        self
    }

    pub fn get(&self, event: &str) -> Option<&[Name]> {
        self.entries.get(event).map(Vec::as_slice)
    }

    /// Entries in registration order.
    pub fn iter(&self) -> impl Iterator<Item = (Name, &[Name])> + '_ {
        self.order.iter().map(|e| (*e, self.entries[e].as_slice()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn remove(&mut self, event: &str) {
        self.entries.remove(event);
        self.order.retain(|e| *e != event);
    }
}

/// Runs `chain` for one event. Processors run in order over the same
/// contexts, scratchpad and instruction list. The first failing processor
/// aborts the chain; callers must then discard both the instructions and the
/// context copies.
pub fn dispatch(
    chain: &[Processor],
    scratch_decl: &[(Name, u64)],
    event: &Event,
    ctxs: &mut Contexts,
    now: SimTime,
) -> Result<Vec<Instruction>, DispatchError> {
    let mut scratch = Scratchpad::new(scratch_decl);
    let mut out = Instructions::new();
    for p in chain {
        let mut cx = ChainCtx {
            event,
            now,
            ctxs,
            scratch: &mut scratch,
            out: &mut out,
        };
        (p.run)(&mut cx).map_err(|error| DispatchError::Processor {
            processor: p.name,
            error,
        })?;
    }
    Ok(out.into_vec())
}
