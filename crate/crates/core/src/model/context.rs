use alloc::boxed::Box;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::any::Any;
use core::fmt;

use super::dispatch::{Instructions, ProcessorError};
use super::{FlowKey, Name};
use crate::instruction::Instruction;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct TimerId(pub u16);

impl fmt::Display for TimerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

/// Scalar context fields, stored by the checker and trace as `u64`.
pub trait Scalar: Copy {
    fn to_u64(&self) -> u64;
    fn from_u64(v: u64) -> Self;
}

macro_rules! scalar_int {
    ($($t:ty),*) => {$(
        impl Scalar for $t {
            fn to_u64(&self) -> u64 { *self as u64 }
            fn from_u64(v: u64) -> Self { v as $t }
        }
    )*};
}
scalar_int!(u8, u16, u32, u64, i64, usize);

impl Scalar for bool {
    fn to_u64(&self) -> u64 {
        *self as u64
    }
    fn from_u64(v: u64) -> Self {
        v != 0
    }
}

/// Persistent protocol state for one flow, group of flows, or the whole
/// host. Scalar fields are reachable by name so the checker and the CLI can
/// inspect and assign them; use [`impl_context!`](crate::impl_context) to
/// derive the accessors.
pub trait Context: Any + fmt::Debug {
    fn get(&self, field: &str) -> Option<u64>;
    fn set(&mut self, field: &str, value: u64) -> bool;
    /// `(name, type)` for every scalar field, in declaration order.
    fn fields(&self) -> &'static [(Name, Name)];
    fn clone_box(&self) -> Box<dyn Context>;
    fn as_any(&self) -> &dyn Any;
    fn as_any_mut(&mut self) -> &mut dyn Any;
}

impl Clone for Box<dyn Context> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

/// Implements [`Context`] for a `Clone + Debug` struct, exposing the listed
/// scalar fields by name.
#[macro_export]
macro_rules! impl_context {
    ($ty:ty { $($field:ident : $fty:ty),* $(,)? }) => {
        impl $crate::model::Context for $ty {
            fn get(&self, field: &str) -> Option<u64> {
                match field {
                    $(stringify!($field) => Some($crate::model::Scalar::to_u64(&self.$field)),)*
                    _ => None,
                }
            }
            fn set(&mut self, field: &str, value: u64) -> bool {
                match field {
                    $(stringify!($field) => {
                        self.$field = <$fty as $crate::model::Scalar>::from_u64(value);
                        true
                    })*
                    _ => false,
                }
            }
            fn fields(&self) -> &'static [(&'static str, &'static str)] {
                &[$((stringify!($field), stringify!($fty))),*]
            }
            fn clone_box(&self) -> $crate::__private::Box<dyn $crate::model::Context> {
                $crate::__private::Box::new(::core::clone::Clone::clone(self))
            }
            fn as_any(&self) -> &dyn ::core::any::Any { self }
            fn as_any_mut(&mut self) -> &mut dyn ::core::any::Any { self }
        }
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Granularity {
    PerFlow,
    /// Shared by all flows whose keys start with the same `n` components.
    Group(u8),
    Global,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TimerDecl {
    pub id: TimerId,
    /// Event type raised when the timer expires.
    pub event: Name,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowDecl {
    pub name: Name,
    pub capacity: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FieldDecl {
    pub name: Name,
    pub ty: Name,
    pub init: u64,
}

/// Builds a fresh context for a key. Closures let protocol parameters such
/// as the MSS reach the initial state.
pub type ContextInit = Arc<dyn Fn(&FlowKey) -> Box<dyn Context> + Send + Sync>;

#[derive(Clone)]
pub struct ContextSpec {
    pub name: Name,
    pub granularity: Granularity,
    pub timers: Vec<TimerDecl>,
    pub windows: Vec<WindowDecl>,
    pub init: ContextInit,
}

impl fmt::Debug for ContextSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ContextSpec")
            .field("name", &self.name)
            .field("granularity", &self.granularity)
            .field("timers", &self.timers)
            .field("windows", &self.windows)
            .finish()
    }
}

impl ContextSpec {
    pub fn new<F>(name: Name, granularity: Granularity, init: F) -> Self
    where
        F: Fn(&FlowKey) -> Box<dyn Context> + Send + Sync + 'static,
    {
        ContextSpec {
            name,
            granularity,
            timers: Vec::new(),
            windows: Vec::new(),
            init: Arc::new(init),
        }
    }

    pub fn fresh(&self, key: &FlowKey) -> Box<dyn Context> {
        (*self.init)(key)
    }

    pub fn timer(mut self, id: u16, event: Name) -> Self {
        self.timers.push(TimerDecl {
            id: TimerId(id),
            event,
        });
        self
    }

    pub fn window(mut self, name: Name, capacity: u32) -> Self {
        self.windows.push(WindowDecl { name, capacity });
        self
    }

    /// Scalar field layout with the values a fresh context starts from.
    pub fn layout(&self) -> Vec<FieldDecl> {
        let fresh = self.fresh(&FlowKey::GLOBAL);
        fresh
            .fields()
            .iter()
            .map(|&(name, ty)| FieldDecl {
                name,
                ty,
                init: fresh.get(name).unwrap_or(0),
            })
            .collect()
    }

    /// Lookup key for this context given an event key, or `None` when the
    /// event does not carry enough components.
    pub fn key_for(&self, event_key: &FlowKey, flow_arity: usize) -> Option<FlowKey> {
        match self.granularity {
            Granularity::PerFlow => (event_key.arity() == flow_arity).then_some(*event_key),
            Granularity::Group(n) => event_key.prefix(n as usize),
            Granularity::Global => Some(FlowKey::GLOBAL),
        }
    }
}

/// One context as seen by a running chain.
#[derive(Clone)]
pub struct Slot {
    pub spec: Name,
    pub key: Option<FlowKey>,
    pub state: Option<Box<dyn Context>>,
    pub created: bool,
    pub deleted: bool,
    init: ContextInit,
}

impl fmt::Debug for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Slot")
            .field("spec", &self.spec)
            .field("key", &self.key)
            .field("state", &self.state)
            .field("created", &self.created)
            .field("deleted", &self.deleted)
            .finish()
    }
}

/// What the target must commit after a chain succeeds.
#[derive(Debug)]
pub enum SlotUpdate {
    Put {
        spec: Name,
        key: FlowKey,
        state: Box<dyn Context>,
    },
}

/// The contexts resolved for one event. Chains work on copies; the target
/// writes them back only when the whole chain succeeds.
#[derive(Clone, Debug, Default)]
pub struct Contexts {
    slots: Vec<Slot>,
}

impl Contexts {
    pub fn new() -> Self {
        Self::default()
    }

    /// Resolves every context spec against `event_key` through `lookup`.
    /// Global contexts missing from the store are initialised in place.
    pub fn resolve<F>(specs: &[ContextSpec], flow_arity: usize, event_key: &FlowKey, mut lookup: F) -> Self
    where
        F: FnMut(Name, &FlowKey) -> Option<Box<dyn Context>>,
    {
        let slots = specs
            .iter()
            .map(|spec| {
                let key = spec.key_for(event_key, flow_arity);
                let mut state = key.as_ref().and_then(|k| lookup(spec.name, k));
                if state.is_none() && spec.granularity == Granularity::Global {
                    state = Some(spec.fresh(&FlowKey::GLOBAL));
                }
                Slot {
                    spec: spec.name,
                    key,
                    state,
                    created: false,
                    deleted: false,
                    init: spec.init.clone(),
                }
            })
            .collect();
        Contexts { slots }
    }

    /// Builds a resolved set directly, for tests and the checker.
    pub fn from_states(specs: &[ContextSpec], states: Vec<(Name, FlowKey, Box<dyn Context>)>) -> Self {
        let mut ctxs = Contexts {
            slots: specs
                .iter()
                .map(|s| Slot {
                    spec: s.name,
                    key: None,
                    state: None,
                    created: false,
                    deleted: false,
                    init: s.init.clone(),
                })
                .collect(),
        };
        for (name, key, state) in states {
            if let Some(slot) = ctxs.slots.iter_mut().find(|s| s.spec == name) {
                slot.key = Some(key);
                slot.state = Some(state);
            }
        }
        ctxs
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    fn index(&self, spec: Name) -> Result<usize, ProcessorError> {
        self.slots
            .iter()
            .position(|s| s.spec == spec)
            .ok_or(ProcessorError::UnknownContextSpec(spec))
    }

    pub fn key(&self, spec: Name) -> Option<FlowKey> {
        self.slots.iter().find(|s| s.spec == spec).and_then(|s| s.key)
    }

    pub fn is_live(&self, spec: Name) -> bool {
        self.slots
            .iter()
            .any(|s| s.spec == spec && s.state.is_some())
    }

    fn downcast<T: Context>(spec: Name, state: &mut Box<dyn Context>) -> Result<&mut T, ProcessorError> {
        state
            .as_any_mut()
            .downcast_mut::<T>()
            .ok_or(ProcessorError::ContextType(spec))
    }

    /// The context if it exists for this event.
    pub fn get<T: Context>(&mut self, spec: Name) -> Result<Option<&mut T>, ProcessorError> {
        let i = self.index(spec)?;
        match self.slots[i].state.as_mut() {
            Some(state) => Self::downcast(spec, state).map(Some),
            None => Ok(None),
        }
    }

    pub fn require<T: Context>(&mut self, spec: Name) -> Result<&mut T, ProcessorError> {
        self.get(spec)?.ok_or(ProcessorError::MissingContext(spec))
    }

    pub fn peek<T: Context>(&self, spec: Name) -> Option<&T> {
        self.slots
            .iter()
            .find(|s| s.spec == spec)
            .and_then(|s| s.state.as_ref())
            .and_then(|s| s.as_any().downcast_ref::<T>())
    }

    /// Mutable access to two different contexts at once.
    pub fn pair<A: Context, B: Context>(
        &mut self,
        a: Name,
        b: Name,
    ) -> Result<(Option<&mut A>, Option<&mut B>), ProcessorError> {
        let (ia, ib) = (self.index(a)?, self.index(b)?);
        assert_ne!(ia, ib, "pair() needs two distinct contexts");
        let (sa, sb) = if ia < ib {
            let (lo, hi) = self.slots.split_at_mut(ib);
            (&mut lo[ia], &mut hi[0])
        } else {
            let (lo, hi) = self.slots.split_at_mut(ia);
            (&mut hi[0], &mut lo[ib])
        };
        let ra = match sa.state.as_mut() {
            Some(s) => Some(Self::downcast::<A>(a, s)?),
            None => None,
        };
        let rb = match sb.state.as_mut() {
            Some(s) => Some(Self::downcast::<B>(b, s)?),
            None => None,
        };
        Ok((ra, rb))
    }

    /// Initialises a context under `key` and emits the matching `new_ctx`.
    pub fn create<T: Context>(
        &mut self,
        spec: Name,
        key: FlowKey,
        out: &mut Instructions,
    ) -> Result<&mut T, ProcessorError> {
        let i = self.index(spec)?;
        let slot = &mut self.slots[i];
        if slot.state.is_some() {
            return Err(ProcessorError::DuplicateContext(spec));
        }
        slot.key = Some(key);
        slot.state = Some((*slot.init)(&key));
        slot.created = true;
        slot.deleted = false;
        out.push(Instruction::NewCtx { spec, key });
        Self::downcast(spec, slot.state.as_mut().unwrap())
    }

    /// Drops the context from this chain's view and emits `del_ctx`.
    pub fn delete(&mut self, spec: Name, out: &mut Instructions) -> Result<(), ProcessorError> {
        let i = self.index(spec)?;
        let slot = &mut self.slots[i];
        let key = slot.key.ok_or(ProcessorError::MissingContext(spec))?;
        slot.state = None;
        slot.deleted = true;
        out.push(Instruction::DelCtx { spec, key });
        Ok(())
    }

    pub fn field(&self, spec: Name, field: &str) -> Option<u64> {
        self.slots
            .iter()
            .find(|s| s.spec == spec)
            .and_then(|s| s.state.as_ref())
            .and_then(|s| s.get(field))
    }

    pub fn set_field(&mut self, spec: Name, field: &str, value: u64) -> bool {
        self.slots
            .iter_mut()
            .find(|s| s.spec == spec)
            .and_then(|s| s.state.as_mut())
            .is_some_and(|s| s.set(field, value))
    }

    /// Contexts to write back, in spec order. Deleted slots are omitted.
    pub fn into_updates(self) -> Vec<SlotUpdate> {
        self.slots
            .into_iter()
            .filter(|s| !s.deleted)
            .filter_map(|s| match (s.key, s.state) {
                (Some(key), Some(state)) => Some(SlotUpdate::Put {
                    spec: s.spec,
                    key,
                    state,
                }),
                _ => None,
            })
            .collect()
    }
}
