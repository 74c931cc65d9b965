//! One-time protocol registration: dispatch table, context specs, parser,
//! segmentation and coalescing rules, scheduler configuration.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use thiserror::Error;

use crate::instruction::Instruction;
use crate::model::{
    dispatch, ByteRef, Context, ContextSpec, Contexts, DispatchError, DispatchTable, Event,
    FlowKey, Granularity, Name, Processor, TimerDecl, TimerId, MAX_KEY_ARITY,
};
use crate::packetgen::{CoalescingRule, HeaderLayout, PacketError, SegRule};
use crate::scheduler::{validate_spec, SchedError, SchedulerSpec};
use crate::SimTime;

/// A received packet as handed to a protocol's parser.
#[derive(Clone, Copy, Debug)]
pub struct RawPacket<'a> {
    /// Transport bytes: serialized header, options and payload.
    pub bytes: &'a [u8],
    /// Target buffer holding `bytes`, for payload references.
    pub buf: u64,
    pub src_host: u16,
    pub dst_host: u16,
    pub src_addr: u32,
    pub dst_addr: u32,
}

impl RawPacket<'_> {
    /// Reference to `len` transport bytes starting at `start`.
    pub fn payload_ref(&self, start: usize, len: usize) -> ByteRef {
        ByteRef::new(self.buf, start as u64, len as u64)
    }
}

/// Demultiplexes one packet into zero or more events.
pub type EventParser = fn(&RawPacket<'_>) -> Result<Vec<Event>, PacketError>;

/// Event ordering policy. Only FIFO is executed; a composed spec is
/// validated and kept for display.
#[derive(Clone, Debug, Default)]
pub enum EventSchedSpec {
    #[default]
    Fifo,
    Composed(SchedulerSpec),
}

#[derive(Clone)]
pub struct DeploySpec {
    pub name: Name,
    /// Component count of per-flow keys.
    pub flow_arity: usize,
    pub dispatch: DispatchTable,
    pub processors: Vec<Processor>,
    pub ctx_specs: Vec<ContextSpec>,
    /// Declared scratchpad fields with their per-event initial values.
    pub scratch: Vec<(Name, u64)>,
    pub parser: EventParser,
    pub seg_rules: Vec<SegRule>,
    pub coalescing: Vec<CoalescingRule>,
    pub pkt_sched: SchedulerSpec,
    pub ev_sched: EventSchedSpec,
    /// Header layouts the parser and blueprints share.
    pub headers: Vec<HeaderLayout>,
}

impl core::fmt::Debug for DeploySpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("DeploySpec")
            .field("name", &self.name)
            .field("flow_arity", &self.flow_arity)
            .field("dispatch", &self.dispatch)
            .field("processors", &self.processors)
            .field("ctx_specs", &self.ctx_specs)
            .field("seg_rules", &self.seg_rules)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("{kind} `{target}` referenced by `{from}` is not registered")]
    DanglingReference {
        kind: &'static str,
        from: String,
        target: String,
    },
    #[error("context name `{0}` declared twice")]
    DuplicateContextName(Name),
    #[error("processor `{0}` registered twice")]
    DuplicateProcessor(Name),
    #[error("segmentation rule {0} registered twice")]
    DuplicateSegRule(u16),
    #[error("event `{0}` maps to an empty chain")]
    EmptyChain(Name),
    #[error("segmentation rule {id} is invalid: {error}")]
    InvalidSegRule { id: u16, error: PacketError },
    #[error("context `{name}`: {reason}")]
    InvalidContext { name: Name, reason: &'static str },
    #[error("timer {0} declared twice with different events")]
    ConflictingTimer(TimerId),
    #[error("flow key arity {0} is outside 1..={MAX_KEY_ARITY}")]
    InvalidFlowArity(usize),
    #[error("invalid scheduler composition: {0}")]
    InvalidSchedulerComposition(SchedError),
}

fn dangling(kind: &'static str, from: impl core::fmt::Display, target: impl core::fmt::Display) -> RegistryError {
    RegistryError::DanglingReference {
        kind,
        from: format!("{from}"),
        target: format!("{target}"),
    }
}

#[derive(Debug)]
struct Deployed {
    spec: DeploySpec,
    chains: BTreeMap<Name, Vec<Processor>>,
    timers: Vec<TimerDecl>,
}

/// Validated, immutable protocol registration shared by all hosts running
/// the protocol.
#[derive(Clone, Debug)]
pub struct DeployHandle(Arc<Deployed>);

/// Checks every cross-reference in `spec` and freezes it.
pub fn register_deploy(spec: DeploySpec) -> Result<DeployHandle, RegistryError> {
    if spec.flow_arity == 0 || spec.flow_arity > MAX_KEY_ARITY {
        return Err(RegistryError::InvalidFlowArity(spec.flow_arity));
    }

    let mut procs: BTreeMap<Name, Processor> = BTreeMap::new();
    for p in &spec.processors {
        if procs.insert(p.name, *p).is_some() {
            return Err(RegistryError::DuplicateProcessor(p.name));
        }
    }

    let mut ctx_names = BTreeSet::new();
    let mut timers: BTreeMap<TimerId, TimerDecl> = BTreeMap::new();
    for c in &spec.ctx_specs {
        if !ctx_names.insert(c.name) {
            return Err(RegistryError::DuplicateContextName(c.name));
        }
        if let Granularity::Group(n) = c.granularity {
            if n == 0 || n as usize >= spec.flow_arity {
                return Err(RegistryError::InvalidContext {
                    name: c.name,
                    reason: "group arity must be between 1 and the flow arity",
                });
            }
        }
        let mut windows = BTreeSet::new();
        for w in &c.windows {
            if w.capacity == 0 || !windows.insert(w.name) {
                return Err(RegistryError::InvalidContext {
                    name: c.name,
                    reason: "sliding windows need unique names and a positive capacity",
                });
            }
        }
        let mut fields = BTreeSet::new();
        if !c.layout().iter().all(|f| fields.insert(f.name)) {
            return Err(RegistryError::InvalidContext {
                name: c.name,
                reason: "field names must be unique",
            });
        }
        for t in &c.timers {
            match timers.get(&t.id) {
                Some(old) if old.event != t.event => return Err(RegistryError::ConflictingTimer(t.id)),
                Some(_) => {}
                None => {
                    timers.insert(t.id, *t);
                }
            }
        }
    }

    let mut rules = BTreeSet::new();
    for r in &spec.seg_rules {
        if !rules.insert(r.id) {
            return Err(RegistryError::DuplicateSegRule(r.id));
        }
        r.validate()
            .map_err(|error| RegistryError::InvalidSegRule { id: r.id, error })?;
    }

    for p in procs.values() {
        if let Some(s) = p.seg_rules.iter().find(|s| !rules.contains(s)) {
            return Err(dangling("segmentation rule", p.name, s));
        }
        if let Some(t) = p.timers.iter().find(|t| !timers.contains_key(&TimerId(**t))) {
            return Err(dangling("timer", p.name, TimerId(*t)));
        }
    }

    let mut chains = BTreeMap::new();
    for (event, names) in spec.dispatch.iter() {
        if names.is_empty() {
            return Err(RegistryError::EmptyChain(event));
        }
        let chain = names
            .iter()
            .map(|n| procs.get(n).copied().ok_or_else(|| dangling("processor", event, n)))
            .collect::<Result<Vec<_>, _>>()?;
        chains.insert(event, chain);
    }
    if !spec.dispatch.is_empty() {
        if let Some(t) = timers.values().find(|t| !chains.contains_key(t.event)) {
            return Err(dangling("timer event", t.id, t.event));
        }
    }

    validate_spec(&spec.pkt_sched).map_err(RegistryError::InvalidSchedulerComposition)?;
    if let EventSchedSpec::Composed(ev) = &spec.ev_sched {
        validate_spec(ev).map_err(RegistryError::InvalidSchedulerComposition)?;
    }

    Ok(DeployHandle(Arc::new(Deployed {
        timers: timers.into_values().collect(),
        spec,
        chains,
    })))
}

impl DeployHandle {
    pub fn spec(&self) -> &DeploySpec {
        &self.0.spec
    }

    pub fn name(&self) -> Name {
        self.0.spec.name
    }

    pub fn chain(&self, event: &str) -> Option<&[Processor]> {
        self.0.chains.get(event).map(Vec::as_slice)
    }

    pub fn timer_decls(&self) -> &[TimerDecl] {
        &self.0.timers
    }

    pub fn seg_rule(&self, id: u16) -> Option<&SegRule> {
        self.0.spec.seg_rules.iter().find(|r| r.id == id)
    }

    pub fn ctx_spec(&self, name: &str) -> Option<&ContextSpec> {
        self.0.spec.ctx_specs.iter().find(|c| c.name == name)
    }

    pub fn parse(&self, raw: &RawPacket<'_>) -> Result<Vec<Event>, PacketError> {
        (self.0.spec.parser)(raw)
    }

    /// Looks up the contexts an event needs.
    pub fn resolve<F>(&self, event: &Event, lookup: F) -> Contexts
    where
        F: FnMut(Name, &FlowKey) -> Option<alloc::boxed::Box<dyn Context>>,
    {
        Contexts::resolve(&self.0.spec.ctx_specs, self.0.spec.flow_arity, &event.flow, lookup)
    }

    /// Runs the chain registered for the event's type.
    pub fn dispatch(&self, event: &Event, ctxs: &mut Contexts, now: SimTime) -> Result<Vec<Instruction>, DispatchError> {
        let chain = self
            .chain(event.ty)
            .ok_or(DispatchError::UnknownEventType(event.ty))?;
        dispatch(chain, &self.0.spec.scratch, event, ctxs, now)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ChainCtx;
    use crate::scheduler::{BlockKind, BlockSpec, Edge, QueueCount};
    use alloc::boxed::Box;
    use alloc::vec;

    #[derive(Clone, Debug, Default)]
    struct Flow {
        n: u64,
    }
    crate::impl_context!(Flow { n: u64 });

    fn bump(cx: &mut ChainCtx<'_>) -> Result<(), crate::ProcessorError> {
        cx.ctxs.require::<Flow>("flow")?.n += 1;
        Ok(())
    }

    fn noop(_: &mut ChainCtx<'_>) -> Result<(), crate::ProcessorError> {
        Ok(())
    }

    fn parse(_: &RawPacket<'_>) -> Result<Vec<Event>, PacketError> {
        Ok(Vec::new())
    }

    fn spec() -> DeploySpec {
        DeploySpec {
            name: "toy",
            flow_arity: 2,
            dispatch: DispatchTable::new().chain("go", &["bump", "noop"]).chain("tick", &["noop"]),
            processors: vec![
                Processor::new("bump", bump).uses(&[1], &[0]),
                Processor::new("noop", noop),
            ],
            ctx_specs: vec![ContextSpec::new("flow", Granularity::PerFlow, |_| Box::new(Flow::default())).timer(0, "tick")],
            scratch: Vec::new(),
            parser: parse,
            seg_rules: vec![SegRule::new(1, Vec::new())],
            coalescing: Vec::new(),
            pkt_sched: SchedulerSpec::fifo(),
            ev_sched: EventSchedSpec::Fifo,
            headers: Vec::new(),
        }
    }

    #[test]
    fn valid_spec_dispatches() {
        let h = register_deploy(spec()).unwrap();
        let ev = Event::app("go", FlowKey::new(&[1, 2]));
        let mut ctxs = h.resolve(&ev, |_, _| Some(Box::new(Flow { n: 4 })));
        assert!(h.dispatch(&ev, &mut ctxs, 0).unwrap().is_empty());
        assert_eq!(ctxs.field("flow", "n"), Some(5));
        let unknown = Event::app("nope", FlowKey::new(&[1, 2]));
        assert_eq!(
            h.dispatch(&unknown, &mut ctxs, 0),
            Err(DispatchError::UnknownEventType("nope"))
        );
    }

    #[test]
    fn empty_dispatch_is_valid() {
        let mut s = spec();
        s.dispatch = DispatchTable::new();
        let h = register_deploy(s).unwrap();
        assert!(h.chain("go").is_none());
    }

    #[test]
    fn missing_seg_rule_is_dangling() {
        let mut s = spec();
        s.seg_rules.clear();
        assert!(matches!(
            register_deploy(s),
            Err(RegistryError::DanglingReference { kind: "segmentation rule", .. })
        ));
    }

    #[test]
    fn other_reference_errors() {
        let mut s = spec();
        s.dispatch = s.dispatch.chain("x", &["ghost"]);
        assert!(matches!(register_deploy(s), Err(RegistryError::DanglingReference { kind: "processor", .. })));

        let mut s = spec();
        s.ctx_specs[0].timers.clear();
        assert!(matches!(register_deploy(s), Err(RegistryError::DanglingReference { kind: "timer", .. })));

        let mut s = spec();
        s.ctx_specs.push(s.ctx_specs[0].clone());
        assert_eq!(register_deploy(s).unwrap_err(), RegistryError::DuplicateContextName("flow"));

        let mut s = spec();
        s.dispatch = s.dispatch.chain("empty", &[]);
        assert_eq!(register_deploy(s).unwrap_err(), RegistryError::EmptyChain("empty"));

        let mut s = spec();
        s.processors.push(Processor::new("noop", noop));
        assert_eq!(register_deploy(s).unwrap_err(), RegistryError::DuplicateProcessor("noop"));
    }

    #[test]
    fn bad_scheduler_is_rejected() {
        let mut s = spec();
        s.pkt_sched = SchedulerSpec {
            blocks: vec![
                BlockSpec::new(0, BlockKind::StrictPriority, QueueCount::Fixed(2)),
                BlockSpec::new(1, BlockKind::Wrr, QueueCount::PerFlow),
            ],
            edges: vec![Edge { from: 0, to: 1, queue: 0 }],
            root: 1,
        };
        assert!(matches!(
            register_deploy(s),
            Err(RegistryError::InvalidSchedulerComposition(SchedError::InvalidComposition { .. }))
        ));
    }
}
