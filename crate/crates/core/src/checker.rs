//! Bounded-exhaustive checking of one event-processing chain.
//!
//! A [`Domain`] gives a finite value set for each event field and context
//! field the property cares about, plus assumptions that rule out invalid
//! starting states. Every assignment that satisfies the assumptions is
//! dispatched through the chain on a fresh copy of the contexts, and each
//! assertion is evaluated on the result. Outcomes are grouped by the
//! sequence of instruction kinds the chain emitted.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

use crate::instruction::{Instruction, PktGen};
use crate::model::{dispatch, Context, Contexts, DispatchError, Event, FlowKey, Name, Processor};
use crate::protocols::{tcp, Protocol, ProtocolParams};
use crate::registry::DeploySpec;
use crate::seq::seq_diff;

/// Largest joint domain the checker will enumerate.
pub const MAX_ASSIGNMENTS: u128 = 10_000_000;

/// Violations kept verbatim in a report; the rest are only counted.
pub const DEFAULT_MAX_EXAMPLES: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckError {
    #[error("no property `{name}` for protocol `{protocol}`")]
    UnknownProperty { protocol: String, name: String },
    #[error("domain has {0} assignments, more than the limit of {MAX_ASSIGNMENTS}")]
    DomainTooLarge(u128),
    #[error("unknown domain field `{0}`")]
    UnknownField(String),
    #[error("field `{0}` appears twice in the domain")]
    DuplicateField(String),
    #[error("bad range for `{0}`: step must be positive")]
    BadRange(String),
    #[error("cannot parse assumption `{0}`")]
    BadAssumption(String),
    #[error("event type `{0}` has no chain")]
    UnknownChain(Name),
    #[error("processor `{0}` is not registered")]
    UnknownProcessor(Name),
}

/// Values one field ranges over.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Values {
    Set(Vec<u64>),
    /// `lo, lo + step, ...` up to and including `hi`.
    Range { lo: u64, hi: u64, step: u64 },
}

impl Values {
    pub fn len(&self) -> u64 {
        match self {
            Values::Set(v) => v.len() as u64,
            Values::Range { lo, hi, step } if lo <= hi && *step > 0 => (hi - lo) / step + 1,
            Values::Range { .. } => 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nth(&self, i: u64) -> u64 {
        match self {
            Values::Set(v) => v[i as usize],
            Values::Range { lo, step, .. } => lo + i * step,
        }
    }
}

/// A domain field: `event.<field>` or `<context>.<field>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Var {
    pub path: String,
    pub values: Values,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ne,
    Ge,
    Gt,
}

impl CmpOp {
    fn eval(self, a: u64, b: u64) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Ge => a >= b,
            CmpOp::Gt => a > b,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Operand {
    Var(String),
    Const(u64),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Var(p) => f.write_str(p),
            Operand::Const(c) => write!(f, "{c}"),
        }
    }
}

/// `lhs op rhs` over domain fields and constants.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assumption {
    pub lhs: Operand,
    pub op: CmpOp,
    pub rhs: Operand,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.lhs, self.op.symbol(), self.rhs)
    }
}

impl FromStr for Assumption {
    type Err = CheckError;

    fn from_str(s: &str) -> Result<Self, CheckError> {
        let bad = || CheckError::BadAssumption(s.to_string());
        let ops = [
            ("<=", CmpOp::Le),
            (">=", CmpOp::Ge),
            ("==", CmpOp::Eq),
            ("!=", CmpOp::Ne),
            ("<", CmpOp::Lt),
            (">", CmpOp::Gt),
        ];
        let (at, sym, op) = ops
            .iter()
            .find_map(|(sym, op)| s.find(sym).map(|at| (at, *sym, *op)))
            .ok_or_else(bad)?;
        let operand = |t: &str| -> Result<Operand, CheckError> {
            let t = t.trim();
            if t.is_empty() {
                return Err(bad());
            }
            Ok(match t.parse::<u64>() {
                Ok(c) => Operand::Const(c),
                Err(_) if t.contains('.') => Operand::Var(t.to_string()),
                Err(_) => return Err(bad()),
            })
        };
        Ok(Assumption {
            lhs: operand(&s[..at])?,
            op,
            rhs: operand(&s[at + sym.len()..])?,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Domain {
    pub vars: Vec<Var>,
    pub assumptions: Vec<Assumption>,
}

impl Domain {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, path: &str, values: &[u64]) -> Self {
        self.vars.push(Var {
            path: path.to_string(),
            values: Values::Set(values.to_vec()),
        });
        self
    }

    pub fn range(mut self, path: &str, lo: u64, hi: u64, step: u64) -> Self {
        self.vars.push(Var {
            path: path.to_string(),
            values: Values::Range { lo, hi, step },
        });
        self
    }

    pub fn assume(mut self, a: &str) -> Self {
        self.assumptions.push(a.parse().expect("built-in assumption"));
        self
    }

    /// Number of joint assignments before assumptions are applied.
    pub fn size(&self) -> u128 {
        self.vars.iter().map(|v| v.values.len() as u128).product()
    }
}

/// What an assertion sees for one assignment.
pub struct Case<'a> {
    pub event: &'a Event,
    pub before: &'a Contexts,
    pub after: &'a Contexts,
    /// Empty when the chain aborted.
    pub instrs: &'a [Instruction],
    pub error: Option<&'a DispatchError>,
}

impl Case<'_> {
    pub fn pkt_gens(&self) -> impl Iterator<Item = &PktGen> + '_ {
        self.instrs.iter().filter_map(Instruction::as_pkt_gen)
    }
}

#[derive(Clone, Copy)]
pub struct Assertion {
    pub name: &'static str,
    pub holds: fn(&Case<'_>) -> bool,
}

impl fmt::Debug for Assertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name)
    }
}

/// A named check on one chain of a protocol.
#[derive(Clone, Debug)]
pub struct Property {
    pub name: &'static str,
    pub summary: &'static str,
    pub protocols: &'static [Protocol],
    /// Event type whose chain is explored.
    pub chain: Name,
    /// Flow the event and its contexts belong to.
    pub key: FlowKey,
    /// Template event; domain fields overwrite its metadata.
    pub event: Event,
    /// Contexts that exist before the chain runs, freshly initialised and
    /// then overwritten by the domain.
    pub contexts: &'static [Name],
    pub domain: Domain,
    pub assertions: &'static [Assertion],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub assignment: Vec<(String, u64)>,
    pub assertion: &'static str,
    pub instrs: Vec<Instruction>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CheckReport {
    pub property: &'static str,
    pub protocol: &'static str,
    /// Joint domain size before assumptions.
    pub domain_size: u128,
    /// Assignments that satisfied the assumptions and were dispatched.
    pub explored: u64,
    /// Instruction kind-sequence → number of assignments producing it.
    pub outcomes: BTreeMap<String, u64>,
    pub violation_count: u64,
    /// The first violations in enumeration order.
    pub violations: Vec<Violation>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }
}

enum Target {
    Event(Name),
    Ctx(Name, String),
}

/// Everything needed to dispatch single assignments.
pub struct Runner<'p> {
    prop: &'p Property,
    domain: Domain,
    chain: Vec<Processor>,
    scratch: Vec<(Name, u64)>,
    targets: Vec<Target>,
    base: Contexts,
    /// `(lhs, op, rhs)` with variables as indices into the assignment.
    conds: Vec<(Result<usize, u64>, CmpOp, Result<usize, u64>)>,
}

impl<'p> Runner<'p> {
    pub fn new(spec: &DeploySpec, prop: &'p Property, domain: Domain) -> Result<Self, CheckError> {
        let names = spec.dispatch.get(prop.chain).ok_or(CheckError::UnknownChain(prop.chain))?;
        let chain = names
            .iter()
            .map(|n| {
                spec.processors
                    .iter()
                    .find(|p| p.name == *n)
                    .copied()
                    .ok_or(CheckError::UnknownProcessor(n))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let states: Vec<(Name, FlowKey, Box<dyn Context>)> = prop
            .contexts
            .iter()
            .filter_map(|c| spec.ctx_specs.iter().find(|s| s.name == *c))
            .map(|s| (s.name, prop.key, s.fresh(&prop.key)))
            .collect();
        let base = Contexts::from_states(&spec.ctx_specs, states);

        let mut targets = Vec::new();
        for (i, v) in domain.vars.iter().enumerate() {
            if domain.vars[..i].iter().any(|w| w.path == v.path) {
                return Err(CheckError::DuplicateField(v.path.clone()));
            }
            if let Values::Range { step: 0, .. } = v.values {
                return Err(CheckError::BadRange(v.path.clone()));
            }
            targets.push(resolve(&v.path, prop, &base)?);
        }
        let operand = |o: &Operand| -> Result<Result<usize, u64>, CheckError> {
            match o {
                Operand::Const(c) => Ok(Err(*c)),
                Operand::Var(p) => domain
                    .vars
                    .iter()
                    .position(|v| v.path == *p)
                    .map(Ok)
                    .ok_or_else(|| CheckError::UnknownField(p.clone())),
            }
        };
        let conds = domain
            .assumptions
            .iter()
            .map(|a| Ok((operand(&a.lhs)?, a.op, operand(&a.rhs)?)))
            .collect::<Result<Vec<_>, CheckError>>()?;
        Ok(Runner {
            prop,
            chain,
            scratch: spec.scratch.clone(),
            targets,
            base,
            conds,
            domain,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn admits(&self, values: &[u64]) -> bool {
        let val = |o: &Result<usize, u64>| match o {
            Ok(i) => values[*i],
            Err(c) => *c,
        };
        self.conds.iter().all(|(l, op, r)| op.eval(val(l), val(r)))
    }

    /// Dispatches one assignment and returns the emitted instructions, the
    /// dispatch error if any, and the names of violated assertions.
    pub fn run_one(&self, values: &[u64]) -> (Vec<Instruction>, Option<DispatchError>, Vec<&'static str>) {
        let mut event = self.prop.event.clone();
        let mut before = self.base.clone();
        for (t, v) in self.targets.iter().zip(values) {
            match t {
                Target::Event(f) => event.set(f, *v),
                Target::Ctx(spec, f) => {
                    before.set_field(spec, f, *v);
                }
            }
        }
        let mut after = before.clone();
        let (instrs, error) = match dispatch(&self.chain, &self.scratch, &event, &mut after, 0) {
            Ok(i) => (i, None),
            Err(e) => {
                after = before.clone();
                (Vec::new(), Some(e))
            }
        };
        let case = Case {
            event: &event,
            before: &before,
            after: &after,
            instrs: &instrs,
            error: error.as_ref(),
        };
        let failed = self
            .prop
            .assertions
            .iter()
            .filter(|a| !(a.holds)(&case))
            .map(|a| a.name)
            .collect();
        (instrs, error, failed)
    }

    /// Enumerates the whole domain in odometer order, last field fastest.
    pub fn explore(&self, protocol: &'static str, max_examples: usize) -> Result<CheckReport, CheckError> {
        let size = self.domain.size();
        if size > MAX_ASSIGNMENTS {
            return Err(CheckError::DomainTooLarge(size));
        }
        let mut report = CheckReport {
            property: self.prop.name,
            protocol,
            domain_size: size,
            ..CheckReport::default()
        };
        let vars = &self.domain.vars;
        let mut idx = vec![0u64; vars.len()];
        let mut values: Vec<u64> = vars.iter().map(|v| if v.values.is_empty() { 0 } else { v.values.nth(0) }).collect();
        for _ in 0..size {
            if self.admits(&values) {
                report.explored += 1;
                let (instrs, error, failed) = self.run_one(&values);
                *report.outcomes.entry(outcome_class(&instrs, error.as_ref())).or_default() += 1;
                for a in failed {
                    report.violation_count += 1;
                    if report.violations.len() < max_examples {
                        report.violations.push(Violation {
                            assignment: vars.iter().map(|v| v.path.clone()).zip(values.iter().copied()).collect(),
                            assertion: a,
                            instrs: instrs.clone(),
                        });
                    }
                }
            }
            for k in (0..vars.len()).rev() {
                idx[k] += 1;
                if idx[k] < vars[k].values.len() {
                    values[k] = vars[k].values.nth(idx[k]);
                    break;
                }
                idx[k] = 0;
                values[k] = vars[k].values.nth(0);
            }
        }
        Ok(report)
    }
}

fn resolve(path: &str, prop: &Property, base: &Contexts) -> Result<Target, CheckError> {
    let unknown = || CheckError::UnknownField(path.to_string());
    let (head, field) = path.split_once('.').ok_or_else(unknown)?;
    if head == "event" {
        return prop
            .event
            .meta
            .keys()
            .find(|k| **k == field)
            .map(|k| Target::Event(k))
            .ok_or_else(unknown);
    }
    let spec = prop.contexts.iter().find(|c| **c == head).ok_or_else(unknown)?;
    base.field(spec, field).ok_or_else(unknown)?;
    Ok(Target::Ctx(spec, field.to_string()))
}

/// Comma-separated instruction kinds, `-` for none, `abort` on error.
pub fn outcome_class(instrs: &[Instruction], error: Option<&DispatchError>) -> String {
    if error.is_some() {
        return "abort".to_string();
    }
    if instrs.is_empty() {
        return "-".to_string();
    }
    instrs.iter().map(|i| i.kind()).collect::<Vec<_>>().join(",")
}

/// Built-in properties.
pub fn properties() -> Vec<Property> {
    vec![fast_retransmit_unsent_data()]
}

pub fn property(name: &str) -> Option<Property> {
    properties().into_iter().find(|p| p.name == name)
}

/// Runs a built-in property against a protocol, optionally over a caller
/// supplied domain.
pub fn check(protocol: Protocol, name: &str, domain: Option<Domain>) -> Result<CheckReport, CheckError> {
    let prop = property(name)
        .filter(|p| p.protocols.contains(&protocol))
        .ok_or_else(|| CheckError::UnknownProperty {
            protocol: protocol.name().to_string(),
            name: name.to_string(),
        })?;
    let spec = protocol.deploy_spec(&ProtocolParams::default());
    let domain = domain.unwrap_or_else(|| prop.domain.clone());
    Runner::new(&spec, &prop, domain)?.explore(protocol.name(), DEFAULT_MAX_EXAMPLES)
}

const SMSS: u64 = 1460;
const UNA: u64 = 1000;

/// On the first and second duplicate ack the sender may send one segment of
/// previously unsent data, and never a segment without payload.
fn fast_retransmit_unsent_data() -> Property {
    let key = tcp::client_key(1, 2, 0);
    let seq = |d: &mut Domain, path: &str| {
        *d = core::mem::take(d).range(path, UNA, UNA + 8 * SMSS, SMSS);
    };
    let mut d = Domain::new()
        .set("tcp.state", &[tcp::ESTABLISHED as u64])
        .set("tcp.smss", &[SMSS])
        .set("tcp.send_una", &[UNA]);
    for p in ["tcp.send_next", "tcp.send_max", "tcp.data_end", "event.ack"] {
        seq(&mut d, p);
    }
    let domain = d
        .range("tcp.dup_acks", 0, 4, 1)
        .set("tcp.cwnd", &[SMSS, 2 * SMSS, 3 * SMSS, 4 * SMSS, 10 * SMSS, 65_535])
        .set("tcp.in_recovery", &[0, 1])
        .set("event.data_len", &[0, SMSS])
        .set("event.window", &[tcp::ADV_WINDOW as u64])
        .assume("tcp.send_next >= tcp.send_una")
        .assume("tcp.send_max >= tcp.send_next")
        .assume("tcp.data_end >= tcp.send_max");
    Property {
        name: "fast_retransmit_unsent_data",
        summary: "dup acks 1-2 send one segment of unsent data when the window allows, never an empty one",
        protocols: &[Protocol::Tcp, Protocol::TcpBuggy],
        chain: "tcp_ack",
        key,
        event: Event::net("tcp_ack", key).with("ack", UNA).with("window", 0).with("data_len", 0),
        contexts: &[tcp::CTX],
        domain,
        assertions: &[
            Assertion {
                name: "no_empty_data_segment",
                holds: no_empty_data_segment,
            },
            Assertion {
                name: "limited_transmit_sends_unsent_data",
                holds: limited_transmit_sends_unsent_data,
            },
        ],
    }
}

fn no_empty_data_segment(c: &Case<'_>) -> bool {
    c.pkt_gens().all(|p| p.bp.data_ref().is_none_or(|d| d.len > 0))
}

fn limited_transmit_sends_unsent_data(c: &Case<'_>) -> bool {
    let f = |n: &str| c.before.field(tcp::CTX, n).unwrap_or(0) as u32;
    let e = |n: &str| c.event.get(n).unwrap_or(0) as u32;
    let (una, next, max, end) = (f("send_una"), f("send_next"), f("send_max"), f("data_end"));
    let smss = f("smss");
    let dup_ack = f("state") == tcp::ESTABLISHED as u32 && e("ack") == una && e("data_len") == 0 && max != una;
    if !dup_ack || f("in_recovery") != 0 || !matches!(f("dup_acks"), 0 | 1) {
        return true;
    }
    let len = smss.min(seq_diff(end, next));
    let flight = seq_diff(next, una);
    let window = f("cwnd").min(e("window"));
    let allowed = len > 0 && flight as u64 + len as u64 <= window as u64 + smss as u64;
    let data: Vec<&PktGen> = c.pkt_gens().filter(|p| p.bp.data_ref().is_some()).collect();
    if !allowed {
        return data.is_empty();
    }
    matches!(data.as_slice(), [p] if p.bp.get("seq_no") == Some(next as u64) && p.bp.payload_len() == len as u64)
}

/// Human-readable report.
impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "property   {}", self.property)?;
        writeln!(f, "protocol   {}", self.protocol)?;
        writeln!(f, "domain     {}", self.domain_size)?;
        writeln!(f, "explored   {}", self.explored)?;
        writeln!(f, "outcomes   {}", self.outcomes.len())?;
        for (class, n) in &self.outcomes {
            writeln!(f, "  {n:>9}  {class}")?;
        }
        writeln!(f, "violations {}", self.violation_count)?;
        for v in &self.violations {
            let assignment: Vec<String> = v.assignment.iter().map(|(p, x)| format!("{p}={x}")).collect();
            writeln!(f, "  {}: {}", v.assertion, assignment.join(" "))?;
            for i in &v.instrs {
                writeln!(f, "    {}", describe(i))?;
            }
        }
        Ok(())
    }
}

fn describe(i: &Instruction) -> String {
    match i.as_pkt_gen() {
        Some(p) => {
            let seq = p.bp.get("seq_no").map(|s| format!(" seq_no={s}")).unwrap_or_default();
            format!("pkt_gen{seq} payload_len={}", p.bp.payload_len())
        }
        None => i.kind().to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Domain {
        Domain::new()
            .set("tcp.state", &[tcp::ESTABLISHED as u64])
            .set("tcp.smss", &[SMSS])
            .set("tcp.send_una", &[UNA])
            .range("tcp.send_next", UNA, UNA + 3 * SMSS, SMSS)
            .range("tcp.send_max", UNA, UNA + 3 * SMSS, SMSS)
            .range("tcp.data_end", UNA, UNA + 3 * SMSS, SMSS)
            .set("event.ack", &[UNA])
            .range("tcp.dup_acks", 0, 2, 1)
            .set("tcp.cwnd", &[SMSS, 4 * SMSS])
            .set("event.window", &[65_535])
            .assume("tcp.send_next >= tcp.send_una")
            .assume("tcp.send_max >= tcp.send_next")
            .assume("tcp.data_end >= tcp.send_max")
    }

    #[test]
    fn fixed_program_has_no_violations() {
        let r = check(Protocol::Tcp, "fast_retransmit_unsent_data", None).unwrap();
        assert!(r.explored > 0);
        assert_eq!(r.violation_count, 0, "{r}");
    }

    #[test]
    fn buggy_program_emits_empty_segment() {
        let r = check(Protocol::TcpBuggy, "fast_retransmit_unsent_data", Some(small())).unwrap();
        assert!(r.violation_count > 0);
        let v = r.violations.iter().find(|v| v.assertion == "no_empty_data_segment").unwrap();
        let p = v.instrs.iter().filter_map(Instruction::as_pkt_gen).find(|p| p.bp.payload_len() == 0);
        assert!(p.is_some());
        let get = |n: &str| v.assignment.iter().find(|(p, _)| p == n).unwrap().1;
        assert_eq!(get("tcp.data_end"), get("tcp.send_next"));
    }

    #[test]
    fn explored_matches_direct_enumeration() {
        // Three seq fields over 4 values each with a ≤ b ≤ c: C(6, 3) = 20
        // ordered triples, times 3 dup counts and 2 windows.
        let r = check(Protocol::Tcp, "fast_retransmit_unsent_data", Some(small())).unwrap();
        let mut direct = 0;
        for next in 0..4 {
            for max in 0..4 {
                for end in 0..4 {
                    if next <= max && max <= end {
                        direct += 6;
                    }
                }
            }
        }
        assert_eq!(direct, 120);
        assert_eq!(r.explored, direct);
        assert_eq!(r.domain_size, 4 * 4 * 4 * 3 * 2);
        assert_eq!(r.outcomes.values().sum::<u64>(), r.explored);
    }

    #[test]
    fn violations_replay_standalone() {
        let prop = property("fast_retransmit_unsent_data").unwrap();
        let spec = Protocol::TcpBuggy.deploy_spec(&ProtocolParams::default());
        let runner = Runner::new(&spec, &prop, small()).unwrap();
        let r = runner.explore("tcp-buggy", usize::MAX).unwrap();
        assert_eq!(r.violations.len() as u64, r.violation_count);
        for v in &r.violations {
            let values: Vec<u64> = v.assignment.iter().map(|(_, x)| *x).collect();
            let (instrs, _, failed) = runner.run_one(&values);
            assert_eq!(instrs, v.instrs);
            assert!(failed.contains(&v.assertion));
        }
    }

    #[test]
    fn unsatisfiable_domain_explores_nothing() {
        let d = small().assume("tcp.send_una > tcp.send_max");
        let r = check(Protocol::TcpBuggy, "fast_retransmit_unsent_data", Some(d)).unwrap();
        assert_eq!((r.explored, r.violation_count), (0, 0));
        assert!(r.outcomes.is_empty());
    }

    #[test]
    fn errors() {
        let unknown = check(Protocol::Tcp, "no_such_property", None);
        assert!(matches!(unknown, Err(CheckError::UnknownProperty { .. })));
        let wrong_proto = check(Protocol::Homa, "fast_retransmit_unsent_data", None);
        assert!(matches!(wrong_proto, Err(CheckError::UnknownProperty { .. })));
        let big = Domain::new().range("tcp.cwnd", 0, 99_999, 1).range("tcp.send_next", 0, 999, 1);
        assert_eq!(
            check(Protocol::Tcp, "fast_retransmit_unsent_data", Some(big)),
            Err(CheckError::DomainTooLarge(100_000_000))
        );
        let bad = Domain::new().set("tcp.nope", &[1]);
        assert_eq!(
            check(Protocol::Tcp, "fast_retransmit_unsent_data", Some(bad)),
            Err(CheckError::UnknownField("tcp.nope".into()))
        );
    }

    #[test]
    fn assumption_parsing() {
        let a: Assumption = "tcp.send_max >= 10".parse().unwrap();
        assert_eq!(a.op, CmpOp::Ge);
        assert_eq!(a.rhs, Operand::Const(10));
        assert_eq!(a.to_string(), "tcp.send_max >= 10");
        assert!("send_max >= x".parse::<Assumption>().is_err());
        assert!("tcp.a tcp.b".parse::<Assumption>().is_err());
    }
}
