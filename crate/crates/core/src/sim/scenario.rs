use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use super::trace::TraceLevel;
use crate::protocols::Protocol;
use crate::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Endpoint {
    Host(u16),
    /// The single shared switch.
    Switch,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Host(h) => write!(f, "h{h}"),
            Endpoint::Switch => f.write_str("switch"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HostCfg {
    pub id: u16,
    pub addr: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FaultRule {
    /// Drops the listed packets, counted from 1 per direction.
    DropNth(Vec<u64>),
    /// Drops everything sent at or after `after`.
    DropAll { after: SimTime },
}

/// Deterministic drops on the direction leaving `from`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fault {
    pub from: Endpoint,
    pub rule: FaultRule,
}

impl Fault {
    pub(crate) fn drops(&self, nth: u64, now: SimTime) -> bool {
        match &self.rule {
            FaultRule::DropNth(list) => list.contains(&nth),
            FaultRule::DropAll { after } => now >= *after,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkCfg {
    pub a: Endpoint,
    pub b: Endpoint,
    /// One-way propagation delay.
    pub delay: SimTime,
    /// Bytes per second.
    pub bandwidth: u64,
    pub loss: f64,
    pub reorder: f64,
    pub faults: Vec<Fault>,
}

impl LinkCfg {
    pub fn new(a: Endpoint, b: Endpoint, delay: SimTime, bandwidth: u64) -> Self {
        LinkCfg {
            a,
            b,
            delay,
            bandwidth,
            loss: 0.0,
            reorder: 0.0,
            faults: Vec::new(),
        }
    }

    pub fn loss(mut self, p: f64) -> Self {
        self.loss = p;
        self
    }

    pub fn reorder(mut self, p: f64) -> Self {
        self.reorder = p;
        self
    }

    pub fn fault(mut self, from: Endpoint, rule: FaultRule) -> Self {
        self.faults.push(Fault { from, rule });
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlowCfg {
    pub id: u64,
    pub src: u16,
    pub dst: u16,
}

/// One workload line: `at <time> host <id> send flow <k> bytes <n>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SendCmd {
    pub at: SimTime,
    pub host: u16,
    pub flow: u64,
    pub bytes: u64,
    /// Stream within the flow, for multiplexing protocols.
    pub stream: Option<u64>,
}

/// Protocol knobs that are not part of the topology.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tuning {
    pub homa_unscheduled: u64,
    pub homa_budget: u64,
    pub quic_quantum: u64,
}

impl Default for Tuning {
    fn default() -> Self {
        Tuning {
            homa_unscheduled: 60_000,
            homa_budget: 60_000,
            quic_quantum: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub duration: SimTime,
    /// Maximum transport payload per packet.
    pub mss: u32,
    pub protocol: Protocol,
    pub tuning: Tuning,
    pub hosts: Vec<HostCfg>,
    pub links: Vec<LinkCfg>,
    pub flows: Vec<FlowCfg>,
    pub workload: Vec<SendCmd>,
    pub trace: TraceLevel,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{path}: {message}")]
pub struct ScenarioError {
    /// Field path such as `links[0].bandwidth`.
    pub path: String,
    pub message: String,
}

impl ScenarioError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ScenarioError {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl Scenario {
    /// Two hosts joined by one link, no flows.
    pub fn pair(protocol: Protocol, bandwidth: u64, delay: SimTime) -> Self {
        Scenario {
            name: "pair".to_string(),
            seed: 1,
            duration: 60 * crate::NANOS_PER_SEC,
            mss: 1460,
            protocol,
            tuning: Tuning::default(),
            hosts: alloc::vec![HostCfg { id: 1, addr: 0x0a00_0001 }, HostCfg { id: 2, addr: 0x0a00_0002 }],
            links: alloc::vec![LinkCfg::new(Endpoint::Host(1), Endpoint::Host(2), delay, bandwidth)],
            flows: Vec::new(),
            workload: Vec::new(),
            trace: TraceLevel::Summary,
        }
    }

    pub fn host(&self, id: u16) -> Option<&HostCfg> {
        self.hosts.iter().find(|h| h.id == id)
    }

    pub fn flow(&self, id: u64) -> Option<&FlowCfg> {
        self.flows.iter().find(|f| f.id == id)
    }

    /// The far end of the single link attached to host `id`.
    pub fn neighbour(&self, id: u16) -> Option<Endpoint> {
        self.links.iter().find_map(|l| {
            if l.a == Endpoint::Host(id) {
                Some(l.b)
            } else if l.b == Endpoint::Host(id) {
                Some(l.a)
            } else {
                None
            }
        })
    }

    pub fn reachable(&self, src: u16, dst: u16) -> bool {
        match (self.neighbour(src), self.neighbour(dst)) {
            (Some(Endpoint::Host(n)), _) => n == dst,
            (Some(Endpoint::Switch), Some(Endpoint::Switch)) => true,
            _ => false,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.duration == 0 {
            return Err(ScenarioError::new("duration", "must be positive"));
        }
        if self.mss == 0 || self.mss > 65_000 {
            return Err(ScenarioError::new("mss", "must be in 1..=65000"));
        }
        if self.hosts.is_empty() {
            return Err(ScenarioError::new("hosts", "at least one host is required"));
        }
        let mut ids = BTreeSet::new();
        let mut addrs = BTreeSet::new();
        for (i, h) in self.hosts.iter().enumerate() {
            if !ids.insert(h.id) {
                return Err(ScenarioError::new(format!("hosts[{i}].id"), format!("duplicate host id {}", h.id)));
            }
            if !addrs.insert(h.addr) {
                return Err(ScenarioError::new(format!("hosts[{i}].addr"), "duplicate address"));
            }
        }

        let mut degree: BTreeMap<u16, usize> = BTreeMap::new();
        for (i, l) in self.links.iter().enumerate() {
            let p = |f: &str| format!("links[{i}].{f}");
            if l.bandwidth == 0 {
                return Err(ScenarioError::new(p("bandwidth"), "must be positive"));
            }
            if !(0.0..=1.0).contains(&l.loss) {
                return Err(ScenarioError::new(p("loss"), "probability must be in [0, 1]"));
            }
            if !(0.0..=1.0).contains(&l.reorder) {
                return Err(ScenarioError::new(p("reorder"), "probability must be in [0, 1]"));
            }
            if l.a == l.b {
                return Err(ScenarioError::new(p("b"), "a link needs two distinct endpoints"));
            }
            for (end, name) in [(l.a, "a"), (l.b, "b")] {
                if let Endpoint::Host(h) = end {
                    if !ids.contains(&h) {
                        return Err(ScenarioError::new(p(name), format!("unknown host {h}")));
                    }
                    *degree.entry(h).or_default() += 1;
                }
            }
            for (j, f) in l.faults.iter().enumerate() {
                if f.from != l.a && f.from != l.b {
                    return Err(ScenarioError::new(
                        format!("links[{i}].faults[{j}].from"),
                        "must be one of the link's endpoints",
                    ));
                }
            }
        }
        for (i, h) in self.hosts.iter().enumerate() {
            match degree.get(&h.id).copied().unwrap_or(0) {
                1 => {}
                0 => return Err(ScenarioError::new(format!("hosts[{i}]"), "host has no link")),
                _ => return Err(ScenarioError::new(format!("hosts[{i}]"), "host has more than one link")),
            }
        }

        let mut flow_ids = BTreeSet::new();
        for (i, f) in self.flows.iter().enumerate() {
            let p = |x: &str| format!("flows[{i}].{x}");
            if !flow_ids.insert(f.id) {
                return Err(ScenarioError::new(p("id"), format!("duplicate flow id {}", f.id)));
            }
            if f.id > 50_000 {
                return Err(ScenarioError::new(p("id"), "flow ids must be at most 50000"));
            }
            for (h, name) in [(f.src, "src"), (f.dst, "dst")] {
                if !ids.contains(&h) {
                    return Err(ScenarioError::new(p(name), format!("unknown host {h}")));
                }
            }
            if f.src == f.dst {
                return Err(ScenarioError::new(p("dst"), "source and destination must differ"));
            }
            if !self.reachable(f.src, f.dst) {
                return Err(ScenarioError::new(p("dst"), "no path between the hosts"));
            }
        }

        for (i, w) in self.workload.iter().enumerate() {
            let p = |x: &str| format!("workload[{i}].{x}");
            let Some(flow) = self.flow(w.flow) else {
                return Err(ScenarioError::new(p("flow"), format!("unknown flow {}", w.flow)));
            };
            if flow.src != w.host {
                return Err(ScenarioError::new(p("host"), format!("flow {} is sent by host {}", flow.id, flow.src)));
            }
            if w.bytes == 0 {
                return Err(ScenarioError::new(p("bytes"), "must be positive"));
            }
            if w.at > self.duration {
                return Err(ScenarioError::new(p("at"), "after the end of the run"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> Scenario {
        let mut s = Scenario::pair(Protocol::Tcp, 125_000_000, 50_000);
        s.flows.push(FlowCfg { id: 1, src: 1, dst: 2 });
        s.workload.push(SendCmd { at: 0, host: 1, flow: 1, bytes: 10, stream: None });
        s
    }

    #[test]
    fn valid_pair() {
        base().validate().unwrap();
    }

    #[test]
    fn errors_name_the_field() {
        let mut s = base();
        s.links[0].bandwidth = 0;
        assert_eq!(s.validate().unwrap_err().path, "links[0].bandwidth");
        let mut s = base();
        s.links[0].loss = 1.5;
        assert_eq!(s.validate().unwrap_err().path, "links[0].loss");
        let mut s = base();
        s.workload[0].host = 2;
        assert_eq!(s.validate().unwrap_err().path, "workload[0].host");
        let mut s = base();
        s.flows[0].dst = 9;
        assert_eq!(s.validate().unwrap_err().path, "flows[0].dst");
        let mut s = base();
        s.hosts.push(HostCfg { id: 3, addr: 7 });
        assert_eq!(s.validate().unwrap_err().path, "hosts[2]");
    }

    #[test]
    fn switch_paths() {
        let mut s = base();
        s.hosts.push(HostCfg { id: 3, addr: 3 });
        s.links = alloc::vec![
            LinkCfg::new(Endpoint::Host(1), Endpoint::Switch, 1, 1),
            LinkCfg::new(Endpoint::Host(2), Endpoint::Switch, 1, 1),
            LinkCfg::new(Endpoint::Switch, Endpoint::Host(3), 1, 1),
        ];
        s.flows.push(FlowCfg { id: 2, src: 3, dst: 1 });
        s.validate().unwrap();
        assert!(s.reachable(3, 2));
    }
}
