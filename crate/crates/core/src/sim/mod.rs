//! Deterministic discrete-event simulator acting as the execution target.
//!
//! Hosts run one protocol each and attach to a single link, either to a
//! peer host or to one shared output-queued switch. Occurrences are ordered
//! by (time, class, insertion) with network before timers before
//! application. Chains run on copies of the resolved contexts; on success the
//! copies are written back and the instructions execute in emission order.
//! Pending blueprints are materialized after every occurrence.

mod app;
mod engine;
mod metrics;
mod scenario;
mod trace;

use alloc::collections::BTreeMap;
use alloc::vec;

use thiserror::Error;

pub use app::{AppAdapter, AppNote, DeliveryKey, FlowInfo, HostInfo, NoteKind, SendPlan, SendReq};
pub use engine::{Observation, Observer, Report, Sim};
pub use metrics::{
    mean, percentile, DirStats, LinkStats, MessageRecord, Metrics, RunStats, StreamStats, Summary,
};
pub use scenario::{
    Endpoint, Fault, FaultRule, FlowCfg, HostCfg, LinkCfg, Scenario, ScenarioError, SendCmd, Tuning,
};
pub use trace::{hex, Node, RecordKind, Trace, TraceLevel, TraceRecord};

use crate::model::{FlowKey, Name};
use crate::packetgen::PacketError;
use crate::reassembly::ReassemblyError;
use crate::registry::RegistryError;
use crate::scheduler::SchedError;
use crate::timers::TimerError;
use crate::SimTime;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error(transparent)]
    Reassembly(#[from] ReassemblyError),
    #[error(transparent)]
    Timer(#[from] TimerError),
    #[error(transparent)]
    Scheduler(#[from] SchedError),
    #[error(transparent)]
    Packet(#[from] PacketError),
    #[error("context `{0}` already exists for {1}")]
    DuplicateContext(Name, FlowKey),
    #[error("no context `{0}` for {1}")]
    UnknownContext(Name, FlowKey),
    #[error("byte reference outside buffer {0}")]
    DanglingBuffer(u64),
    #[error("no host has address {0:#x}")]
    UnknownAddress(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Scheduler(#[from] SchedError),
    #[error(transparent)]
    Exec(ExecError),
    #[error("unknown flow {0}")]
    UnknownFlow(u64),
    #[error("unknown host {0}")]
    UnknownHost(u16),
}

/// Runs a scenario and fills in per-message slowdowns.
pub fn run_scenario(sc: &Scenario) -> Result<Report, SimError> {
    let mut report = Sim::new(sc)?.run();
    calibrate(sc, &mut report.metrics.messages)?;
    Ok(report)
}

/// Sets each completed message's slowdown: its latency over the latency of
/// the same send alone on the same topology with no loss.
pub fn calibrate(sc: &Scenario, msgs: &mut [MessageRecord]) -> Result<(), SimError> {
    let mut cache: BTreeMap<(u64, u64, Option<u64>, SimTime), Option<SimTime>> = BTreeMap::new();
    for m in msgs.iter_mut() {
        let Some(lat) = m.latency() else { continue };
        let w = &sc.workload[m.line];
        let key = (w.flow, w.bytes, w.stream, w.at);
        let idle = match cache.get(&key) {
            Some(v) => *v,
            None => {
                let v = idle_latency(sc, m.line)?;
                cache.insert(key, v);
                v
            }
        };
        if let Some(idle) = idle.filter(|i| *i > 0) {
            m.slowdown = Some(lat as f64 / idle as f64);
        }
    }
    Ok(())
}

/// Latency of workload line `line` sent alone on a loss-free copy of the
/// topology.
pub fn idle_latency(sc: &Scenario, line: usize) -> Result<Option<SimTime>, SimError> {
    let mut c = sc.clone();
    c.workload = vec![sc.workload[line].clone()];
    c.trace = TraceLevel::Off;
    for l in &mut c.links {
        l.loss = 0.0;
        l.reorder = 0.0;
        l.faults.clear();
    }
    let mut sim = Sim::new(&c)?;
    sim.stop_when_done(true);
    Ok(sim.run().metrics.messages.first().and_then(MessageRecord::latency))
}
