use alloc::boxed::Box;
use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use super::app::{AppAdapter, AppNote, DeliveryKey, FlowInfo, HostInfo, NoteKind, SendReq};
use super::metrics::{LinkStats, MessageRecord, Metrics, RunStats, StreamStats};
use super::scenario::{Endpoint, Scenario};
use super::trace::{hex, Node, RecordKind, Trace};
use super::{ExecError, SimError};
use crate::instruction::{Instruction, Uid};
use crate::model::{ByteRef, Context, Contexts, Event, FlowKey, Name, SlotUpdate};
use crate::packetgen::{segment, serialize, PacketError, Payload, PacketBlueprint, PendingRings, WirePacket};
use crate::protocols::ProtocolParams;
use crate::registry::{register_deploy, DeployHandle, RawPacket};
use crate::reassembly::DataUnits;
use crate::scheduler::{BlockKind, BlockSpec, QueueCount, QueueRef, Scheduler, SchedulerSpec};
use crate::timers::Timers;
use crate::SimTime;

/// What an observer sees after each successful chain: the event, the
/// instructions it produced and the contexts about to be written back.
pub struct Observation<'a> {
    pub time: SimTime,
    pub host: u16,
    pub event: &'a Event,
    pub instructions: &'a [Instruction],
    pub contexts: &'a Contexts,
}

pub type Observer = Box<dyn FnMut(&Observation<'_>)>;

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub trace: Trace,
    pub metrics: Metrics,
}

enum Occ {
    Start,
    Arrive { link: usize, dir: usize, pkt: WirePacket },
    /// Retry transmission on an egress.
    Kick(usize),
    App { host: usize, event: Event },
    Send(usize),
}

impl Occ {
    /// Tie-break class at equal times: network before timers (1) before
    /// application.
    fn class(&self) -> u8 {
        match self {
            Occ::Arrive { .. } | Occ::Kick(_) => 0,
            _ => 2,
        }
    }
}

struct Egress {
    link: usize,
    dir: usize,
    node: Node,
    kick_at: Option<SimTime>,
}

#[derive(Clone, Copy, Default)]
struct DirState {
    busy_until: SimTime,
    stats: super::metrics::DirStats,
}

struct Host {
    id: u16,
    addr: u32,
    ctxs: BTreeMap<(Name, FlowKey), Box<dyn Context>>,
    units: DataUnits,
    rings: PendingRings,
    timers: Timers,
    sched: Scheduler,
    app: Box<dyn AppAdapter>,
    /// Highest transmitted byte per TX unit, to spot retransmissions.
    sent_hwm: BTreeMap<(FlowKey, Uid), u64>,
}

struct Port {
    sched: Scheduler,
}

#[derive(Default)]
struct Stream {
    expected: Vec<u8>,
    delivered: u64,
    mismatched: u64,
    /// (end offset, message index) of messages not yet fully delivered.
    ends: VecDeque<(u64, usize)>,
}

#[derive(Default)]
struct Buffers {
    next: u64,
    map: BTreeMap<u64, Vec<u8>>,
}

impl Buffers {
    fn insert(&mut self, bytes: Vec<u8>) -> u64 {
        self.next += 1;
        self.map.insert(self.next, bytes);
        self.next
    }

    fn free(&mut self, id: u64) {
        self.map.remove(&id);
    }

    fn get(&self, id: u64) -> &[u8] {
        &self.map[&id]
    }

    fn read(&self, r: ByteRef) -> Result<&[u8], ExecError> {
        let buf = self.map.get(&r.buf).ok_or(ExecError::DanglingBuffer(r.buf))?;
        let (s, e) = (r.start as usize, (r.start + r.len) as usize);
        buf.get(s..e).ok_or(ExecError::DanglingBuffer(r.buf))
    }
}

/// One simulation run. Build with [`Sim::new`], optionally attach an
/// observer, then [`Sim::run`].
pub struct Sim {
    sc: Scenario,
    deploy: DeployHandle,
    now: SimTime,
    seq: u64,
    queue: BTreeMap<(SimTime, u8, u64), Occ>,
    rng: ChaCha8Rng,
    data_rng: ChaCha8Rng,
    hosts: Vec<Host>,
    by_addr: BTreeMap<u32, usize>,
    links: Vec<(Endpoint, Endpoint, [DirState; 2])>,
    ports: Vec<Port>,
    port_of: BTreeMap<u16, usize>,
    egress: Vec<Egress>,
    flows: Vec<FlowInfo>,
    bufs: Buffers,
    trace: Trace,
    streams: BTreeMap<DeliveryKey, Stream>,
    messages: Vec<MessageRecord>,
    stats: RunStats,
    observer: Option<Observer>,
    stop_when_done: bool,
}

impl Sim {
    pub fn new(sc: &Scenario) -> Result<Sim, SimError> {
        sc.validate()?;
        let params = ProtocolParams::from_scenario(sc);
        let deploy = register_deploy(sc.protocol.deploy_spec(&params))?;

        let mut hosts = Vec::new();
        let mut egress = Vec::new();
        for h in &sc.hosts {
            let me = Endpoint::Host(h.id);
            let (link, l) = sc
                .links
                .iter()
                .enumerate()
                .find(|(_, l)| l.a == me || l.b == me)
                .ok_or(SimError::UnknownHost(h.id))?;
            egress.push(Egress {
                link,
                dir: if l.a == me { 0 } else { 1 },
                node: Node::Host(h.id),
                kick_at: None,
            });
            hosts.push(Host {
                id: h.id,
                addr: h.addr,
                ctxs: BTreeMap::new(),
                units: DataUnits::new(),
                rings: PendingRings::new(),
                timers: Timers::new(deploy.timer_decls()),
                sched: Scheduler::build(&deploy.spec().pkt_sched, sc.mss as u64)?,
                app: sc.protocol.adapter(&params),
                sent_hwm: BTreeMap::new(),
            });
        }

        let switch_spec = SchedulerSpec::single(BlockSpec::new(0, BlockKind::StrictPriority, QueueCount::Fixed(8)));
        let mut ports = Vec::new();
        let mut port_of = BTreeMap::new();
        for (i, l) in sc.links.iter().enumerate() {
            let (host, dir) = match (l.a, l.b) {
                (Endpoint::Switch, Endpoint::Host(h)) => (h, 0),
                (Endpoint::Host(h), Endpoint::Switch) => (h, 1),
                _ => continue,
            };
            port_of.insert(host, ports.len());
            ports.push(Port {
                sched: Scheduler::build(&switch_spec, sc.mss as u64)?,
            });
            egress.push(Egress {
                link: i,
                dir,
                node: Node::Switch,
                kick_at: None,
            });
        }

        let addr = |id: u16| sc.host(id).map(|h| h.addr).ok_or(SimError::UnknownHost(id));
        let flows = sc
            .flows
            .iter()
            .map(|f| {
                Ok(FlowInfo {
                    id: f.id,
                    src_host: f.src,
                    dst_host: f.dst,
                    src_addr: addr(f.src)?,
                    dst_addr: addr(f.dst)?,
                })
            })
            .collect::<Result<Vec<_>, SimError>>()?;

        let mut sim = Sim {
            by_addr: sc.hosts.iter().enumerate().map(|(i, h)| (h.addr, i)).collect(),
            links: sc.links.iter().map(|l| (l.a, l.b, [DirState::default(); 2])).collect(),
            sc: sc.clone(),
            deploy,
            now: 0,
            seq: 0,
            queue: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(sc.seed),
            data_rng: ChaCha8Rng::seed_from_u64(sc.seed ^ 0x00da_7a00_00da_7a00),
            hosts,
            ports,
            port_of,
            egress,
            flows,
            bufs: Buffers::default(),
            trace: Trace::new(sc.trace),
            streams: BTreeMap::new(),
            messages: Vec::new(),
            stats: RunStats::default(),
            observer: None,
            stop_when_done: false,
        };
        sim.push(0, Occ::Start);
        for (i, w) in sc.workload.iter().enumerate() {
            sim.push(w.at, Occ::Send(i));
        }
        Ok(sim)
    }

    pub fn set_observer(&mut self, obs: Observer) {
        self.observer = Some(obs);
    }

    /// End the run as soon as every workload message has been delivered.
    pub fn stop_when_done(&mut self, on: bool) {
        self.stop_when_done = on;
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn deploy(&self) -> &DeployHandle {
        &self.deploy
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    fn host_index(&self, id: u16) -> Result<usize, SimError> {
        self.hosts
            .iter()
            .position(|h| h.id == id)
            .ok_or(SimError::UnknownHost(id))
    }

    /// A live context on a host.
    pub fn context(&self, host: u16, spec: &str, key: &FlowKey) -> Option<&dyn Context> {
        let h = self.hosts.iter().find(|h| h.id == host)?;
        h.ctxs
            .iter()
            .find(|((n, k), _)| *n == spec && k == key)
            .map(|(_, c)| c.as_ref())
    }

    /// Schedules an application event on a host at `at` (not before now).
    pub fn inject(&mut self, host: u16, at: SimTime, event: Event) -> Result<(), SimError> {
        let hi = self.host_index(host)?;
        self.push(at.max(self.now), Occ::App { host: hi, event });
        Ok(())
    }

    /// Executes one instruction outside any chain, as the target would.
    pub fn execute(&mut self, host: u16, ins: &Instruction) -> Result<(), SimError> {
        let hi = self.host_index(host)?;
        self.execute_on(hi, ins, true).map_err(SimError::Exec)
    }

    fn push(&mut self, at: SimTime, occ: Occ) {
        let class = occ.class();
        self.queue.insert((at, class, self.seq), occ);
        self.seq += 1;
    }

    fn unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn done(&self) -> bool {
        self.messages.len() == self.sc.workload.len() && self.messages.iter().all(|m| m.end.is_some())
    }

    /// Processes the next occurrence. Returns false when the run is over.
    pub fn step(&mut self) -> bool {
        let occ = self.queue.first_key_value().map(|(k, _)| (k.0, k.1));
        let timer = self
            .hosts
            .iter()
            .enumerate()
            .filter_map(|(i, h)| h.timers.next_deadline().map(|t| (t, i)))
            .min();
        let use_timer = match (occ, timer) {
            (None, None) => return false,
            (Some(_), None) => false,
            (None, Some(_)) => true,
            (Some((t, class)), Some((tt, _))) => tt < t || (tt == t && class > 0),
        };
        let at = if use_timer { timer.unwrap().0 } else { occ.unwrap().0 };
        if at > self.sc.duration {
            return false;
        }
        self.now = at;
        if use_timer {
            let hi = timer.unwrap().1;
            for ev in self.hosts[hi].timers.advance(at) {
                self.process_event(hi, ev);
            }
        } else {
            let (_, occ) = self.queue.pop_first().unwrap();
            self.handle(occ);
        }
        self.flush();
        !(self.stop_when_done && self.done())
    }

    pub fn run_until(&mut self, t: SimTime) {
        loop {
            let next = self
                .queue
                .first_key_value()
                .map(|(k, _)| k.0)
                .into_iter()
                .chain(self.hosts.iter().filter_map(|h| h.timers.next_deadline()))
                .min();
            match next {
                Some(n) if n <= t => {
                    if !self.step() {
                        break;
                    }
                }
                _ => break,
            }
        }
    }

    pub fn run(mut self) -> Report {
        while self.step() {}
        self.finish()
    }

    pub fn finish(self) -> Report {
        let mut stats = self.stats;
        stats.coalesced = self.hosts.iter().map(|h| h.rings.coalesced()).sum();
        let links = self
            .links
            .iter()
            .map(|(a, b, dirs)| {
                let mut l = LinkStats::new(*a, *b);
                l.dirs = [dirs[0].stats, dirs[1].stats];
                l
            })
            .collect();
        let streams = self
            .streams
            .iter()
            .map(|(k, s)| StreamStats {
                host: k.host,
                flow: k.flow.to_string(),
                uid: k.uid.0,
                expected: s.expected.len() as u64,
                delivered: s.delivered,
                mismatched: s.mismatched,
            })
            .collect();
        Report {
            trace: self.trace,
            metrics: Metrics {
                end_time: self.now,
                messages: self.messages,
                links,
                streams,
                stats,
            },
        }
    }

    fn handle(&mut self, occ: Occ) {
        match occ {
            Occ::Start => {
                for hi in 0..self.hosts.len() {
                    let seed = self.sc.seed;
                    let host = &mut self.hosts[hi];
                    let info = HostInfo {
                        id: host.id,
                        addr: host.addr,
                        seed,
                        flows: &self.flows,
                    };
                    for ev in host.app.on_start(&info) {
                        self.process_event(hi, ev);
                    }
                }
            }
            Occ::Arrive { link, dir, pkt } => self.arrive(link, dir, pkt),
            Occ::Kick(tx) => {
                if self.egress[tx].kick_at == Some(self.now) {
                    self.egress[tx].kick_at = None;
                    self.try_tx(tx);
                }
            }
            Occ::App { host, event } => self.process_event(host, event),
            Occ::Send(line) => self.app_send(line),
        }
    }

    fn app_send(&mut self, line: usize) {
        let cmd = self.sc.workload[line].clone();
        let flow = *self.flows.iter().find(|f| f.id == cmd.flow).expect("validated flow");
        let hi = self.by_addr[&flow.src_addr];
        let mut data = alloc::vec![0u8; cmd.bytes as usize];
        self.data_rng.fill_bytes(&mut data);
        let buf = self.bufs.insert(data);
        let req = SendReq {
            flow,
            bytes: cmd.bytes,
            stream: cmd.stream,
            data: ByteRef::new(buf, 0, cmd.bytes),
        };
        let seed = self.sc.seed;
        let host = &mut self.hosts[hi];
        let info = HostInfo {
            id: host.id,
            addr: host.addr,
            seed,
            flows: &self.flows,
        };
        let plan = match host.app.on_send(&info, &req) {
            Ok(p) => p,
            Err(e) => {
                self.stats.app_errors += 1;
                let node = Node::Host(host.id);
                self.trace.push(self.now, node, RecordKind::ChainError, || format!("send rejected: {e}"));
                self.bufs.free(buf);
                return;
            }
        };
        let idx = self.messages.len();
        self.messages.push(MessageRecord {
            line,
            flow: flow.id,
            stream: cmd.stream,
            size: cmd.bytes,
            start: self.now,
            end: None,
            slowdown: None,
        });
        let stream = self.streams.entry(plan.delivery).or_default();
        if stream.expected.len() as u64 != plan.offset {
            self.stats.app_errors += 1;
        }
        stream.expected.extend_from_slice(self.bufs.get(buf));
        stream.ends.push_back((stream.expected.len() as u64, idx));
        for ev in plan.events {
            self.process_event(hi, ev);
        }
        self.bufs.free(buf);
    }

    fn process_event(&mut self, hi: usize, ev: Event) {
        self.stats.events += 1;
        let now = self.now;
        let node = Node::Host(self.hosts[hi].id);
        let deploy = self.deploy.clone();
        self.trace.push(now, node, RecordKind::EventDispatched, || event_detail(&ev));
        let host = &mut self.hosts[hi];
        let mut ctxs = deploy.resolve(&ev, |name, key| host.ctxs.get(&(name, *key)).cloned());
        let instrs = match deploy.dispatch(&ev, &mut ctxs, now) {
            Ok(i) => i,
            Err(e) => {
                self.stats.chain_errors += 1;
                self.trace
                    .push(now, node, RecordKind::ChainError, || format!("{} flow={}: {e}", ev.ty, ev.flow));
                return;
            }
        };

        // Context creation and deletion commit with the chain; their
        // outcome is reported when the instruction's turn comes.
        let mut ctx_errs: Vec<Option<ExecError>> = Vec::with_capacity(instrs.len());
        for ins in &instrs {
            ctx_errs.push(match ins {
                Instruction::NewCtx { spec, key } if host.ctxs.contains_key(&(*spec, *key)) => {
                    Some(ExecError::DuplicateContext(spec, *key))
                }
                Instruction::DelCtx { spec, key } => host
                    .ctxs
                    .remove(&(*spec, *key))
                    .is_none()
                    .then_some(ExecError::UnknownContext(spec, *key)),
                _ => None,
            });
        }
        if let Some(obs) = self.observer.as_mut() {
            obs(&Observation {
                time: now,
                host: host.id,
                event: &ev,
                instructions: &instrs,
                contexts: &ctxs,
            });
        }
        for u in ctxs.into_updates() {
            let SlotUpdate::Put { spec, key, state } = u;
            host.ctxs.insert((spec, key), state);
        }

        for (ins, pre) in instrs.iter().zip(ctx_errs) {
            let res = match pre {
                Some(e) => Err(e),
                None => self.execute_on(hi, ins, false),
            };
            match res {
                Ok(()) => self
                    .trace
                    .push(now, node, RecordKind::InstructionExecuted, || instr_detail(ins)),
                Err(e) => {
                    self.stats.instruction_errors += 1;
                    self.trace
                        .push(now, node, RecordKind::InstructionError, || format!("{}: {e}", instr_detail(ins)));
                }
            }
        }
    }

    fn execute_on(&mut self, hi: usize, ins: &Instruction, standalone: bool) -> Result<(), ExecError> {
        let now = self.now;
        match ins {
            Instruction::NewOrderedData {
                flow,
                dir,
                size,
                uid,
                addr,
            } => self.hosts[hi].units.create(*flow, *dir, *size, *uid, *addr)?,
            Instruction::AddRxSegment {
                flow,
                uid,
                offset,
                data,
            } => {
                let bytes = self.bufs.read(*data)?;
                self.hosts[hi].units.get_mut(flow, *uid)?.add_rx_segment(*offset, bytes)?;
            }
            Instruction::RxFlushAndNotify { flow, uid, len, addr } => {
                if *len == 0 {
                    return Ok(());
                }
                let bytes = self.hosts[hi].units.get_mut(flow, *uid)?.rx_flush(*len)?;
                self.deliver(hi, *flow, *uid, &bytes);
                self.notify(
                    hi,
                    *flow,
                    NoteKind::Data {
                        uid: *uid,
                        len: *len,
                        addr: *addr,
                    },
                );
            }
            Instruction::AddTxData { flow, uid, data } => {
                let bytes = self.bufs.read(*data)?;
                self.hosts[hi].units.get_mut(flow, *uid)?.add_tx_data(bytes)?;
            }
            Instruction::TxFlush { flow, uid, len } => self.hosts[hi].units.get_mut(flow, *uid)?.tx_flush(*len)?,
            Instruction::PktGen(p) => {
                if let Some(s) = p.srule {
                    if self.deploy.seg_rule(s).is_none() {
                        return Err(PacketError::UnknownSegRule(s).into());
                    }
                }
                self.hosts[hi].rings.push(p.clone(), &self.deploy.spec().coalescing);
            }
            Instruction::Timer { flow, tid, op } => self.hosts[hi].timers.apply(*flow, *tid, *op, now)?,
            Instruction::SetQueueParam { queue, param } => self.hosts[hi].sched.set_queue_param(*queue, *param, now)?,
            Instruction::NewCtx { spec, key } => {
                if standalone {
                    let host = &mut self.hosts[hi];
                    if host.ctxs.contains_key(&(*spec, *key)) {
                        return Err(ExecError::DuplicateContext(spec, *key));
                    }
                    let cs = self
                        .deploy
                        .ctx_spec(spec)
                        .ok_or(ExecError::UnknownContext(spec, *key))?;
                    host.ctxs.insert((cs.name, *key), cs.fresh(key));
                }
            }
            Instruction::DelCtx { spec, key } => {
                if standalone && self.hosts[hi].ctxs.remove(&(*spec, *key)).is_none() {
                    return Err(ExecError::UnknownContext(spec, *key));
                }
            }
            Instruction::Notify { flow, msg } => self.notify(hi, *flow, NoteKind::Msg(*msg)),
        }
        Ok(())
    }

    fn deliver(&mut self, hi: usize, flow: FlowKey, uid: Uid, bytes: &[u8]) {
        let key = DeliveryKey {
            host: self.hosts[hi].id,
            flow,
            uid,
        };
        let len = bytes.len() as u64;
        self.stats.delivered_bytes += len;
        let Some(s) = self.streams.get_mut(&key) else {
            self.stats.unexpected_bytes += len;
            return;
        };
        let start = s.delivered as usize;
        let expected = s.expected.get(start..).unwrap_or(&[]);
        let same = bytes.iter().zip(expected).filter(|(a, b)| a == b).count() as u64;
        s.mismatched += len - same;
        s.delivered += len;
        while let Some(&(end, m)) = s.ends.front() {
            if end > s.delivered {
                break;
            }
            self.messages[m].end = Some(self.now);
            s.ends.pop_front();
        }
    }

    fn notify(&mut self, hi: usize, flow: FlowKey, kind: NoteKind) {
        let seed = self.sc.seed;
        let now = self.now;
        let host = &mut self.hosts[hi];
        let note = AppNote {
            time: now,
            host: host.id,
            flow,
            kind,
        };
        self.trace
            .push(now, Node::Host(host.id), RecordKind::AppNotification, || match kind {
                NoteKind::Data { uid, len, addr } => format!("data flow={flow} uid={} len={len} addr={addr}", uid.0),
                NoteKind::Msg(m) => format!("msg flow={flow} msg={m}"),
            });
        let info = HostInfo {
            id: host.id,
            addr: host.addr,
            seed,
            flows: &self.flows,
        };
        for ev in host.app.on_notify(&info, &note) {
            self.push(now, Occ::App { host: hi, event: ev });
        }
    }

    /// Materializes pending blueprints and starts transmissions.
    fn flush(&mut self) {
        for hi in 0..self.hosts.len() {
            if !self.hosts[hi].rings.is_empty() {
                self.materialize(hi);
            }
            if self.hosts[hi].sched.backlog() > 0 {
                self.try_tx(hi);
            }
        }
    }

    fn materialize(&mut self, hi: usize) {
        let now = self.now;
        let deploy = self.deploy.clone();
        let pending = self.hosts[hi].rings.drain();
        for p in pending {
            let node = Node::Host(self.hosts[hi].id);
            let rule = p.srule.and_then(|s| deploy.seg_rule(s));
            let unit = p.bp.data_ref().map_or(u64::MAX, |d| d.seg_unit);
            let pkts = match segment(&p.bp, rule, unit) {
                Ok(v) => v,
                Err(e) => {
                    self.stats.instruction_errors += 1;
                    self.trace
                        .push(now, node, RecordKind::InstructionError, || format!("segment: {e}"));
                    continue;
                }
            };
            let Some(&dst) = self.by_addr.get(&p.route.dst) else {
                self.stats.instruction_errors += 1;
                let e = ExecError::UnknownAddress(p.route.dst);
                self.trace
                    .push(now, node, RecordKind::InstructionError, || format!("pkt_gen: {e}"));
                continue;
            };
            let dst_host = self.hosts[dst].id;
            for bp in pkts {
                self.note_retransmission(hi, &p.flow, &bp);
                let host = &mut self.hosts[hi];
                let units = &host.units;
                let flow = p.flow;
                let mut src = |uid: Uid, off: u64, len: u64| units.get(&flow, uid)?.tx_read(off, len).map(<[u8]>::to_vec);
                let ser = match serialize(&bp, &mut src) {
                    Ok(s) => s,
                    Err(e) => {
                        self.stats.instruction_errors += 1;
                        self.trace
                            .push(now, node, RecordKind::InstructionError, || format!("serialize: {e}"));
                        continue;
                    }
                };
                let mut pkt = WirePacket::new(host.id, dst_host, p.route.src, p.route.dst, ser.bytes);
                pkt.prio = p.prio;
                pkt.queue = p.queue;
                pkt.hdr_len = ser.hdr_len as u16;
                let q = p.queue.unwrap_or_else(|| host.sched.default_queue());
                if let Err(e) = host.sched.enqueue(q, pkt) {
                    self.stats.instruction_errors += 1;
                    self.trace
                        .push(now, node, RecordKind::InstructionError, || format!("enqueue: {e}"));
                }
            }
        }
    }

    fn note_retransmission(&mut self, hi: usize, flow: &FlowKey, bp: &PacketBlueprint) {
        let mut refs = Vec::new();
        match &bp.payload {
            Payload::Data(d) => refs.push(*d),
            Payload::Nested(inner) => refs.extend(inner.iter().filter_map(|b| b.data_ref().copied())),
            Payload::None => {}
        }
        let mut retx = false;
        for d in refs {
            let hwm = self.hosts[hi].sent_hwm.entry((*flow, d.uid)).or_insert(0);
            let end = d.offset + d.len;
            if d.offset < *hwm && d.len > 0 {
                retx = true;
                self.stats.retransmitted_bytes += end.min(*hwm) - d.offset;
            }
            *hwm = (*hwm).max(end);
        }
        if retx {
            self.stats.retransmitted_packets += 1;
        }
    }

    fn sched_mut(&mut self, tx: usize) -> &mut Scheduler {
        let n = self.hosts.len();
        if tx < n {
            &mut self.hosts[tx].sched
        } else {
            &mut self.ports[tx - n].sched
        }
    }

    fn schedule_kick(&mut self, tx: usize, at: SimTime) {
        if self.egress[tx].kick_at.is_none_or(|k| at < k) {
            self.egress[tx].kick_at = Some(at);
            self.push(at, Occ::Kick(tx));
        }
    }

    fn try_tx(&mut self, tx: usize) {
        let now = self.now;
        let (link, dir) = (self.egress[tx].link, self.egress[tx].dir);
        let busy = self.links[link].2[dir].busy_until;
        if busy > now {
            self.schedule_kick(tx, busy);
            return;
        }
        let sched = self.sched_mut(tx);
        match sched.dequeue(now) {
            Some(pkt) => {
                self.transmit(tx, pkt);
                if self.sched_mut(tx).backlog() > 0 {
                    let busy = self.links[link].2[dir].busy_until;
                    self.schedule_kick(tx, busy);
                }
            }
            None => {
                if let Some(t) = sched.next_eligible_time(now) {
                    self.schedule_kick(tx, t.max(now + 1));
                }
            }
        }
    }

    fn transmit(&mut self, tx: usize, pkt: WirePacket) {
        let now = self.now;
        let eg = &self.egress[tx];
        let (link, dir, node) = (eg.link, eg.dir, eg.node);
        let cfg = &self.sc.links[link];
        let bytes = pkt.len() as u64;
        let ser = ((bytes as u128 * crate::NANOS_PER_SEC as u128).div_ceil(cfg.bandwidth as u128)) as SimTime;
        let from = if dir == 0 { cfg.a } else { cfg.b };
        let (loss, reorder, delay) = (cfg.loss, cfg.reorder, cfg.delay);

        let d = &mut self.links[link].2[dir];
        d.stats.tx_packets += 1;
        d.stats.tx_bytes += bytes;
        d.busy_until = now + ser;
        let nth = d.stats.tx_packets;
        let faulted = cfg.faults.iter().any(|f| f.from == from && f.drops(nth, now));

        let dropped = faulted || (loss > 0.0 && self.unit() < loss);
        let extra = if !dropped && reorder > 0.0 && self.unit() < reorder { ser } else { 0 };
        let full = self.trace.full();
        self.trace.push(now, node, RecordKind::PacketTx, || packet_detail(link, &pkt, full));
        let d = &mut self.links[link].2[dir];
        if dropped {
            d.stats.dropped_packets += 1;
            self.trace
                .push(now, node, RecordKind::PacketDropped, || packet_detail(link, &pkt, false));
        } else {
            d.stats.in_flight += 1;
            self.push(now + ser + delay + extra, Occ::Arrive { link, dir, pkt });
        }
    }

    fn arrive(&mut self, link: usize, dir: usize, pkt: WirePacket) {
        let now = self.now;
        let (a, b, dirs) = &mut self.links[link];
        dirs[dir].stats.in_flight -= 1;
        dirs[dir].stats.rx_packets += 1;
        let end = if dir == 0 { *b } else { *a };
        match end {
            Endpoint::Host(h) => {
                let node = Node::Host(h);
                let full = self.trace.full();
                self.trace.push(now, node, RecordKind::PacketRx, || packet_detail(link, &pkt, full));
                if pkt.dst_host != h {
                    self.stats.unroutable_packets += 1;
                    return;
                }
                let hi = self.by_addr[&pkt.dst_addr];
                self.receive(hi, pkt);
            }
            Endpoint::Switch => {
                let Some(&port) = self.port_of.get(&pkt.dst_host) else {
                    self.stats.unroutable_packets += 1;
                    return;
                };
                let q = QueueRef::index(0, pkt.prio.min(7) as u16);
                let tx = self.hosts.len() + port;
                if self.ports[port].sched.enqueue(q, pkt).is_ok() {
                    self.try_tx(tx);
                }
            }
        }
    }

    fn receive(&mut self, hi: usize, pkt: WirePacket) {
        let now = self.now;
        let node = Node::Host(self.hosts[hi].id);
        let (src_host, dst_host, src_addr, dst_addr) = (pkt.src_host, pkt.dst_host, pkt.src_addr, pkt.dst_addr);
        let buf = self.bufs.insert(pkt.transport);
        let raw = RawPacket {
            bytes: self.bufs.get(buf),
            buf,
            src_host,
            dst_host,
            src_addr,
            dst_addr,
        };
        match self.deploy.parse(&raw) {
            Ok(events) => {
                for ev in events {
                    self.process_event(hi, ev);
                }
            }
            Err(e) => {
                self.stats.parse_errors += 1;
                self.trace.push(now, node, RecordKind::ParseError, || format!("{e}"));
            }
        }
        self.bufs.free(buf);
    }
}

fn event_detail(ev: &Event) -> String {
    let mut s = format!("{} flow={}", ev.ty, ev.flow);
    for (k, v) in &ev.meta {
        let _ = write!(s, " {k}={v}");
    }
    if let Some(p) = ev.payload {
        let _ = write!(s, " payload={}", p.len);
    }
    s
}

fn instr_detail(ins: &Instruction) -> String {
    match ins.flow() {
        Some(f) => format!("{ins} flow={f}"),
        None => format!("{ins}"),
    }
}

fn packet_detail(link: usize, pkt: &WirePacket, with_header: bool) -> String {
    let mut s = format!(
        "link={link} src=h{} dst=h{} len={} prio={}",
        pkt.src_host,
        pkt.dst_host,
        pkt.len(),
        pkt.prio
    );
    if with_header {
        let n = (pkt.hdr_len as usize).min(pkt.transport.len());
        let _ = write!(s, " hdr={}", hex(&pkt.transport[..n]));
    }
    s
}
