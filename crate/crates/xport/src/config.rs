//! Scenario files.
//!
//! A scenario is one TOML document:
//!
//! ```toml
//! name = "tcp_lossy"
//! protocol = "tcp"
//! seed = 1
//! duration = "60s"
//! mss = 1460
//! trace = "summary"
//! workload = [
//!     "at 0 host 1 send flow 1 bytes 1048576",
//!     "at 2ms host 1 send flow 1 bytes 32768 stream 1",
//! ]
//!
//! [tuning]
//! homa_unscheduled = 60000
//!
//! [expect]
//! all_delivered = true
//! min_retransmissions = 1
//!
//! [[hosts]]
//! id = 1
//! addr = "10.0.0.1"
//!
//! [[links]]
//! a = "h1"
//! b = "h2"          # or "switch"
//! bandwidth = "1Gbps"
//! delay = "50us"
//! loss = 0.01
//! faults = [{ from = "h2", drop_all_after = "5ms" }, { from = "h1", drop_nth = [3] }]
//!
//! [[flows]]
//! id = 1
//! src = 1
//! dst = 2
//! ```
//!
//! Times are integer nanoseconds or a number with `ns`, `us`, `ms` or `s`.
//! Bandwidths are integer bits per second or a number with `bps`, `Kbps`,
//! `Mbps` or `Gbps`. Errors name the offending field, e.g.
//! `links[0].bandwidth`.

use std::fmt::Write as _;
use std::net::Ipv4Addr;

use toml::{Table, Value};
use xport_core::protocols::Protocol;
use xport_core::sim::{
    Endpoint, Fault, FaultRule, FlowCfg, HostCfg, LinkCfg, Scenario, ScenarioError, SendCmd,
    TraceLevel, Tuning,
};
use xport_core::SimTime;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{}: {message}", if path.is_empty() { "config" } else { path })]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl From<ScenarioError> for ConfigError {
    fn from(e: ScenarioError) -> Self {
        ConfigError::new(e.path, e.message)
    }
}

/// Checks evaluated after a run; any failure makes `run` exit with 1.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Expect {
    pub all_delivered: Option<bool>,
    pub all_completed: Option<bool>,
    pub min_retransmissions: Option<u64>,
    pub max_retransmissions: Option<u64>,
    pub max_p99_slowdown: Option<f64>,
}

impl Expect {
    pub fn is_empty(&self) -> bool {
        *self == Expect::default()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub scenario: Scenario,
    pub expect: Expect,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::new("", e.message().to_string()))?;
        let cfg = from_table(&table)?;
        cfg.scenario.validate()?;
        Ok(cfg)
    }

    /// Canonical text form. Parsing it gives back the same config, and any
    /// change to the config changes it.
    pub fn render(&self) -> String {
        render(self)
    }
}

/// Typed access to one table, tracking the field path for errors and
/// rejecting unknown keys.
struct Fields<'a> {
    path: String,
    table: &'a Table,
    seen: Vec<&'static str>,
}

impl<'a> Fields<'a> {
    fn new(path: impl Into<String>, table: &'a Table) -> Self {
        Fields {
            path: path.into(),
            table,
            seen: Vec::new(),
        }
    }

    fn at(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    fn err(&self, key: &str, msg: impl Into<String>) -> ConfigError {
        ConfigError::new(self.at(key), msg)
    }

    fn get(&mut self, key: &'static str) -> Option<&'a Value> {
        self.seen.push(key);
        self.table.get(key)
    }

    fn req(&mut self, key: &'static str) -> Result<&'a Value, ConfigError> {
        self.get(key).ok_or_else(|| self.err(key, "missing required field"))
    }

    fn opt_u64(&mut self, key: &'static str) -> Result<Option<u64>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(_) => Err(self.err(key, "expected a non-negative integer")),
        }
    }

    fn u64(&mut self, key: &'static str) -> Result<u64, ConfigError> {
        self.req(key)?;
        Ok(self.opt_u64(key)?.unwrap())
    }

    fn opt_f64(&mut self, key: &'static str) -> Result<Option<f64>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Float(f)) => Ok(Some(*f)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(_) => Err(self.err(key, "expected a number")),
        }
    }

    fn opt_bool(&mut self, key: &'static str) -> Result<Option<bool>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(_) => Err(self.err(key, "expected true or false")),
        }
    }

    fn opt_str(&mut self, key: &'static str) -> Result<Option<&'a str>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(self.err(key, "expected a string")),
        }
    }

    fn opt_time(&mut self, key: &'static str) -> Result<Option<SimTime>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => parse_time_value(v).map(Some).map_err(|m| self.err(key, m)),
        }
    }

    fn time(&mut self, key: &'static str) -> Result<SimTime, ConfigError> {
        self.req(key)?;
        Ok(self.opt_time(key)?.unwrap())
    }

    fn tables(&mut self, key: &'static str) -> Result<Vec<(String, &'a Table)>, ConfigError> {
        let Some(v) = self.get(key) else {
            return Ok(Vec::new());
        };
        let Value::Array(items) = v else {
            return Err(self.err(key, "expected an array of tables"));
        };
        items
            .iter()
            .enumerate()
            .map(|(i, item)| {
                let p = format!("{}[{i}]", self.at(key));
                match item {
                    Value::Table(t) => Ok((p, t)),
                    _ => Err(ConfigError::new(p, "expected a table")),
                }
            })
            .collect()
    }

    fn done(self) -> Result<(), ConfigError> {
        match self.table.keys().find(|k| !self.seen.contains(&k.as_str())) {
            Some(k) => Err(self.err(k, "unknown field")),
            None => Ok(()),
        }
    }
}

fn from_table(t: &Table) -> Result<Config, ConfigError> {
    let mut f = Fields::new("", t);
    let mut sc = Scenario::pair(Protocol::Tcp, 1, 0);
    sc.hosts.clear();
    sc.links.clear();

    sc.name = f.opt_str("name")?.unwrap_or("unnamed").to_string();
    let proto = f.opt_str("protocol")?.ok_or_else(|| f.err("protocol", "missing required field"))?;
    sc.protocol = proto.parse().map_err(|_| f.err("protocol", format!("unknown protocol `{proto}`")))?;
    sc.seed = f.opt_u64("seed")?.unwrap_or(1);
    sc.duration = f.opt_time("duration")?.unwrap_or(sc.duration);
    if let Some(m) = f.opt_u64("mss")? {
        sc.mss = u32::try_from(m).map_err(|_| f.err("mss", "out of range"))?;
    }
    if let Some(level) = f.opt_str("trace")? {
        sc.trace = parse_trace_level(level).ok_or_else(|| f.err("trace", "expected full, summary or off"))?;
    }

    if let Some(v) = f.get("tuning") {
        let Value::Table(tt) = v else {
            return Err(f.err("tuning", "expected a table"));
        };
        let mut g = Fields::new("tuning", tt);
        let d = Tuning::default();
        sc.tuning = Tuning {
            homa_unscheduled: g.opt_u64("homa_unscheduled")?.unwrap_or(d.homa_unscheduled),
            homa_budget: g.opt_u64("homa_budget")?.unwrap_or(d.homa_budget),
            quic_quantum: g.opt_u64("quic_quantum")?.unwrap_or(d.quic_quantum),
        };
        g.done()?;
    }

    let mut expect = Expect::default();
    if let Some(v) = f.get("expect") {
        let Value::Table(et) = v else {
            return Err(f.err("expect", "expected a table"));
        };
        let mut g = Fields::new("expect", et);
        expect = Expect {
            all_delivered: g.opt_bool("all_delivered")?,
            all_completed: g.opt_bool("all_completed")?,
            min_retransmissions: g.opt_u64("min_retransmissions")?,
            max_retransmissions: g.opt_u64("max_retransmissions")?,
            max_p99_slowdown: g.opt_f64("max_p99_slowdown")?,
        };
        g.done()?;
    }

    for (p, ht) in f.tables("hosts")? {
        let mut g = Fields::new(p, ht);
        let id = g.u64("id")?;
        let id = u16::try_from(id).map_err(|_| g.err("id", "must fit in 16 bits"))?;
        let addr = match g.req("addr")? {
            Value::String(s) => s
                .parse::<Ipv4Addr>()
                .map(u32::from)
                .map_err(|_| g.err("addr", "expected a dotted IPv4 address"))?,
            Value::Integer(i) => u32::try_from(*i).map_err(|_| g.err("addr", "must fit in 32 bits"))?,
            _ => return Err(g.err("addr", "expected an address")),
        };
        g.done()?;
        sc.hosts.push(HostCfg { id, addr });
    }

    for (p, lt) in f.tables("links")? {
        let mut g = Fields::new(p, lt);
        let a = endpoint(&mut g, "a")?;
        let b = endpoint(&mut g, "b")?;
        let bandwidth = parse_bandwidth_value(g.req("bandwidth")?).map_err(|m| g.err("bandwidth", m))?;
        let delay = g.time("delay")?;
        let mut link = LinkCfg::new(a, b, delay, bandwidth);
        link.loss = g.opt_f64("loss")?.unwrap_or(0.0);
        link.reorder = g.opt_f64("reorder")?.unwrap_or(0.0);
        for (fp, ft) in g.tables("faults")? {
            let mut h = Fields::new(fp, ft);
            let from = endpoint(&mut h, "from")?;
            let after = h.opt_time("drop_all_after")?;
            let nth = match h.get("drop_nth") {
                None => None,
                Some(Value::Array(items)) => Some(
                    items
                        .iter()
                        .map(|v| match v {
                            Value::Integer(i) if *i > 0 => Ok(*i as u64),
                            _ => Err(h.err("drop_nth", "expected positive integers")),
                        })
                        .collect::<Result<Vec<_>, _>>()?,
                ),
                Some(_) => return Err(h.err("drop_nth", "expected an array")),
            };
            let rule = match (after, nth) {
                (Some(after), None) => FaultRule::DropAll { after },
                (None, Some(list)) => FaultRule::DropNth(list),
                _ => return Err(h.err("drop_all_after", "give exactly one of drop_all_after and drop_nth")),
            };
            h.done()?;
            link.faults.push(Fault { from, rule });
        }
        g.done()?;
        sc.links.push(link);
    }

    for (p, ft) in f.tables("flows")? {
        let mut g = Fields::new(p, ft);
        let id = g.u64("id")?;
        let src = host_id(&mut g, "src")?;
        let dst = host_id(&mut g, "dst")?;
        g.done()?;
        sc.flows.push(FlowCfg { id, src, dst });
    }

    if let Some(v) = f.get("workload") {
        let Value::Array(lines) = v else {
            return Err(f.err("workload", "expected an array of strings"));
        };
        for (i, line) in lines.iter().enumerate() {
            let p = format!("workload[{i}]");
            let Value::String(s) = line else {
                return Err(ConfigError::new(p, "expected a string"));
            };
            sc.workload.push(parse_send(s).map_err(|m| ConfigError::new(p, m))?);
        }
    }
    f.done()?;
    Ok(Config { scenario: sc, expect })
}

fn endpoint(g: &mut Fields<'_>, key: &'static str) -> Result<Endpoint, ConfigError> {
    let v = g.req(key)?;
    let bad = || g.err(key, "expected `switch` or a host such as `h1`");
    match v {
        Value::String(s) if s == "switch" => Ok(Endpoint::Switch),
        Value::String(s) => s
            .strip_prefix('h')
            .and_then(|n| n.parse().ok())
            .map(Endpoint::Host)
            .ok_or_else(bad),
        Value::Integer(i) => u16::try_from(*i).map(Endpoint::Host).map_err(|_| bad()),
        _ => Err(bad()),
    }
}

fn host_id(g: &mut Fields<'_>, key: &'static str) -> Result<u16, ConfigError> {
    let v = g.u64(key)?;
    u16::try_from(v).map_err(|_| g.err(key, "must fit in 16 bits"))
}

pub fn parse_trace_level(s: &str) -> Option<TraceLevel> {
    match s {
        "full" => Some(TraceLevel::Full),
        "summary" => Some(TraceLevel::Summary),
        "off" => Some(TraceLevel::Off),
        _ => None,
    }
}

pub fn trace_level_name(l: TraceLevel) -> &'static str {
    match l {
        TraceLevel::Full => "full",
        TraceLevel::Summary => "summary",
        TraceLevel::Off => "off",
    }
}

fn split_unit(s: &str) -> (&str, &str) {
    let s = s.trim();
    let at = s.find(|c: char| !(c.is_ascii_digit() || c == '.')).unwrap_or(s.len());
    (&s[..at], s[at..].trim())
}

fn scaled(num: &str, scale: u64) -> Option<u64> {
    if let Ok(n) = num.parse::<u64>() {
        return n.checked_mul(scale);
    }
    let f: f64 = num.parse().ok()?;
    let v = f * scale as f64;
    (v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v < u64::MAX as f64).then_some(v as u64)
}

/// `"50us"` → 50000 (nanoseconds).
pub fn parse_time(s: &str) -> Result<SimTime, String> {
    let (num, unit) = split_unit(s);
    let scale = match unit {
        "" | "ns" => 1,
        "us" => 1_000,
        "ms" => 1_000_000,
        "s" => 1_000_000_000,
        _ => return Err(format!("unknown time unit `{unit}`")),
    };
    scaled(num, scale).ok_or_else(|| format!("bad time `{s}`"))
}

fn parse_time_value(v: &Value) -> Result<SimTime, String> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        Value::String(s) => parse_time(s),
        _ => Err("expected nanoseconds or a time such as \"50us\"".to_string()),
    }
}

/// `"1Gbps"` → bytes per second.
pub fn parse_bandwidth(s: &str) -> Result<u64, String> {
    let (num, unit) = split_unit(s);
    let scale = match unit {
        "" | "bps" => 1,
        "Kbps" => 1_000,
        "Mbps" => 1_000_000,
        "Gbps" => 1_000_000_000,
        _ => return Err(format!("unknown bandwidth unit `{unit}`")),
    };
    let bits = scaled(num, scale).ok_or_else(|| format!("bad bandwidth `{s}`"))?;
    if bits % 8 != 0 {
        return Err("must be a whole number of bytes per second".to_string());
    }
    Ok(bits / 8)
}

fn parse_bandwidth_value(v: &Value) -> Result<u64, String> {
    match v {
        Value::Integer(i) if *i >= 0 => parse_bandwidth(&i.to_string()),
        Value::String(s) => parse_bandwidth(s),
        _ => Err("expected bits per second or a rate such as \"1Gbps\"".to_string()),
    }
}

/// `at <time> host <id> send flow <k> bytes <n> [stream <s>]`.
pub fn parse_send(line: &str) -> Result<SendCmd, String> {
    let w: Vec<&str> = line.split_whitespace().collect();
    let usage = || format!("expected `at <time> host <id> send flow <k> bytes <n> [stream <s>]`, got `{line}`");
    let num = |s: &str, what: &str| s.parse::<u64>().map_err(|_| format!("bad {what} `{s}`"));
    match w.as_slice() {
        ["at", t, "host", h, "send", "flow", k, "bytes", n, rest @ ..] => {
            let stream = match rest {
                [] => None,
                ["stream", s] => Some(num(s, "stream")?),
                _ => return Err(usage()),
            };
            Ok(SendCmd {
                at: parse_time(t)?,
                host: num(h, "host")?.try_into().map_err(|_| format!("bad host `{h}`"))?,
                flow: num(k, "flow")?,
                bytes: num(n, "bytes")?,
                stream,
            })
        }
        _ => Err(usage()),
    }
}

fn render_endpoint(e: Endpoint) -> String {
    match e {
        Endpoint::Host(h) => format!("h{h}"),
        Endpoint::Switch => "switch".to_string(),
    }
}

fn render(cfg: &Config) -> String {
    let sc = &cfg.scenario;
    let mut s = String::new();
    let q = |x: &str| Value::String(x.to_string()).to_string();
    let _ = writeln!(s, "name = {}", q(&sc.name));
    let _ = writeln!(s, "protocol = {}", q(sc.protocol.name()));
    let _ = writeln!(s, "seed = {}", sc.seed);
    let _ = writeln!(s, "duration = {}", sc.duration);
    let _ = writeln!(s, "mss = {}", sc.mss);
    let _ = writeln!(s, "trace = {}", q(trace_level_name(sc.trace)));
    s.push_str("workload = [\n");
    for w in &sc.workload {
        let stream = w.stream.map(|x| format!(" stream {x}")).unwrap_or_default();
        let line = format!("at {} host {} send flow {} bytes {}{stream}", w.at, w.host, w.flow, w.bytes);
        let _ = writeln!(s, "    {},", q(&line));
    }
    s.push_str("]\n\n[tuning]\n");
    let t = &sc.tuning;
    let _ = writeln!(s, "homa_unscheduled = {}", t.homa_unscheduled);
    let _ = writeln!(s, "homa_budget = {}", t.homa_budget);
    let _ = writeln!(s, "quic_quantum = {}", t.quic_quantum);
    if !cfg.expect.is_empty() {
        let e = &cfg.expect;
        s.push_str("\n[expect]\n");
        if let Some(v) = e.all_delivered {
            let _ = writeln!(s, "all_delivered = {v}");
        }
        if let Some(v) = e.all_completed {
            let _ = writeln!(s, "all_completed = {v}");
        }
        if let Some(v) = e.min_retransmissions {
            let _ = writeln!(s, "min_retransmissions = {v}");
        }
        if let Some(v) = e.max_retransmissions {
            let _ = writeln!(s, "max_retransmissions = {v}");
        }
        if let Some(v) = e.max_p99_slowdown {
            let _ = writeln!(s, "max_p99_slowdown = {v:?}");
        }
    }
    for h in &sc.hosts {
        let _ = writeln!(s, "\n[[hosts]]\nid = {}\naddr = {}", h.id, q(&Ipv4Addr::from(h.addr).to_string()));
    }
    for l in &sc.links {
        let _ = writeln!(
            s,
            "\n[[links]]\na = {}\nb = {}\nbandwidth = {}\ndelay = {}\nloss = {:?}\nreorder = {:?}",
            q(&render_endpoint(l.a)),
            q(&render_endpoint(l.b)),
            q(&format!("{}bps", l.bandwidth * 8)),
            l.delay,
            l.loss,
            l.reorder,
        );
        for fault in &l.faults {
            let rule = match &fault.rule {
                FaultRule::DropAll { after } => format!("drop_all_after = {after}"),
                FaultRule::DropNth(list) => {
                    let items: Vec<String> = list.iter().map(u64::to_string).collect();
                    format!("drop_nth = [{}]", items.join(", "))
                }
            };
            let _ = writeln!(s, "\n[[links.faults]]\nfrom = {}\n{rule}", q(&render_endpoint(fault.from)));
        }
    }
    for f in &sc.flows {
        let _ = writeln!(s, "\n[[flows]]\nid = {}\nsrc = {}\ndst = {}", f.id, f.src, f.dst);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
        name = "basic"
        protocol = "tcp"
        duration = "2s"
        workload = ["at 1ms host 1 send flow 7 bytes 1000", "at 0 host 1 send flow 7 bytes 5 stream 2"]

        [[hosts]]
        id = 1
        addr = "10.0.0.1"
        [[hosts]]
        id = 2
        addr = 167772162

        [[links]]
        a = "h1"
        b = "h2"
        bandwidth = "1Gbps"
        delay = "50us"
        loss = 0.01
        faults = [{ from = "h2", drop_nth = [1, 3] }]

        [[flows]]
        id = 7
        src = 1
        dst = 2
    "#;

    #[test]
    fn parses_units_and_lines() {
        let c = Config::parse(BASIC).unwrap();
        let sc = &c.scenario;
        assert_eq!(sc.duration, 2_000_000_000);
        assert_eq!(sc.links[0].bandwidth, 125_000_000);
        assert_eq!(sc.links[0].delay, 50_000);
        assert_eq!(sc.hosts[0].addr, 0x0a00_0001);
        assert_eq!(sc.hosts[1].addr, 0x0a00_0002);
        assert_eq!(sc.workload[0].at, 1_000_000);
        assert_eq!(sc.workload[1].stream, Some(2));
        assert_eq!(sc.links[0].faults[0].rule, FaultRule::DropNth(vec![1, 3]));
        assert_eq!(sc.seed, 1);
    }

    #[test]
    fn render_round_trips() {
        let c = Config::parse(BASIC).unwrap();
        let text = c.render();
        assert_eq!(Config::parse(&text).unwrap(), c);
        assert_eq!(Config::parse(&text).unwrap().render(), text);
    }

    #[test]
    fn missing_bandwidth_names_the_field() {
        let text = BASIC.replace("bandwidth = \"1Gbps\"", "");
        let e = Config::parse(&text).unwrap_err();
        assert_eq!(e.path, "links[0].bandwidth");
        assert_eq!(e.to_string(), "links[0].bandwidth: missing required field");
    }

    #[test]
    fn field_paths_in_errors() {
        let cases = [
            ("loss = 0.01", "loss = 2.0", "links[0].loss"),
            ("addr = 167772162", "addr = \"ten\"", "hosts[1].addr"),
            ("src = 1", "src = 9", "flows[0].src"),
            ("protocol = \"tcp\"", "protocol = \"sctp\"", "protocol"),
            ("duration = \"2s\"", "duration = \"2 fortnights\"", "duration"),
            ("a = \"h1\"", "a = \"h1\"\ncolour = 3", "links[0].colour"),
            ("bytes 1000\"", "bytes lots\"", "workload[0]"),
            ("drop_nth = [1, 3]", "drop_nth = [1], drop_all_after = 5", "links[0].faults[0].drop_all_after"),
        ];
        for (from, to, path) in cases {
            let text = BASIC.replace(from, to);
            assert_ne!(text, BASIC, "{from}");
            assert_eq!(Config::parse(&text).unwrap_err().path, path, "{to}");
        }
    }

    #[test]
    fn units() {
        assert_eq!(parse_time("1.5ms"), Ok(1_500_000));
        assert_eq!(parse_time("7"), Ok(7));
        assert!(parse_time("1.5ns").is_err());
        assert_eq!(parse_bandwidth("100Mbps"), Ok(12_500_000));
        assert_eq!(parse_bandwidth("8"), Ok(1));
        assert!(parse_bandwidth("9bps").is_err());
        assert!(parse_send("at 0 host 1 send flow 1").is_err());
    }
}
