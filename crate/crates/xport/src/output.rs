//! Run artifacts.
//!
//! A run writes three files into `<out>/<scenario>-s<seed>/`:
//!
//! * `trace.ndjson`: a `run` header line with the scenario digest, then one
//!   object per trace record (`time`, `node`, `kind`, `detail`).
//! * `metrics.ndjson`: one object per completed message with `flow`,
//!   `stream`, `size`, `class`, `start`, `end`, `latency` and `slowdown`.
//! * `summary.json`: the [`RunReport`].
//!
//! Times are integer nanoseconds throughout.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use xport_core::sim::{MessageRecord, Metrics, Report, RunStats, Summary, TraceRecord};

use crate::config::Config;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of the canonical scenario text.
pub fn scenario_digest(cfg: &Config) -> String {
    sha256_hex(cfg.render().as_bytes())
}

/// Size class used to group messages in summaries.
pub fn size_class(size: u64) -> &'static str {
    match size {
        0..=65_536 => "small",
        65_537..=524_288 => "medium",
        _ => "large",
    }
}

pub const CLASSES: [&str; 3] = ["small", "medium", "large"];

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ClassSummary {
    pub class: &'static str,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Clone, Debug, Serialize, PartialEq, Eq)]
pub struct ExpectResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct RunReport {
    pub scenario: String,
    pub protocol: String,
    pub seed: u64,
    pub digest: String,
    pub trace_file: Option<PathBuf>,
    pub trace_digest: Option<String>,
    pub trace_records: usize,
    pub metrics_file: Option<PathBuf>,
    pub end_time: u64,
    pub expected_bytes: u64,
    pub delivered_bytes: u64,
    pub all_delivered: bool,
    pub stats: RunStats,
    pub overall: Summary,
    pub classes: Vec<ClassSummary>,
    pub expectations: Vec<ExpectResult>,
    pub passed: bool,
}

#[derive(Serialize)]
struct RunHeader<'a> {
    record: &'static str,
    scenario: &'a str,
    protocol: &'a str,
    seed: u64,
    digest: &'a str,
}

#[derive(Serialize)]
struct MessageLine {
    flow: u64,
    stream: Option<u64>,
    size: u64,
    class: &'static str,
    start: u64,
    end: u64,
    latency: u64,
    slowdown: Option<f64>,
}

pub fn trace_ndjson(cfg: &Config, digest: &str, records: &[TraceRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    let sc = &cfg.scenario;
    let header = RunHeader {
        record: "run",
        scenario: &sc.name,
        protocol: sc.protocol.name(),
        seed: sc.seed,
        digest,
    };
    serde_json::to_writer(&mut out, &header).expect("in-memory write");
    out.push(b'\n');
    for r in records {
        serde_json::to_writer(&mut out, r).expect("in-memory write");
        out.push(b'\n');
    }
    out
}

pub fn metrics_ndjson(msgs: &[MessageRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    for m in msgs {
        let (Some(end), Some(latency)) = (m.end, m.latency()) else { continue };
        let line = MessageLine {
            flow: m.flow,
            stream: m.stream,
            size: m.size,
            class: size_class(m.size),
            start: m.start,
            end,
            latency,
            slowdown: m.slowdown,
        };
        serde_json::to_writer(&mut out, &line).expect("in-memory write");
        out.push(b'\n');
    }
    out
}

/// Evaluates the config's expectations against a finished run.
pub fn evaluate(cfg: &Config, m: &Metrics, overall: &Summary) -> Vec<ExpectResult> {
    let e = &cfg.expect;
    let mut out = Vec::new();
    let mut add = |name, passed, detail: String| out.push(ExpectResult { name, passed, detail });
    if let Some(want) = e.all_delivered {
        let got = m.all_delivered();
        add("all_delivered", got == want, format!("{got}"));
    }
    if let Some(want) = e.all_completed {
        let got = overall.completed == overall.messages;
        add("all_completed", got == want, format!("{}/{}", overall.completed, overall.messages));
    }
    let rtx = m.stats.retransmitted_packets;
    if let Some(min) = e.min_retransmissions {
        add("min_retransmissions", rtx >= min, format!("{rtx} >= {min}"));
    }
    if let Some(max) = e.max_retransmissions {
        add("max_retransmissions", rtx <= max, format!("{rtx} <= {max}"));
    }
    if let Some(max) = e.max_p99_slowdown {
        match overall.p99_slowdown {
            Some(s) => add("max_p99_slowdown", s <= max, format!("{s:.3} <= {max}")),
            None => add("max_p99_slowdown", false, "no slowdown measured".to_string()),
        }
    }
    out
}

/// Builds the report for a finished run without touching the filesystem.
pub fn report(cfg: &Config, run: &Report) -> RunReport {
    let sc = &cfg.scenario;
    let m = &run.metrics;
    let overall = Summary::of(&m.messages);
    let classes = CLASSES
        .iter()
        .filter_map(|c| {
            let msgs: Vec<&MessageRecord> = m.messages.iter().filter(|x| size_class(x.size) == *c).collect();
            (!msgs.is_empty()).then(|| ClassSummary {
                class: c,
                summary: Summary::of(msgs),
            })
        })
        .collect();
    let expectations = evaluate(cfg, m, &overall);
    RunReport {
        scenario: sc.name.clone(),
        protocol: sc.protocol.name().to_string(),
        seed: sc.seed,
        digest: scenario_digest(cfg),
        trace_file: None,
        trace_digest: None,
        trace_records: run.trace.len(),
        metrics_file: None,
        end_time: m.end_time,
        expected_bytes: m.streams.iter().map(|s| s.expected).sum(),
        delivered_bytes: m.stats.delivered_bytes,
        all_delivered: m.all_delivered(),
        stats: m.stats.clone(),
        passed: expectations.iter().all(|e| e.passed),
        overall,
        classes,
        expectations,
    }
}

/// Writes the three run files and fills in their paths and the trace
/// digest. The trace file is skipped when tracing is off.
pub fn write_run(dir: &Path, cfg: &Config, run: &Report, rep: &mut RunReport) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    if cfg.scenario.trace != xport_core::sim::TraceLevel::Off {
        let trace = trace_ndjson(cfg, &rep.digest, run.trace.records());
        let path = dir.join("trace.ndjson");
        fs::write(&path, &trace)?;
        rep.trace_digest = Some(sha256_hex(&trace));
        rep.trace_file = Some(path);
    }
    let path = dir.join("metrics.ndjson");
    fs::write(&path, metrics_ndjson(&run.metrics.messages))?;
    rep.metrics_file = Some(path);
    let mut w = BufWriter::new(fs::File::create(dir.join("summary.json"))?);
    serde_json::to_writer_pretty(&mut w, rep)?;
    w.write_all(b"\n")?;
    w.flush()
}

fn opt(v: Option<f64>, scale: f64, prec: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.*}", prec, x / scale))
}

/// The table `run` prints.
pub fn summary_table(rep: &RunReport) -> String {
    let mut s = String::new();
    let pct = if rep.expected_bytes == 0 {
        100.0
    } else {
        rep.delivered_bytes as f64 * 100.0 / rep.expected_bytes as f64
    };
    let _ = writeln!(s, "scenario   {}", rep.scenario);
    let _ = writeln!(s, "protocol   {}", rep.protocol);
    let _ = writeln!(s, "seed       {}", rep.seed);
    let _ = writeln!(s, "digest     {}", rep.digest);
    let _ = writeln!(s, "end        {:.6} s", rep.end_time as f64 / 1e9);
    let _ = writeln!(
        s,
        "delivered  {}/{} bytes ({pct:.1}%)",
        rep.delivered_bytes, rep.expected_bytes
    );
    let _ = writeln!(
        s,
        "retrans    {} packets, {} bytes",
        rep.stats.retransmitted_packets, rep.stats.retransmitted_bytes
    );
    let _ = writeln!(
        s,
        "\n{:<8} {:>6} {:>6} {:>10} {:>12} {:>12} {:>12} {:>9} {:>9}",
        "class", "msgs", "done", "tput_mbps", "mean_lat_us", "p50_lat_us", "p99_lat_us", "p50_slow", "p99_slow"
    );
    let row = |s: &mut String, name: &str, x: &Summary| {
        let _ = writeln!(
            s,
            "{:<8} {:>6} {:>6} {:>10} {:>12} {:>12} {:>12} {:>9} {:>9}",
            name,
            x.messages,
            x.completed,
            opt(x.throughput_bps, 1e6, 1),
            opt(x.mean_latency_ns, 1e3, 1),
            opt(x.p50_latency_ns, 1e3, 1),
            opt(x.p99_latency_ns, 1e3, 1),
            opt(x.p50_slowdown, 1.0, 2),
            opt(x.p99_slowdown, 1.0, 2),
        );
    };
    for c in &rep.classes {
        row(&mut s, c.class, &c.summary);
    }
    row(&mut s, "all", &rep.overall);
    if !rep.expectations.is_empty() {
        s.push('\n');
        for e in &rep.expectations {
            let _ = writeln!(s, "expect {:<20} {:<4} ({})", e.name, if e.passed { "pass" } else { "FAIL" }, e.detail);
        }
    }
    let _ = writeln!(s, "\nresult     {}", if rep.passed { "pass" } else { "FAIL" });
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classes_split_on_size() {
        assert_eq!(size_class(32_768), "small");
        assert_eq!(size_class(100_000), "medium");
        assert_eq!(size_class(500_000), "medium");
        assert_eq!(size_class(1 << 20), "large");
    }

    #[test]
    fn metrics_skip_incomplete() {
        let m = |end| MessageRecord { line: 0, flow: 3, stream: Some(1), size: 10, start: 5, end, slowdown: Some(1.5) };
        let text = String::from_utf8(metrics_ndjson(&[m(Some(25)), m(None)])).unwrap();
        assert_eq!(
            text,
            "{\"flow\":3,\"stream\":1,\"size\":10,\"class\":\"small\",\"start\":5,\"end\":25,\"latency\":20,\"slowdown\":1.5}\n"
        );
    }

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
