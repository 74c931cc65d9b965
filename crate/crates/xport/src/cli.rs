//! Command-line front end.
//!
//! Exit codes: 0 success, 1 a failed expectation, check or validation,
//! 2 a usage or configuration error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use xport_core::checker::{self, CheckError};
use xport_core::model::Granularity;
use xport_core::protocols::{Protocol, ProtocolParams};
use xport_core::registry::{register_deploy, DeploySpec, EventSchedSpec, RegistryError};
use xport_core::sim::run_scenario;

use crate::config::{parse_trace_level, Config, ConfigError};
use crate::domain::parse_domain;
use crate::output::{report, summary_table, write_run, RunReport};
use crate::scenarios;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "XPORT_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "xport-out";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "xport", version, about = "Run transport protocol programs on a simulated network")]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Run a scenario file or a built-in scenario.
    Run {
        /// Path to a scenario file, or the name of a built-in scenario.
        config: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: $XPORT_OUT_DIR, else ./xport-out).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = ["full", "summary", "off"])]
        trace: Option<String>,
        /// Run the scenario with a different protocol.
        #[arg(long)]
        protocol: Option<String>,
    },
    /// Run a built-in chain property over its bounded domain.
    Check {
        protocol: String,
        property: String,
        /// Domain file replacing the property's built-in domain.
        #[arg(long)]
        domain: Option<PathBuf>,
        /// Check the TCP variant with the seeded limited-transmit defect.
        #[arg(long)]
        buggy: bool,
    },
    /// Register a protocol and print what it declares.
    Validate {
        protocol: String,
        #[arg(long)]
        buggy: bool,
    },
    /// List the built-in scenarios.
    ListScenarios,
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    let (code, stdout, stderr) = match cli.cmd {
        Cmd::Run {
            config,
            seed,
            out: dir,
            trace,
            protocol,
        } => cmd_run(&config, seed, dir, trace.as_deref(), protocol.as_deref()),
        Cmd::Check {
            protocol,
            property,
            domain,
            buggy,
        } => cmd_check(&protocol, &property, domain.as_deref(), buggy),
        Cmd::Validate { protocol, buggy } => match protocol_arg(&protocol, buggy) {
            Ok(p) => {
                let (code, text) = validate(p.deploy_spec(&ProtocolParams::default()));
                if code == EXIT_OK {
                    (code, text, String::new())
                } else {
                    (code, String::new(), text)
                }
            }
            Err(e) => (EXIT_ERROR, String::new(), e),
        },
        Cmd::ListScenarios => {
            let mut s = String::new();
            for (name, text) in scenarios::ALL {
                let summary = text.lines().next().unwrap_or("").trim_start_matches('#').trim();
                let _ = writeln!(s, "{name:<20} {summary}");
            }
            (EXIT_OK, s, String::new())
        }
    };
    let _ = out.write_all(stdout.as_bytes());
    let _ = err.write_all(stderr.as_bytes());
    code
}

fn protocol_arg(name: &str, buggy: bool) -> Result<Protocol, String> {
    match (Protocol::from_name(name), buggy) {
        (Some(Protocol::Tcp), true) => Ok(Protocol::TcpBuggy),
        (Some(_), true) => Err("--buggy only applies to tcp\n".to_string()),
        (Some(p), false) => Ok(p),
        (None, _) => Err(format!("unknown protocol `{name}`\n")),
    }
}

/// Reads a scenario from a path, falling back to the built-in of that name.
pub fn load_config(arg: &str) -> Result<Config, String> {
    let path = Path::new(arg);
    let text = if path.exists() {
        std::fs::read_to_string(path).map_err(|e| format!("{arg}: {e}"))?
    } else if let Some(text) = scenarios::get(arg) {
        text.to_string()
    } else {
        return Err(format!("{arg}: no such file or built-in scenario"));
    };
    Config::parse(&text).map_err(|e| format!("{arg}: {e}"))
}

pub fn out_base(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

/// Runs a config and writes its files under `base`.
pub fn execute(cfg: &Config, base: &Path) -> Result<RunReport, String> {
    let run = run_scenario(&cfg.scenario).map_err(|e| e.to_string())?;
    let mut rep = report(cfg, &run);
    let dir = base.join(format!("{}-s{}", cfg.scenario.name, cfg.scenario.seed));
    write_run(&dir, cfg, &run, &mut rep).map_err(|e| format!("{}: {e}", dir.display()))?;
    Ok(rep)
}

fn cmd_run(
    arg: &str,
    seed: Option<u64>,
    dir: Option<PathBuf>,
    trace: Option<&str>,
    protocol: Option<&str>,
) -> (i32, String, String) {
    let fail = |m: String| (EXIT_ERROR, String::new(), m + "\n");
    let mut cfg = match load_config(arg) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    if let Some(s) = seed {
        cfg.scenario.seed = s;
    }
    if let Some(t) = trace.and_then(parse_trace_level) {
        cfg.scenario.trace = t;
    }
    if let Some(p) = protocol {
        match Protocol::from_name(p) {
            Some(p) => cfg.scenario.protocol = p,
            None => return fail(ConfigError::new("protocol", format!("unknown protocol `{p}`")).to_string()),
        }
    }
    let rep = match execute(&cfg, &out_base(dir)) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let mut s = summary_table(&rep);
    if let Some(p) = &rep.trace_file {
        let _ = writeln!(s, "trace      {}", p.display());
    }
    if let Some(p) = &rep.metrics_file {
        let _ = writeln!(s, "metrics    {}", p.display());
    }
    (if rep.passed { EXIT_OK } else { EXIT_FAIL }, s, String::new())
}

fn cmd_check(protocol: &str, property: &str, domain: Option<&Path>, buggy: bool) -> (i32, String, String) {
    let fail = |m: String| (EXIT_ERROR, String::new(), m + "\n");
    let p = match protocol_arg(protocol, buggy) {
        Ok(p) => p,
        Err(e) => return (EXIT_ERROR, String::new(), e),
    };
    let domain = match domain {
        None => None,
        Some(path) => {
            let text = match std::fs::read_to_string(path) {
                Ok(t) => t,
                Err(e) => return fail(format!("{}: {e}", path.display())),
            };
            match parse_domain(&text) {
                Ok(d) => Some(d),
                Err(e) => return fail(format!("{}: {e}", path.display())),
            }
        }
    };
    match checker::check(p, property, domain) {
        Ok(r) => (if r.passed() { EXIT_OK } else { EXIT_FAIL }, r.to_string(), String::new()),
        Err(e @ CheckError::UnknownProperty { .. }) => {
            let names: Vec<&str> = checker::properties()
                .into_iter()
                .filter(|x| x.protocols.contains(&p))
                .map(|x| x.name)
                .collect();
            fail(format!("{e} (available: {})", names.join(", ")))
        }
        Err(e) => fail(e.to_string()),
    }
}

fn granularity(g: Granularity) -> String {
    match g {
        Granularity::PerFlow => "per-flow".to_string(),
        Granularity::Group(n) => format!("group({n})"),
        Granularity::Global => "global".to_string(),
    }
}

/// Registers `spec` and lists its declarations; registry errors are
/// returned verbatim with exit code 1.
pub fn validate(spec: DeploySpec) -> (i32, String) {
    let listing = describe(&spec);
    match register_deploy(spec) {
        Ok(_) => (EXIT_OK, listing + "valid\n"),
        Err(e) => (EXIT_FAIL, format!("{}\n", registry_error(&e))),
    }
}

fn registry_error(e: &RegistryError) -> String {
    match e {
        RegistryError::DanglingReference { .. } => format!("DanglingReference: {e}"),
        _ => format!("invalid: {e}"),
    }
}

fn describe(spec: &DeploySpec) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "protocol {}", spec.name);
    let _ = writeln!(s, "flow key arity {}", spec.flow_arity);
    s.push_str("dispatch\n");
    for (event, chain) in spec.dispatch.iter() {
        let _ = writeln!(s, "  {event:<18} -> {}", chain.join(", "));
    }
    s.push_str("contexts\n");
    for c in &spec.ctx_specs {
        let _ = write!(s, "  {:<12} {}", c.name, granularity(c.granularity));
        for t in &c.timers {
            let _ = write!(s, " timer {}->{}", t.id, t.event);
        }
        for w in &c.windows {
            let _ = write!(s, " window {}[{}]", w.name, w.capacity);
        }
        s.push('\n');
        let fields: Vec<String> = c.layout().iter().map(|f| format!("{}:{}", f.name, f.ty)).collect();
        let _ = writeln!(s, "    fields {}", fields.join(" "));
    }
    if !spec.scratch.is_empty() {
        let names: Vec<&str> = spec.scratch.iter().map(|(n, _)| *n).collect();
        let _ = writeln!(s, "scratch {}", names.join(", "));
    }
    s.push_str("segmentation rules\n");
    if spec.seg_rules.is_empty() {
        s.push_str("  none\n");
    }
    for r in &spec.seg_rules {
        for f in &r.fields {
            let _ = writeln!(s, "  {} {}: first={:?} mid={:?} last={:?}", r.id, f.field, f.first, f.mid, f.last);
        }
    }
    s.push_str("coalescing\n");
    for c in &spec.coalescing {
        let _ = writeln!(s, "  match [{}] {:?} {:?}", c.match_fields.join(", "), c.guard, c.action);
    }
    s.push_str("packet scheduler\n");
    for line in spec.pkt_sched.to_string().lines() {
        let _ = writeln!(s, "  {line}");
    }
    match &spec.ev_sched {
        EventSchedSpec::Fifo => s.push_str("event scheduler fifo\n"),
        EventSchedSpec::Composed(c) => {
            s.push_str("event scheduler\n");
            for line in c.to_string().lines() {
                let _ = writeln!(s, "  {line}");
            }
        }
    }
    s
}
