//! Checker domain files.
//!
//! ```toml
//! assumptions = ["tcp.send_next >= tcp.send_una"]
//!
//! [[field]]
//! path = "tcp.send_next"
//! lo = 1000
//! hi = 12680
//! step = 1460
//!
//! [[field]]
//! path = "tcp.dup_acks"
//! values = [0, 1, 2]
//! ```
//!
//! Fields are enumerated in file order, the last one fastest.

use serde::Deserialize;
use xport_core::checker::{Assumption, Domain, Values, Var};

use crate::config::ConfigError;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainFile {
    #[serde(default)]
    assumptions: Vec<String>,
    #[serde(default)]
    field: Vec<FieldSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldSpec {
    path: String,
    values: Option<Vec<u64>>,
    lo: Option<u64>,
    hi: Option<u64>,
    step: Option<u64>,
}

pub fn parse_domain(text: &str) -> Result<Domain, ConfigError> {
    let file: DomainFile = toml::from_str(text).map_err(|e| ConfigError::new("", e.message().to_string()))?;
    let mut d = Domain::new();
    for (i, f) in file.field.into_iter().enumerate() {
        let p = format!("field[{i}]");
        let values = match (f.values, f.lo, f.hi) {
            (Some(v), None, None) if f.step.is_none() => Values::Set(v),
            (None, Some(lo), Some(hi)) => Values::Range {
                lo,
                hi,
                step: f.step.unwrap_or(1),
            },
            _ => return Err(ConfigError::new(p, "give either `values` or `lo` and `hi`")),
        };
        d.vars.push(Var { path: f.path, values });
    }
    for (i, a) in file.assumptions.iter().enumerate() {
        let a: Assumption = a
            .parse()
            .map_err(|e: xport_core::checker::CheckError| ConfigError::new(format!("assumptions[{i}]"), e.to_string()))?;
        d.assumptions.push(a);
    }
    Ok(d)
}
