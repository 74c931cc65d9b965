//! Protocol programs written against the event/instruction model.
//!
//! Each protocol supplies a [`DeploySpec`] (chains, contexts, parser, rules)
//! and an [`AppAdapter`] that turns workload sends into application events.

mod common;
pub mod homa;
pub mod quic;
pub mod tcp;

use alloc::boxed::Box;
use core::fmt;
use core::str::FromStr;

pub use common::{mix64, RangeSet};

use crate::registry::DeploySpec;
use crate::sim::{AppAdapter, Scenario, Tuning};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Protocol {
    Tcp,
    /// TCP-lite with the limited-transmit defect the checker is meant to
    /// find.
    TcpBuggy,
    Homa,
    Quic,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [Protocol::Tcp, Protocol::TcpBuggy, Protocol::Homa, Protocol::Quic];

    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Tcp => "tcp",
            Protocol::TcpBuggy => "tcp-buggy",
            Protocol::Homa => "homa",
            Protocol::Quic => "quic",
        }
    }

    pub fn from_name(s: &str) -> Option<Protocol> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }

    pub fn deploy_spec(&self, params: &ProtocolParams) -> DeploySpec {
        match self {
            Protocol::Tcp => tcp::deploy_spec(params, false),
            Protocol::TcpBuggy => tcp::deploy_spec(params, true),
            Protocol::Homa => homa::deploy_spec(params),
            Protocol::Quic => quic::deploy_spec(params),
        }
    }

    pub fn adapter(&self, params: &ProtocolParams) -> Box<dyn AppAdapter> {
        match self {
            Protocol::Tcp | Protocol::TcpBuggy => Box::new(tcp::TcpApp::default()),
            Protocol::Homa => Box::new(homa::HomaApp::default()),
            Protocol::Quic => Box::new(quic::QuicApp::new(params)),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        Protocol::from_name(s).ok_or(())
    }
}

/// Parameters every protocol program is instantiated with.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProtocolParams {
    /// Maximum transport payload per packet.
    pub mss: u32,
    pub tuning: Tuning,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            mss: 1460,
            tuning: Tuning::default(),
        }
    }
}

impl ProtocolParams {
    pub fn from_scenario(sc: &Scenario) -> Self {
        ProtocolParams {
            mss: sc.mss,
            tuning: sc.tuning.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::register_deploy;

    #[test]
    fn names_round_trip_and_specs_register() {
        for p in Protocol::ALL {
            assert_eq!(Protocol::from_name(p.name()), Some(p));
            register_deploy(p.deploy_spec(&ProtocolParams::default())).unwrap();
        }
        assert_eq!(Protocol::from_name("sctp"), None);
    }
}
