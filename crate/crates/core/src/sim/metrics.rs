use alloc::string::String;
use alloc::vec::Vec;

use super::scenario::Endpoint;
use crate::SimTime;

/// One application message from send to full delivery.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct MessageRecord {
    /// Index of the workload line that sent it.
    pub line: usize,
    pub flow: u64,
    pub stream: Option<u64>,
    pub size: u64,
    pub start: SimTime,
    pub end: Option<SimTime>,
    /// Latency divided by the same message's latency on an idle network.
    pub slowdown: Option<f64>,
}

impl MessageRecord {
    pub fn latency(&self) -> Option<SimTime> {
        self.end.map(|e| e - self.start)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct DirStats {
    pub tx_packets: u64,
    pub tx_bytes: u64,
    pub rx_packets: u64,
    pub dropped_packets: u64,
    /// Sent but not yet arrived when the run ended.
    pub in_flight: u64,
}

impl DirStats {
    /// Transmitted packets equal received plus dropped plus in flight.
    pub fn conserved(&self) -> bool {
        self.tx_packets == self.rx_packets + self.dropped_packets + self.in_flight
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct LinkStats {
    pub a: String,
    pub b: String,
    /// `[a to b, b to a]`.
    pub dirs: [DirStats; 2],
}

impl LinkStats {
    pub(crate) fn new(a: Endpoint, b: Endpoint) -> Self {
        use alloc::string::ToString;
        LinkStats {
            a: a.to_string(),
            b: b.to_string(),
            dirs: Default::default(),
        }
    }
}

/// Bytes handed to one receiving application stream.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct StreamStats {
    pub host: u16,
    pub flow: String,
    pub uid: u64,
    pub expected: u64,
    pub delivered: u64,
    pub mismatched: u64,
}

impl StreamStats {
    pub fn intact(&self) -> bool {
        self.delivered == self.expected && self.mismatched == 0
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct RunStats {
    pub events: u64,
    pub chain_errors: u64,
    pub instruction_errors: u64,
    pub parse_errors: u64,
    pub app_errors: u64,
    pub retransmitted_packets: u64,
    pub retransmitted_bytes: u64,
    pub coalesced: u64,
    pub delivered_bytes: u64,
    /// Bytes flushed to an application that never sent on that stream.
    pub unexpected_bytes: u64,
    pub unroutable_packets: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Metrics {
    pub end_time: SimTime,
    pub messages: Vec<MessageRecord>,
    pub links: Vec<LinkStats>,
    pub streams: Vec<StreamStats>,
    pub stats: RunStats,
}

impl Metrics {
    /// Every sent byte arrived exactly once, in order, unmodified.
    pub fn all_delivered(&self) -> bool {
        self.stats.unexpected_bytes == 0 && self.streams.iter().all(StreamStats::intact)
    }

    pub fn completed(&self) -> impl Iterator<Item = &MessageRecord> + '_ {
        self.messages.iter().filter(|m| m.end.is_some())
    }

    pub fn conserved(&self) -> bool {
        self.links.iter().all(|l| l.dirs.iter().all(DirStats::conserved))
    }
}

/// Nearest-rank percentile of `values`, `p` in (0, 100].
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = libm_ceil(p / 100.0 * v.len() as f64).max(1.0) as usize;
    Some(v[rank.min(v.len()) - 1])
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn libm_ceil(x: f64) -> f64 {
    let t = x as i64 as f64;
    if t < x {
        t + 1.0
    } else {
        t
    }
}

/// Latency and slowdown percentiles for a set of messages.
#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Summary {
    pub messages: usize,
    pub completed: usize,
    pub mean_latency_ns: Option<f64>,
    pub p50_latency_ns: Option<f64>,
    pub p99_latency_ns: Option<f64>,
    pub p50_slowdown: Option<f64>,
    pub p99_slowdown: Option<f64>,
    /// Delivered message bytes over the span from first start to last end.
    pub throughput_bps: Option<f64>,
}

impl Summary {
    pub fn of<'a>(msgs: impl IntoIterator<Item = &'a MessageRecord>) -> Summary {
        let msgs: Vec<&MessageRecord> = msgs.into_iter().collect();
        let done: Vec<&&MessageRecord> = msgs.iter().filter(|m| m.end.is_some()).collect();
        let lat: Vec<f64> = done.iter().filter_map(|m| m.latency()).map(|l| l as f64).collect();
        let slow: Vec<f64> = done.iter().filter_map(|m| m.slowdown).collect();
        let throughput_bps = match (
            done.iter().map(|m| m.start).min(),
            done.iter().filter_map(|m| m.end).max(),
        ) {
            (Some(s), Some(e)) if e > s => {
                let bytes: u64 = done.iter().map(|m| m.size).sum();
                Some(bytes as f64 * 8.0 * 1e9 / (e - s) as f64)
            }
            _ => None,
        };
        Summary {
            messages: msgs.len(),
            completed: done.len(),
            mean_latency_ns: mean(&lat),
            p50_latency_ns: percentile(&lat, 50.0),
            p99_latency_ns: percentile(&lat, 99.0),
            p50_slowdown: percentile(&slow, 50.0),
            p99_slowdown: percentile(&slow, 99.0),
            throughput_bps,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank() {
        let v: Vec<f64> = (1..=100).map(|x| x as f64).collect();
        assert_eq!(percentile(&v, 50.0), Some(50.0));
        assert_eq!(percentile(&v, 99.0), Some(99.0));
        assert_eq!(percentile(&[3.0, 1.0, 2.0], 99.0), Some(3.0));
        assert_eq!(percentile(&[], 50.0), None);
        assert_eq!(mean(&[1.0, 3.0]), Some(2.0));
    }

    #[test]
    fn summary_counts_incomplete() {
        let m = |end| MessageRecord { line: 0, flow: 1, stream: None, size: 1000, start: 0, end, slowdown: None };
        let s = Summary::of(&[m(Some(1_000_000)), m(None)]);
        assert_eq!((s.messages, s.completed), (2, 1));
        assert_eq!(s.throughput_bps, Some(8e6));
    }
}
