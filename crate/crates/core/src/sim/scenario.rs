//! Scenario description and its TOML file format.
//!
//! ```toml
//! duration_ms = 10000
//!
//! [channel]
//! loss = 0.0          # per (frame, receiver) drop probability
//! delay_us = 10
//! seed = 1
//! block = [["02:00:00:00:00:01", "02:00:00:00:00:03"]]
//!
//! [[node]]
//! mac = "02:00:00:00:00:01"
//! metric = 300        # optional; drawn from the seed otherwise
//! ppm = 5.0           # clock skew
//! join_at_ms = 0
//! hostname = "alpha"
//!
//! [[traffic]]
//! kind = "ping"
//! from = "02:00:00:00:00:01"
//! to = "02:00:00:00:00:02"
//! at_ms = 2000
//! count = 10
//!
//! [[traffic]]
//! kind = "bytes"
//! from = "02:00:00:00:00:02"
//! to = "02:00:00:00:00:01"
//! at_ms = 3000
//! size = 65536
//! ```

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::codec::MAX_DATA_PAYLOAD;
use crate::engine::NodeConfig;
use crate::link::SimChannelConfig;
use crate::mac::MacAddress;
use crate::sync::DEFAULT_AF_PERIOD_TU;
use crate::time::TimeMicros;

use super::apps::STREAM_HEADER_LEN;
use super::icmpv6::{ECHO_HEADER_LEN, IPV6_HEADER_LEN};

pub const DEFAULT_DELAY_MICROS: u64 = 10;
pub const MAX_PPM: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid scenario at {location}: {message}")]
pub struct InvalidScenario {
    pub location: String,
    pub message: String,
}

impl InvalidScenario {
    fn new(location: impl Into<String>, message: impl Into<String>) -> Self {
        InvalidScenario { location: location.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimNode {
    pub config: NodeConfig,
    pub ppm: f64,
    pub join_at: TimeMicros,
}

impl SimNode {
    pub fn new(mac: MacAddress, metric: u32) -> Self {
        let mut config = NodeConfig::new(mac);
        config.metric = Some(metric);
        SimNode { config, ppm: 0.0, join_at: TimeMicros(0) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Traffic {
    Ping {
        from: MacAddress,
        to: MacAddress,
        at_ms: u64,
        #[serde(default = "default_count")]
        count: u32,
        #[serde(default = "default_interval")]
        interval_ms: u64,
        #[serde(default = "default_payload_len")]
        payload_len: usize,
    },
    Bytes {
        from: MacAddress,
        to: MacAddress,
        at_ms: u64,
        size: usize,
        #[serde(default = "default_chunk")]
        chunk: usize,
    },
}

fn default_count() -> u32 {
    1
}
fn default_interval() -> u64 {
    1000
}
fn default_payload_len() -> usize {
    56
}
fn default_chunk() -> usize {
    1024
}

impl Traffic {
    pub fn endpoints(&self) -> (MacAddress, MacAddress) {
        match *self {
            Traffic::Ping { from, to, .. } | Traffic::Bytes { from, to, .. } => (from, to),
        }
    }

    pub fn start(&self) -> TimeMicros {
        match *self {
            Traffic::Ping { at_ms, .. } | Traffic::Bytes { at_ms, .. } => TimeMicros::from_millis(at_ms),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub duration: TimeMicros,
    pub channel: SimChannelConfig,
    pub blocked: Vec<(MacAddress, MacAddress)>,
    pub nodes: Vec<SimNode>,
    pub traffic: Vec<Traffic>,
}

impl Scenario {
    /// Lossless scenario with the default propagation delay and no nodes.
    pub fn new(duration: TimeMicros, seed: u64) -> Self {
        Scenario {
            duration,
            channel: SimChannelConfig {
                loss_probability: 0.0,
                propagation_delay: DEFAULT_DELAY_MICROS,
                rng_seed: seed,
            },
            blocked: Vec::new(),
            nodes: Vec::new(),
            traffic: Vec::new(),
        }
    }

    pub fn node_index(&self, mac: MacAddress) -> Option<usize> {
        self.nodes.iter().position(|n| n.config.mac == mac)
    }

    pub fn from_toml(text: &str) -> Result<Self, InvalidScenario> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| {
            let location = match e.span() {
                Some(span) => {
                    let before = &text[..span.start.min(text.len())];
                    let line = before.matches('\n').count() + 1;
                    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
                    format!("line {line}, column {col}")
                }
                None => "file".to_string(),
            };
            InvalidScenario::new(location, e.message().trim().to_string())
        })?;
        let s = file.into_scenario();
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), InvalidScenario> {
        if self.duration.0 == 0 {
            return Err(InvalidScenario::new("duration_ms", "must be positive"));
        }
        let loss = self.channel.loss_probability;
        if !(0.0..=1.0).contains(&loss) {
            return Err(InvalidScenario::new("channel.loss", format!("{loss} is outside [0, 1]")));
        }
        if self.nodes.is_empty() {
            return Err(InvalidScenario::new("node", "at least one node is required"));
        }
        let mut seen = BTreeSet::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let at = |field: &str| format!("node[{i}].{field}");
            if !seen.insert(n.config.mac) {
                return Err(InvalidScenario::new(at("mac"), format!("duplicate address {}", n.config.mac)));
            }
            n.config.validate().map_err(|e| InvalidScenario::new(at("config"), e.to_string()))?;
            if n.join_at >= self.duration {
                return Err(InvalidScenario::new(at("join_at_ms"), "must be before the end of the scenario"));
            }
            if !n.ppm.is_finite() || n.ppm.abs() > MAX_PPM {
                return Err(InvalidScenario::new(at("ppm"), format!("{} is outside ±{MAX_PPM}", n.ppm)));
            }
        }
        for (i, (a, b)) in self.blocked.iter().enumerate() {
            for m in [a, b] {
                if self.node_index(*m).is_none() {
                    return Err(InvalidScenario::new(format!("channel.block[{i}]"), format!("unknown node {m}")));
                }
            }
        }
        for (i, t) in self.traffic.iter().enumerate() {
            let at = |field: &str| format!("traffic[{i}].{field}");
            let (from, to) = t.endpoints();
            for (field, m) in [("from", from), ("to", to)] {
                if self.node_index(m).is_none() {
                    return Err(InvalidScenario::new(at(field), format!("unknown node {m}")));
                }
            }
            if from == to {
                return Err(InvalidScenario::new(at("to"), "source and destination are the same node"));
            }
            if t.start() >= self.duration {
                return Err(InvalidScenario::new(at("at_ms"), "must be before the end of the scenario"));
            }
            match *t {
                Traffic::Ping { count, payload_len, interval_ms, .. } => {
                    if count == 0 {
                        return Err(InvalidScenario::new(at("count"), "must be positive"));
                    }
                    if count > 1 && interval_ms == 0 {
                        return Err(InvalidScenario::new(at("interval_ms"), "must be positive"));
                    }
                    let max = MAX_DATA_PAYLOAD - IPV6_HEADER_LEN - ECHO_HEADER_LEN;
                    if payload_len > max {
                        return Err(InvalidScenario::new(at("payload_len"), format!("at most {max} bytes")));
                    }
                }
                Traffic::Bytes { size, chunk, .. } => {
                    let max = MAX_DATA_PAYLOAD - STREAM_HEADER_LEN;
                    if chunk == 0 || chunk > max {
                        return Err(InvalidScenario::new(at("chunk"), format!("must be in 1..={max}")));
                    }
                    if size == 0 || size > u32::MAX as usize {
                        return Err(InvalidScenario::new(at("size"), "must be positive and fit in 32 bits"));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    duration_ms: u64,
    #[serde(default)]
    channel: ChannelSection,
    #[serde(default)]
    node: Vec<NodeSection>,
    #[serde(default)]
    traffic: Vec<Traffic>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelSection {
    #[serde(default)]
    loss: f64,
    #[serde(default = "default_delay")]
    delay_us: u64,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    block: Vec<(MacAddress, MacAddress)>,
}

fn default_delay() -> u64 {
    DEFAULT_DELAY_MICROS
}

impl Default for ChannelSection {
    fn default() -> Self {
        ChannelSection { loss: 0.0, delay_us: DEFAULT_DELAY_MICROS, seed: 0, block: Vec::new() }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeSection {
    mac: MacAddress,
    metric: Option<u32>,
    #[serde(default)]
    ppm: f64,
    #[serde(default)]
    join_at_ms: u64,
    #[serde(default)]
    hostname: String,
    #[serde(default = "default_channel")]
    channel: u8,
    #[serde(default = "default_af_period")]
    af_period_tu: u16,
    peer_timeout_ms: Option<u32>,
    seed: Option<u64>,
}

fn default_channel() -> u8 {
    6
}
fn default_af_period() -> u16 {
    DEFAULT_AF_PERIOD_TU
}

impl ScenarioFile {
    fn into_scenario(self) -> Scenario {
        let seed = self.channel.seed;
        let nodes = self
            .node
            .into_iter()
            .enumerate()
            .map(|(i, n)| {
                let mut config = NodeConfig::new(n.mac);
                config.metric = n.metric;
                config.hostname = n.hostname;
                config.channel = n.channel;
                config.af_period_tu = n.af_period_tu;
                if let Some(t) = n.peer_timeout_ms {
                    config.peer_timeout_ms = t;
                }
                config.rng_seed = n.seed.unwrap_or(seed.wrapping_add(i as u64));
                SimNode { config, ppm: n.ppm, join_at: TimeMicros::from_millis(n.join_at_ms) }
            })
            .collect();
        Scenario {
            duration: TimeMicros::from_millis(self.duration_ms),
            channel: SimChannelConfig {
                loss_probability: self.channel.loss,
                propagation_delay: self.channel.delay_us,
                rng_seed: seed,
            },
            blocked: self.channel.block,
            nodes,
            traffic: self.traffic,
        }
    }
}
