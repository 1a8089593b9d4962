//! Node state machine.
//!
//! [`NodeState::step`] is a pure transition: given the same state, event and
//! time it produces the same state and actions. It never reads a clock and
//! only uses randomness once, when drawing a metric at construction. All I/O
//! happens in [`run_loop`] or in the simulator.

mod run;

pub use run::{run_loop, RunOptions, RunSummary, StopReason};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::codec::{
    classify_frame, decode_sync_params, encode_hostname, encode_sync_params, encode_version, parse_action_frame,
    serialize_action_frame, tlv_type, ActionFrame, ActionSubtype, ChannelSequence, FrameClass, VersionInfo,
};
use crate::datapath::{awdl_to_ethernet, ethernet_to_awdl, DatapathState, EthernetFrame};
use crate::election::{build_election_tlv, run_election, ElectionState};
use crate::link::LinkFrame;
use crate::mac::MacAddress;
use crate::peers::{PeerTable, DEFAULT_PEER_TIMEOUT_MICROS};
use crate::sync::{adopt_timing, build_sync_params, next_af_time, SyncState, DEFAULT_AF_PERIOD_TU};
use crate::time::TimeMicros;

/// Channels AWDL nodes rendezvous on.
pub const SOCIAL_CHANNELS: [u8; 3] = [6, 44, 149];
pub const PROTOCOL_VERSION: VersionInfo = VersionInfo { version: 0x3e, device_class: 0x01 };

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("channel {0} is not a social channel (6, 44 or 149)")]
    InvalidChannel(u8),
    #[error("af_period_tu must be positive")]
    ZeroAfPeriod,
    #[error("{0} is a group address and cannot identify a node")]
    GroupAddress(MacAddress),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub mac: MacAddress,
    /// Election metric; drawn from `rng_seed` when absent.
    pub metric: Option<u32>,
    pub channel: u8,
    pub af_period_tu: u16,
    pub peer_timeout_ms: u32,
    pub rng_seed: u64,
    pub hostname: String,
}

impl NodeConfig {
    pub fn new(mac: MacAddress) -> Self {
        NodeConfig {
            mac,
            metric: None,
            channel: 6,
            af_period_tu: DEFAULT_AF_PERIOD_TU,
            peer_timeout_ms: (DEFAULT_PEER_TIMEOUT_MICROS / 1000) as u32,
            rng_seed: 0,
            hostname: String::new(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !SOCIAL_CHANNELS.contains(&self.channel) {
            return Err(ConfigError::InvalidChannel(self.channel));
        }
        if self.af_period_tu == 0 {
            return Err(ConfigError::ZeroAfPeriod);
        }
        if self.mac.is_multicast() {
            return Err(ConfigError::GroupAddress(self.mac));
        }
        Ok(())
    }

    fn resolved_metric(&self) -> u32 {
        self.metric.unwrap_or_else(|| ChaCha8Rng::seed_from_u64(self.rng_seed).random_range(1..(1 << 16)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NodeStats {
    pub link_frames_in: u64,
    pub af_sent: u64,
    pub af_received: u64,
    pub dropped_other: u64,
    pub dropped_own: u64,
    pub data_not_for_us: u64,
    pub parse_errors: u64,
    pub tlv_decode_errors: u64,
    pub timing_adoptions: u64,
    pub tx_errors: u64,
}

/// One stats record; serialises flat as `{t_us, event, ...fields}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub t_us: u64,
    pub event: String,
    #[serde(flatten)]
    pub fields: Map<String, Value>,
}

impl LogRecord {
    pub fn new(t: TimeMicros, event: &str, fields: Value) -> Self {
        let fields = match fields {
            Value::Object(m) => m,
            _ => Map::new(),
        };
        LogRecord { t_us: t.0, event: event.to_string(), fields }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("log records always serialise")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EngineEvent {
    LinkFrameIn(LinkFrame),
    HostFrameIn(EthernetFrame),
    Timer(TimeMicros),
}

#[derive(Debug, Clone, PartialEq)]
pub enum EngineAction {
    LinkFrameOut(LinkFrame),
    HostFrameOut(EthernetFrame),
    SetTimer(TimeMicros),
    Log(LogRecord),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub config: NodeConfig,
    pub election: ElectionState,
    pub sync: SyncState,
    pub peers: PeerTable,
    pub datapath: DatapathState,
    /// Scheduled time of the next action frame.
    pub next_af: TimeMicros,
    pub stats: NodeStats,
}

impl NodeState {
    /// A fresh node that considers itself master, anchored at `now`.
    pub fn new(config: NodeConfig, now: TimeMicros) -> Result<Self, ConfigError> {
        config.validate()?;
        let election = ElectionState::new(config.mac, config.resolved_metric(), 0);
        let sync = SyncState::new(now, 0, config.af_period_tu, ChannelSequence::uniform(config.channel));
        let next_af = next_af_time(&sync, now);
        Ok(NodeState {
            peers: PeerTable::new(config.peer_timeout_ms as u64 * 1000),
            config,
            election,
            sync,
            datapath: DatapathState::default(),
            next_af,
            stats: NodeStats::default(),
        })
    }

    pub fn mac(&self) -> MacAddress {
        self.config.mac
    }

    /// Actions to execute once when the node starts.
    pub fn start(&self) -> Vec<EngineAction> {
        vec![EngineAction::SetTimer(self.next_af)]
    }

    pub fn step(&mut self, event: EngineEvent, now: TimeMicros) -> Vec<EngineAction> {
        let mut out = Vec::new();
        match event {
            EngineEvent::LinkFrameIn(f) => self.on_link_frame(&f, now, &mut out),
            EngineEvent::HostFrameIn(f) => self.on_host_frame(&f, now, &mut out),
            EngineEvent::Timer(_) => self.on_timer(now, &mut out),
        }
        out
    }

    /// Checks the composed invariants of all parts.
    pub fn check_invariants(&self) -> Result<(), String> {
        self.election.check_invariants()?;
        for p in self.peers.iter() {
            if p.ipv6_ll != crate::peers::ipv6_from_mac(p.addr) {
                return Err(format!("peer {} has a foreign link-local address", p.addr));
            }
        }
        if self.sync.af_period == 0 {
            return Err("af_period is zero".into());
        }
        Ok(())
    }

    fn log(&self, out: &mut Vec<EngineAction>, now: TimeMicros, event: &str, fields: Value) {
        out.push(EngineAction::Log(LogRecord::new(now, event, fields)));
    }

    fn on_link_frame(&mut self, f: &LinkFrame, now: TimeMicros, out: &mut Vec<EngineAction>) {
        self.stats.link_frames_in += 1;
        match classify_frame(&f.bytes) {
            FrameClass::AwdlAction => match parse_action_frame(&f.bytes) {
                Ok(af) => self.on_action_frame(&af, now, out),
                Err(e) => {
                    self.stats.parse_errors += 1;
                    self.log(out, now, "parse_error", json!({"class": "action", "error": e.to_string()}));
                }
            },
            FrameClass::AwdlData => match awdl_to_ethernet(&f.bytes) {
                Ok(eth) => self.on_data_frame(eth, now, out),
                Err(e) => {
                    self.stats.parse_errors += 1;
                    self.log(out, now, "parse_error", json!({"class": "data", "error": e.to_string()}));
                }
            },
            FrameClass::Other => self.stats.dropped_other += 1,
        }
    }

    fn on_action_frame(&mut self, af: &ActionFrame, now: TimeMicros, out: &mut Vec<EngineAction>) {
        let src = af.src();
        if src == self.mac() {
            self.stats.dropped_own += 1;
            return;
        }
        self.stats.af_received += 1;
        let up = self.peers.upsert(af, now);
        self.stats.tlv_decode_errors += up.decode_errors as u64;
        if up.is_new {
            let p = self.peers.get(&src).expect("just inserted");
            self.log(
                out,
                now,
                "peer_added",
                json!({"peer": src, "ipv6": p.ipv6_ll.to_string(), "hostname": p.hostname}),
            );
        }
        self.elect(now, out);

        if self.election.is_master() || self.election.sync_master != src {
            return;
        }
        // Only this frame's own parameters move the clock.
        let Some(sp) = af.find_tlv(tlv_type::SYNC_PARAMS).and_then(|t| decode_sync_params(t).ok()) else {
            return;
        };
        match adopt_timing(&self.sync, &sp, now) {
            Ok(s) => {
                self.sync = s;
                self.stats.timing_adoptions += 1;
                // Keep the pending frame on the slot it had, moved onto the new grid.
                let half = self.sync.af_period as u64 / 2;
                let slot = next_af_time(&self.sync, TimeMicros(self.next_af.0.saturating_sub(half))).max(now);
                if slot != self.next_af {
                    self.next_af = slot;
                    out.push(EngineAction::SetTimer(slot));
                }
            }
            Err(e) => {
                self.stats.tlv_decode_errors += 1;
                self.log(out, now, "parse_error", json!({"class": "sync", "error": e.to_string()}));
            }
        }
    }

    fn on_data_frame(&mut self, eth: EthernetFrame, now: TimeMicros, out: &mut Vec<EngineAction>) {
        if eth.src == self.mac() {
            self.stats.dropped_own += 1;
            return;
        }
        if eth.dst != self.mac() && !eth.dst.is_multicast() {
            self.stats.data_not_for_us += 1;
            return;
        }
        self.datapath.rx_frames += 1;
        self.log(
            out,
            now,
            "data_received",
            json!({"src": eth.src, "dst": eth.dst, "ethertype": eth.ethertype, "len": eth.payload.len()}),
        );
        out.push(EngineAction::HostFrameOut(eth));
    }

    fn on_host_frame(&mut self, eth: &EthernetFrame, now: TimeMicros, out: &mut Vec<EngineAction>) {
        let seq = self.datapath.seq_counter;
        match ethernet_to_awdl(eth, &mut self.datapath) {
            Ok(raw) => {
                self.log(
                    out,
                    now,
                    "data_sent",
                    json!({"dst": eth.dst, "ethertype": eth.ethertype, "sequence": seq, "len": eth.payload.len()}),
                );
                out.push(EngineAction::LinkFrameOut(LinkFrame::new(now, raw)));
            }
            Err(e) => {
                self.stats.tx_errors += 1;
                self.log(out, now, "tx_error", json!({"error": e.to_string()}));
            }
        }
    }

    fn on_timer(&mut self, now: TimeMicros, out: &mut Vec<EngineAction>) {
        if now < self.next_af {
            out.push(EngineAction::SetTimer(self.next_af));
            return;
        }
        for peer in self.peers.expire(now) {
            self.log(out, now, "peer_expired", json!({"peer": peer}));
        }
        self.elect(now, out);

        let frame = self.build_action_frame(now);
        match serialize_action_frame(&frame) {
            Ok(raw) => {
                self.stats.af_sent += 1;
                self.log(
                    out,
                    now,
                    "af_sent",
                    json!({
                        "master": self.election.top_master,
                        "distance": self.election.distance,
                        "len": raw.len(),
                    }),
                );
                out.push(EngineAction::LinkFrameOut(LinkFrame::new(now, raw)));
            }
            Err(e) => {
                self.stats.tx_errors += 1;
                self.log(out, now, "tx_error", json!({"error": e.to_string()}));
            }
        }

        // Re-anchoring can put the next grid point arbitrarily close; never
        // send two frames less than half a period apart.
        let half = self.sync.af_period as u64 / 2;
        self.next_af = next_af_time(&self.sync, now + half);
        out.push(EngineAction::SetTimer(self.next_af));
    }

    fn elect(&mut self, now: TimeMicros, out: &mut Vec<EngineAction>) {
        let next = run_election(&self.election, &self.peers.adverts(now));
        if next.top_master != self.election.top_master {
            self.log(
                out,
                now,
                "master_changed",
                json!({
                    "old": self.election.top_master,
                    "new": next.top_master,
                    "distance": next.distance,
                    "sync_master": next.sync_master,
                }),
            );
        }
        self.election = next;
    }

    /// Master indication frame describing the current election and sync
    /// state, stamped for transmission at `now`.
    pub fn build_action_frame(&self, now: TimeMicros) -> ActionFrame {
        let sync = build_sync_params(&self.sync, &self.election, now, now);
        let mut tlvs = vec![encode_sync_params(&sync), build_election_tlv(&self.election)];
        if !self.config.hostname.is_empty() {
            tlvs.push(encode_hostname(&self.config.hostname));
        }
        tlvs.push(encode_version(PROTOCOL_VERSION));
        let stamp = now.0 as u32;
        let mut f = ActionFrame::new(self.mac(), MacAddress::BROADCAST, ActionSubtype::Mif, stamp, stamp, tlvs);
        f.hdr.seq_ctrl = ((self.stats.af_sent & 0x0fff) as u16) << 4;
        f
    }
}
