//! Deterministic multi-node simulation in virtual time.
//!
//! The channel owns global time. Each node sees a skewed local clock,
//! `local(g) = offset + g + floor(g * ppm / 10^6)`, with a per-node offset
//! drawn from the scenario seed. Engines only ever see local time; the trace
//! and the capture use global time.
//!
//! Events at the same global instant run in this order: channel deliveries,
//! node joins, host and application events, engine timers.

pub mod apps;
pub mod icmpv6;
mod scenario;

pub use scenario::{InvalidScenario, Scenario, SimNode, Traffic, DEFAULT_DELAY_MICROS, MAX_PPM};

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::net::Ipv6Addr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::datapath::EthernetFrame;
use crate::engine::{EngineAction, EngineEvent, NodeState};
use crate::link::{LinkFrame, NodeId, PcapWriter, SimChannel};
use crate::mac::MacAddress;
use crate::peers::ipv6_from_mac;
use crate::time::TimeMicros;

use apps::{Segment, StreamReceiver, StreamSender, STREAM_RTO_MICROS};
use icmpv6::{build_echo_request, echo_responder, parse_echo, ICMPV6_ECHO_REPLY};

/// Upper bound of the random per-node clock offset.
const MAX_CLOCK_OFFSET_MICROS: u64 = 1_000_000;
const OFFSET_STREAM: u64 = 1;
const PAYLOAD_STREAM: u64 = 2;

/// A node's view of global time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeClock {
    /// Skew in parts per billion.
    pub ppb: i64,
    pub offset: u64,
}

impl NodeClock {
    pub fn new(ppm: f64, offset: u64) -> Self {
        NodeClock { ppb: (ppm * 1000.0).round() as i64, offset }
    }

    pub fn local(&self, g: TimeMicros) -> TimeMicros {
        let g = g.0 as i128;
        let skew = (g * self.ppb as i128).div_euclid(1_000_000_000);
        TimeMicros((self.offset as i128 + g + skew) as u64)
    }

    /// Earliest global time at which the local clock reads at least `l`.
    pub fn global(&self, l: TimeMicros) -> TimeMicros {
        if l <= self.local(TimeMicros(0)) {
            return TimeMicros(0);
        }
        let rel = (l.0 - self.offset) as i128;
        let mut g = (rel * 1_000_000_000 / (1_000_000_000 + self.ppb as i128)).max(0) as u64;
        while self.local(TimeMicros(g)) < l {
            g += 1;
        }
        while g > 0 && self.local(TimeMicros(g - 1)) >= l {
            g -= 1;
        }
        TimeMicros(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    MasterChanged,
    PeerAdded,
    PeerExpired,
    AfSent,
    DataSent,
    DataReceived,
    EchoReplied,
}

impl TraceKind {
    fn from_log(event: &str) -> Option<TraceKind> {
        Some(match event {
            "master_changed" => TraceKind::MasterChanged,
            "peer_added" => TraceKind::PeerAdded,
            "peer_expired" => TraceKind::PeerExpired,
            "af_sent" => TraceKind::AfSent,
            "data_sent" => TraceKind::DataSent,
            "data_received" => TraceKind::DataReceived,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    #[serde(rename = "t_us")]
    pub t: TimeMicros,
    pub node: MacAddress,
    pub kind: TraceKind,
    pub detail: Value,
}

/// One JSON object per line, newline terminated.
pub fn trace_json_lines(trace: &[TraceEvent]) -> String {
    let mut s = String::new();
    for e in trace {
        s.push_str(&serde_json::to_string(e).expect("trace events always serialise"));
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EchoExchange {
    pub from: MacAddress,
    pub to: MacAddress,
    pub src_ip: Ipv6Addr,
    pub dst_ip: Ipv6Addr,
    pub id: u16,
    pub seq: u16,
    pub sent_at: TimeMicros,
    /// Raw ICMPv6 request message.
    pub request: Vec<u8>,
    /// Raw ICMPv6 reply message, as received by the requester.
    pub reply: Option<Vec<u8>>,
    pub replied_at: Option<TimeMicros>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamOutcome {
    pub stream: u16,
    pub from: MacAddress,
    pub to: MacAddress,
    pub sent: Vec<u8>,
    pub received: Vec<u8>,
    pub completed_at: Option<TimeMicros>,
    pub segments_sent: u64,
    pub retransmissions: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimOptions {
    pub record_pcap: bool,
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub trace: Vec<TraceEvent>,
    /// Every frame that crossed the channel, in send order.
    pub pcap: Option<Vec<u8>>,
    pub frames_sent: u64,
    pub nodes: Vec<NodeState>,
    pub clocks: Vec<NodeClock>,
    pub echoes: Vec<EchoExchange>,
    pub streams: Vec<StreamOutcome>,
    pub channel_delivered: u64,
    pub channel_dropped: u64,
}

impl SimOutcome {
    pub fn events(&self, kind: TraceKind) -> impl Iterator<Item = &TraceEvent> {
        self.trace.iter().filter(move |e| e.kind == kind)
    }

    pub fn trace_json_lines(&self) -> String {
        trace_json_lines(&self.trace)
    }
}

enum What {
    Join(usize),
    Host(usize, EthernetFrame),
    PingSend { traffic: usize, seq: u16 },
    StreamStart(usize),
    StreamTimer(usize),
    Timer { node: usize, generation: u64 },
}

struct Scheduled {
    key: (TimeMicros, u8, u64),
    what: What,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.cmp(&other.key)
    }
}

struct Sim<'a> {
    scenario: &'a Scenario,
    channel: SimChannel,
    nodes: Vec<Option<NodeState>>,
    clocks: Vec<NodeClock>,
    timer_generation: Vec<u64>,
    queue: BinaryHeap<Reverse<Scheduled>>,
    order: u64,
    trace: Vec<TraceEvent>,
    pcap: Option<PcapWriter<Vec<u8>>>,
    frames_sent: u64,
    echoes: Vec<EchoExchange>,
    senders: Vec<Option<StreamSender>>,
    receivers: Vec<Option<StreamReceiver>>,
    completed: Vec<Option<TimeMicros>>,
}

/// Runs `s` to completion. Deterministic in the scenario, seed included.
pub fn run_scenario(s: &Scenario, opts: SimOptions) -> Result<SimOutcome, InvalidScenario> {
    s.validate()?;
    let mut sim = Sim::new(s, opts);
    sim.run();
    Ok(sim.finish())
}

impl<'a> Sim<'a> {
    fn new(s: &'a Scenario, opts: SimOptions) -> Self {
        let mut channel = SimChannel::new(s.channel);
        for (a, b) in &s.blocked {
            let (a, b) = (s.node_index(*a).expect("validated"), s.node_index(*b).expect("validated"));
            channel.block(a as NodeId, b as NodeId);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(s.channel.rng_seed);
        rng.set_stream(OFFSET_STREAM);
        let clocks =
            s.nodes.iter().map(|n| NodeClock::new(n.ppm, rng.random_range(0..MAX_CLOCK_OFFSET_MICROS))).collect();

        let mut sim = Sim {
            scenario: s,
            channel,
            nodes: vec![None; s.nodes.len()],
            clocks,
            timer_generation: vec![0; s.nodes.len()],
            queue: BinaryHeap::new(),
            order: 0,
            trace: Vec::new(),
            pcap: opts.record_pcap.then(|| PcapWriter::new(Vec::new()).expect("writing to memory cannot fail")),
            frames_sent: 0,
            echoes: Vec::new(),
            senders: vec![None; s.traffic.len()],
            receivers: vec![None; s.traffic.len()],
            completed: vec![None; s.traffic.len()],
        };
        for (i, n) in s.nodes.iter().enumerate() {
            sim.schedule(n.join_at, 0, What::Join(i));
        }
        for (i, t) in s.traffic.iter().enumerate() {
            match *t {
                Traffic::Ping { count, interval_ms, .. } => {
                    for k in 0..count {
                        let at = t.start() + k as u64 * interval_ms * 1000;
                        sim.schedule(at, 1, What::PingSend { traffic: i, seq: k as u16 });
                    }
                }
                Traffic::Bytes { from, to, size, chunk, .. } => {
                    let mut rng = ChaCha8Rng::seed_from_u64(s.channel.rng_seed);
                    rng.set_stream(PAYLOAD_STREAM + i as u64);
                    let mut data = vec![0u8; size];
                    rng.fill_bytes(&mut data);
                    let stream = i as u16;
                    sim.senders[i] = Some(StreamSender::new(stream, from, to, data, chunk));
                    sim.receivers[i] = Some(StreamReceiver::new(stream, from, to));
                    sim.schedule(t.start(), 1, What::StreamStart(i));
                }
            }
        }
        sim
    }

    fn schedule(&mut self, t: TimeMicros, class: u8, what: What) {
        self.order += 1;
        self.queue.push(Reverse(Scheduled { key: (t, class, self.order), what }));
    }

    fn mac(&self, i: usize) -> MacAddress {
        self.scenario.nodes[i].config.mac
    }

    fn run(&mut self) {
        let end = self.scenario.duration;
        loop {
            let tq = self.queue.peek().map(|Reverse(s)| s.key.0);
            let tc = self.channel.next_delivery_time();
            let deliver_first = match (tc, tq) {
                (Some(c), Some(q)) => c <= q,
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (None, None) => break,
            };
            if deliver_first {
                let t = tc.expect("checked");
                if t > end {
                    break;
                }
                for (id, f) in self.channel.advance(t) {
                    let i = id as usize;
                    let local = self.clocks[i].local(t);
                    self.step(i, EngineEvent::LinkFrameIn(LinkFrame::new(local, f.bytes)), t);
                }
            } else {
                let Reverse(s) = self.queue.pop().expect("checked");
                if s.key.0 > end {
                    break;
                }
                self.handle(s.key.0, s.what);
            }
        }
    }

    fn handle(&mut self, g: TimeMicros, what: What) {
        match what {
            What::Join(i) => {
                let local = self.clocks[i].local(g);
                let state = NodeState::new(self.scenario.nodes[i].config.clone(), local).expect("validated");
                let actions = state.start();
                self.nodes[i] = Some(state);
                self.channel.register(i as NodeId);
                self.execute(i, actions, g);
            }
            What::Host(i, f) => self.step(i, EngineEvent::HostFrameIn(f), g),
            What::Timer { node, generation } => {
                if generation == self.timer_generation[node] {
                    let local = self.clocks[node].local(g);
                    self.step(node, EngineEvent::Timer(local), g);
                }
            }
            What::PingSend { traffic, seq } => {
                let Traffic::Ping { from, to, payload_len, .. } = self.scenario.traffic[traffic] else {
                    unreachable!("ping event for non-ping traffic")
                };
                let id = traffic as u16 + 1;
                let payload: Vec<u8> =
                    (0..payload_len).map(|j| (j as u16).wrapping_add(seq.wrapping_mul(7)) as u8).collect();
                let frame = build_echo_request(from, to, id, seq, &payload);
                let pkt = parse_echo(&frame).expect("well-formed request");
                self.echoes.push(EchoExchange {
                    from,
                    to,
                    src_ip: pkt.src,
                    dst_ip: pkt.dst,
                    id,
                    seq,
                    sent_at: g,
                    request: pkt.raw,
                    reply: None,
                    replied_at: None,
                });
                let i = self.scenario.node_index(from).expect("validated");
                self.step(i, EngineEvent::HostFrameIn(frame), g);
            }
            What::StreamStart(k) => {
                let frames = self.senders[k].as_mut().expect("stream").pump();
                self.send_stream(k, frames, g);
                self.schedule(g + STREAM_RTO_MICROS, 1, What::StreamTimer(k));
            }
            What::StreamTimer(k) => {
                let sender = self.senders[k].as_mut().expect("stream");
                if !sender.done() {
                    let frames = sender.on_timeout();
                    self.send_stream(k, frames, g);
                    self.schedule(g + STREAM_RTO_MICROS, 1, What::StreamTimer(k));
                }
            }
        }
    }

    fn send_stream(&mut self, k: usize, frames: Vec<EthernetFrame>, g: TimeMicros) {
        let from = self.senders[k].as_ref().expect("stream").from;
        let i = self.scenario.node_index(from).expect("validated");
        for f in frames {
            self.step(i, EngineEvent::HostFrameIn(f), g);
        }
    }

    fn step(&mut self, i: usize, event: EngineEvent, g: TimeMicros) {
        let local = self.clocks[i].local(g);
        let Some(node) = self.nodes[i].as_mut() else {
            return;
        };
        let actions = node.step(event, local);
        self.execute(i, actions, g);
    }

    fn execute(&mut self, i: usize, actions: Vec<EngineAction>, g: TimeMicros) {
        for a in actions {
            match a {
                EngineAction::LinkFrameOut(f) => {
                    let f = LinkFrame::new(g, f.bytes);
                    if let Some(w) = self.pcap.as_mut() {
                        w.write_frame(&f).expect("writing to memory cannot fail");
                    }
                    self.frames_sent += 1;
                    self.channel.send(i as NodeId, &f).expect("sender registered at join");
                }
                EngineAction::HostFrameOut(f) => self.host_delivery(i, f, g),
                EngineAction::SetTimer(local) => {
                    self.timer_generation[i] += 1;
                    let at = self.clocks[i].global(local).max(g);
                    let generation = self.timer_generation[i];
                    self.schedule(at, 2, What::Timer { node: i, generation });
                }
                EngineAction::Log(r) => {
                    if let Some(kind) = TraceKind::from_log(&r.event) {
                        self.trace.push(TraceEvent { t: g, node: self.mac(i), kind, detail: Value::Object(r.fields) });
                    }
                }
            }
        }
    }

    /// The host side of node `i`: echo responder, ping client, streams.
    fn host_delivery(&mut self, i: usize, f: EthernetFrame, g: TimeMicros) {
        let me = self.mac(i);
        if let Some(reply) = echo_responder(me, &f) {
            self.schedule(g, 1, What::Host(i, reply));
            return;
        }
        if let Some(pkt) = parse_echo(&f) {
            if pkt.message.icmp_type != ICMPV6_ECHO_REPLY || pkt.dst != ipv6_from_mac(me) {
                return;
            }
            let m = &pkt.message;
            let pending = self
                .echoes
                .iter_mut()
                .find(|e| e.from == me && e.to == f.src && e.id == m.id && e.seq == m.seq && e.reply.is_none());
            if let Some(e) = pending {
                e.reply = Some(pkt.raw.clone());
                e.replied_at = Some(g);
                let detail = json!({
                    "peer": f.src,
                    "id": m.id,
                    "seq": m.seq,
                    "rtt_us": g.0 - e.sent_at.0,
                    "checksum_ok": pkt.checksum_ok,
                });
                self.trace.push(TraceEvent { t: g, node: me, kind: TraceKind::EchoReplied, detail });
            }
            return;
        }
        match Segment::decode(&f) {
            Some(Segment::Data { stream, offset, bytes }) => {
                let k = stream as usize;
                let Some(rx) = self.receivers.get_mut(k).and_then(Option::as_mut).filter(|r| r.to == me) else {
                    return;
                };
                let ack = rx.on_data(offset, &bytes);
                let size = self.senders[k].as_ref().expect("paired").data.len();
                if rx.received.len() == size && self.completed[k].is_none() {
                    self.completed[k] = Some(g);
                }
                self.schedule(g, 1, What::Host(i, ack));
            }
            Some(Segment::Ack { stream, received }) => {
                let k = stream as usize;
                let Some(tx) = self.senders.get_mut(k).and_then(Option::as_mut).filter(|s| s.from == me) else {
                    return;
                };
                let frames = tx.on_ack(received);
                for f in frames {
                    self.schedule(g, 1, What::Host(i, f));
                }
            }
            None => {}
        }
    }

    fn finish(self) -> SimOutcome {
        let streams = self
            .senders
            .into_iter()
            .zip(self.receivers)
            .zip(self.completed)
            .filter_map(|((s, r), completed_at)| {
                let (s, r) = (s?, r?);
                Some(StreamOutcome {
                    stream: s.stream,
                    from: s.from,
                    to: s.to,
                    segments_sent: s.segments_sent,
                    retransmissions: s.retransmissions,
                    sent: s.data,
                    received: r.received,
                    completed_at,
                })
            })
            .collect();
        SimOutcome {
            trace: self.trace,
            pcap: self.pcap.map(PcapWriter::into_inner),
            frames_sent: self.frames_sent,
            nodes: self.nodes.into_iter().map(|n| n.expect("every node joins before the end")).collect(),
            clocks: self.clocks,
            echoes: self.echoes,
            streams,
            channel_delivered: self.channel.delivered,
            channel_dropped: self.channel.dropped,
        }
    }
}
