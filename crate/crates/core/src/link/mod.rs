//! Frame transport.
//!
//! The engine talks to the outside world through two ports: a [`FramePort`]
//! carrying raw 802.11 frames and a [`HostPort`] carrying Ethernet frames for
//! the local host. Ports are polled with a deadline; virtual-time ports hand
//! out items whose timestamp is at or before the deadline, real-time ports
//! whatever has arrived. A [`Clock`] supplies the time and does the waiting.

mod pcap;
mod sim;

pub use pcap::{
    read_pcap, strip_radiotap, write_pcap, PcapError, PcapReader, PcapRecord, PcapWriter, LINKTYPE_IEEE802_11,
    LINKTYPE_RADIOTAP, MINIMAL_RADIOTAP, PCAP_MAGIC_MICROS,
};
pub use sim::{NodeId, SimChannel, SimChannelConfig, SimPort};

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::datapath::EthernetFrame;
use crate::time::TimeMicros;

/// A raw 802.11 frame (no radiotap) as it crosses the link layer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LinkFrame {
    pub timestamp: TimeMicros,
    pub bytes: Vec<u8>,
}

impl LinkFrame {
    pub fn new(timestamp: TimeMicros, bytes: Vec<u8>) -> Self {
        LinkFrame { timestamp, bytes }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PortError {
    #[error("port closed")]
    PortClosed,
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error(transparent)]
    Pcap(#[from] PcapError),
}

/// Bidirectional 802.11 frame port. Sends are best effort.
pub trait FramePort {
    /// Next frame received no later than `deadline`, `Ok(None)` if there is
    /// none yet, `Err(PortClosed)` once the port is exhausted.
    fn recv(&mut self, deadline: TimeMicros) -> Result<Option<LinkFrame>, PortError>;
    fn send(&mut self, frame: LinkFrame) -> Result<(), PortError>;

    /// Timestamp a virtual-time run should start from, if the port knows it.
    fn start_hint(&mut self) -> Option<TimeMicros> {
        None
    }
}

/// Ethernet frames exchanged with the local host.
pub trait HostPort {
    fn recv(&mut self, deadline: TimeMicros) -> Result<Option<(TimeMicros, EthernetFrame)>, PortError>;
    fn send(&mut self, at: TimeMicros, frame: EthernetFrame) -> Result<(), PortError>;
}

pub trait Clock {
    fn now(&self) -> TimeMicros;
    fn wait_until(&mut self, t: TimeMicros);
}

/// Clock that jumps straight to whatever time it is asked to wait for.
#[derive(Debug, Clone, Default)]
pub struct VirtualClock {
    now: TimeMicros,
}

impl VirtualClock {
    pub fn new(start: TimeMicros) -> Self {
        VirtualClock { now: start }
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> TimeMicros {
        self.now
    }

    fn wait_until(&mut self, t: TimeMicros) {
        self.now = self.now.max(t);
    }
}

/// Wall clock counting microseconds since construction.
#[derive(Debug, Clone)]
pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        SystemClock { origin: Instant::now() }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> TimeMicros {
        TimeMicros(self.origin.elapsed().as_micros() as u64)
    }

    fn wait_until(&mut self, t: TimeMicros) {
        let now = self.now();
        if t > now {
            std::thread::sleep(Duration::from_micros(t.0 - now.0));
        }
    }
}

/// In-memory port that hands back whatever was sent to it, FIFO.
#[derive(Debug, Clone, Default)]
pub struct LoopbackPort {
    queue: VecDeque<LinkFrame>,
}

impl LoopbackPort {
    pub fn new() -> Self {
        Self::default()
    }
}

impl FramePort for LoopbackPort {
    fn recv(&mut self, deadline: TimeMicros) -> Result<Option<LinkFrame>, PortError> {
        match self.queue.front() {
            Some(f) if f.timestamp <= deadline => Ok(self.queue.pop_front()),
            _ => Ok(None),
        }
    }

    fn send(&mut self, frame: LinkFrame) -> Result<(), PortError> {
        self.queue.push_back(frame);
        Ok(())
    }
}

/// Replays a fixed list of frames in timestamp order and records sends.
/// Closes once the script is exhausted.
#[derive(Debug, Clone, Default)]
pub struct ScriptedPort {
    script: VecDeque<LinkFrame>,
    pub sent: Vec<LinkFrame>,
}

impl ScriptedPort {
    pub fn new(mut frames: Vec<LinkFrame>) -> Self {
        frames.sort_by_key(|f| f.timestamp);
        ScriptedPort { script: frames.into(), sent: Vec::new() }
    }
}

impl FramePort for ScriptedPort {
    fn recv(&mut self, deadline: TimeMicros) -> Result<Option<LinkFrame>, PortError> {
        match self.script.front() {
            None => Err(PortError::PortClosed),
            Some(f) if f.timestamp <= deadline => Ok(self.script.pop_front()),
            Some(_) => Ok(None),
        }
    }

    fn send(&mut self, frame: LinkFrame) -> Result<(), PortError> {
        self.sent.push(frame);
        Ok(())
    }

    fn start_hint(&mut self) -> Option<TimeMicros> {
        self.script.front().map(|f| f.timestamp)
    }
}

/// Replays a capture file in virtual time, optionally recording our own
/// transmissions to a second capture.
pub struct PcapReplayPort {
    reader: PcapReader<BufReader<File>>,
    pending: Option<LinkFrame>,
    writer: Option<PcapWriter<BufWriter<File>>>,
    exhausted: bool,
}

impl PcapReplayPort {
    pub fn open(input: &Path, output: Option<&Path>) -> Result<Self, PcapError> {
        let reader = PcapReader::new(BufReader::new(File::open(input)?))?;
        let writer = match output {
            Some(p) => Some(PcapWriter::new(BufWriter::new(File::create(p)?))?),
            None => None,
        };
        Ok(PcapReplayPort { reader, pending: None, writer, exhausted: false })
    }

    fn fill(&mut self) -> Result<(), PcapError> {
        while self.pending.is_none() && !self.exhausted {
            match self.reader.next_record()? {
                None => self.exhausted = true,
                Some(rec) => {
                    // Records whose radiotap header is unusable are skipped.
                    if let Ok(f) = rec.to_link_frame(self.reader.linktype()) {
                        self.pending = Some(f);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), PcapError> {
        if let Some(w) = self.writer.as_mut() {
            w.flush()?;
        }
        Ok(())
    }
}

impl FramePort for PcapReplayPort {
    fn recv(&mut self, deadline: TimeMicros) -> Result<Option<LinkFrame>, PortError> {
        self.fill()?;
        match &self.pending {
            None => Err(PortError::PortClosed),
            Some(f) if f.timestamp <= deadline => Ok(self.pending.take()),
            Some(_) => Ok(None),
        }
    }

    fn send(&mut self, frame: LinkFrame) -> Result<(), PortError> {
        if let Some(w) = self.writer.as_mut() {
            w.write_frame(&frame)?;
        }
        Ok(())
    }

    fn start_hint(&mut self) -> Option<TimeMicros> {
        self.fill().ok()?;
        self.pending.as_ref().map(|f| f.timestamp)
    }
}

/// Port with no radio behind it: never receives, discards sends.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullPort;

impl FramePort for NullPort {
    fn recv(&mut self, _deadline: TimeMicros) -> Result<Option<LinkFrame>, PortError> {
        Ok(None)
    }

    fn send(&mut self, _frame: LinkFrame) -> Result<(), PortError> {
        Ok(())
    }
}

/// Host port backed by memory: scripted inbound frames, recorded outbound.
#[derive(Debug, Clone, Default)]
pub struct MemoryHostPort {
    inbound: VecDeque<(TimeMicros, EthernetFrame)>,
    pub delivered: Vec<(TimeMicros, EthernetFrame)>,
}

impl MemoryHostPort {
    pub fn new(mut inbound: Vec<(TimeMicros, EthernetFrame)>) -> Self {
        inbound.sort_by_key(|(t, _)| *t);
        MemoryHostPort { inbound: inbound.into(), delivered: Vec::new() }
    }
}

impl HostPort for MemoryHostPort {
    fn recv(&mut self, deadline: TimeMicros) -> Result<Option<(TimeMicros, EthernetFrame)>, PortError> {
        match self.inbound.front() {
            None => Err(PortError::PortClosed),
            Some((t, _)) if *t <= deadline => Ok(self.inbound.pop_front()),
            Some(_) => Ok(None),
        }
    }

    fn send(&mut self, at: TimeMicros, frame: EthernetFrame) -> Result<(), PortError> {
        self.delivered.push((at, frame));
        Ok(())
    }
}
