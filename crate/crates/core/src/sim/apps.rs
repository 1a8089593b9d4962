//! Byte-stream transfer over unicast data frames.
//!
//! The sender cuts the stream into chunks and keeps a fixed window of them in
//! flight. The receiver accepts only the next in-order chunk and answers every
//! data segment with its cumulative byte count. When a retransmission timer
//! fires without progress, the sender goes back to the first unacknowledged
//! byte.

use serde::{Deserialize, Serialize};

use crate::datapath::EthernetFrame;
use crate::mac::MacAddress;

/// IEEE local experimental ethertype.
pub const STREAM_ETHERTYPE: u16 = 0x88b5;
/// kind (u8) | stream id (u16 BE) | offset or count (u32 BE)
pub const STREAM_HEADER_LEN: usize = 7;
pub const STREAM_WINDOW_CHUNKS: usize = 16;
pub const STREAM_RTO_MICROS: u64 = 100_000;

const KIND_DATA: u8 = 1;
const KIND_ACK: u8 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Data { stream: u16, offset: u32, bytes: Vec<u8> },
    Ack { stream: u16, received: u32 },
}

impl Segment {
    pub fn encode(&self) -> Vec<u8> {
        let (kind, stream, n, bytes): (u8, u16, u32, &[u8]) = match self {
            Segment::Data { stream, offset, bytes } => (KIND_DATA, *stream, *offset, bytes),
            Segment::Ack { stream, received } => (KIND_ACK, *stream, *received, &[]),
        };
        let mut v = Vec::with_capacity(STREAM_HEADER_LEN + bytes.len());
        v.push(kind);
        v.extend_from_slice(&stream.to_be_bytes());
        v.extend_from_slice(&n.to_be_bytes());
        v.extend_from_slice(bytes);
        v
    }

    pub fn decode(frame: &EthernetFrame) -> Option<Segment> {
        let p = &frame.payload;
        if frame.ethertype != STREAM_ETHERTYPE || p.len() < STREAM_HEADER_LEN {
            return None;
        }
        let stream = u16::from_be_bytes([p[1], p[2]]);
        let n = u32::from_be_bytes([p[3], p[4], p[5], p[6]]);
        match p[0] {
            KIND_DATA => Some(Segment::Data { stream, offset: n, bytes: p[STREAM_HEADER_LEN..].to_vec() }),
            KIND_ACK if p.len() == STREAM_HEADER_LEN => Some(Segment::Ack { stream, received: n }),
            _ => None,
        }
    }

    fn frame(&self, src: MacAddress, dst: MacAddress) -> EthernetFrame {
        EthernetFrame { dst, src, ethertype: STREAM_ETHERTYPE, payload: self.encode() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSender {
    pub stream: u16,
    pub from: MacAddress,
    pub to: MacAddress,
    pub data: Vec<u8>,
    pub chunk: usize,
    pub acked: usize,
    next: usize,
    acked_at_last_timeout: usize,
    pub segments_sent: u64,
    pub retransmissions: u64,
}

impl StreamSender {
    pub fn new(stream: u16, from: MacAddress, to: MacAddress, data: Vec<u8>, chunk: usize) -> Self {
        StreamSender {
            stream,
            from,
            to,
            data,
            chunk: chunk.max(1),
            acked: 0,
            next: 0,
            acked_at_last_timeout: 0,
            segments_sent: 0,
            retransmissions: 0,
        }
    }

    pub fn done(&self) -> bool {
        self.acked >= self.data.len()
    }

    /// Segments that fit in the window right now.
    pub fn pump(&mut self) -> Vec<EthernetFrame> {
        let limit = (self.acked + STREAM_WINDOW_CHUNKS * self.chunk).min(self.data.len());
        let mut out = Vec::new();
        while self.next < limit {
            let end = (self.next + self.chunk).min(self.data.len());
            let seg = Segment::Data {
                stream: self.stream,
                offset: self.next as u32,
                bytes: self.data[self.next..end].to_vec(),
            };
            out.push(seg.frame(self.from, self.to));
            self.segments_sent += 1;
            self.next = end;
        }
        out
    }

    pub fn on_ack(&mut self, received: u32) -> Vec<EthernetFrame> {
        let received = (received as usize).min(self.data.len());
        if received > self.acked {
            self.acked = received;
            self.next = self.next.max(received);
        }
        self.pump()
    }

    pub fn on_timeout(&mut self) -> Vec<EthernetFrame> {
        if !self.done() && self.acked == self.acked_at_last_timeout && self.next > self.acked {
            self.retransmissions += 1;
            self.next = self.acked;
        }
        self.acked_at_last_timeout = self.acked;
        self.pump()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamReceiver {
    pub stream: u16,
    pub from: MacAddress,
    pub to: MacAddress,
    pub received: Vec<u8>,
    pub out_of_order: u64,
}

impl StreamReceiver {
    pub fn new(stream: u16, from: MacAddress, to: MacAddress) -> Self {
        StreamReceiver { stream, from, to, received: Vec::new(), out_of_order: 0 }
    }

    /// Accepts the segment if it is the next one and returns the ack.
    pub fn on_data(&mut self, offset: u32, bytes: &[u8]) -> EthernetFrame {
        if offset as usize == self.received.len() {
            self.received.extend_from_slice(bytes);
        } else {
            self.out_of_order += 1;
        }
        Segment::Ack { stream: self.stream, received: self.received.len() as u32 }.frame(self.to, self.from)
    }
}
