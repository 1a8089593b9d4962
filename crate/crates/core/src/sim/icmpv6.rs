//! Minimal IPv6 + ICMPv6 echo support for end-to-end tests.

use std::net::Ipv6Addr;

use serde::{Deserialize, Serialize};

use crate::datapath::{EthernetFrame, ETHERTYPE_IPV6};
use crate::mac::MacAddress;
use crate::peers::ipv6_from_mac;

pub const IPV6_HEADER_LEN: usize = 40;
pub const NEXT_HEADER_ICMPV6: u8 = 58;
pub const ICMPV6_ECHO_REQUEST: u8 = 128;
pub const ICMPV6_ECHO_REPLY: u8 = 129;
pub const ECHO_HEADER_LEN: usize = 8;
const HOP_LIMIT: u8 = 255;

/// Folded 16-bit ones-complement sum of `data`, big-endian words, odd
/// trailing byte padded with zero. Starts from `initial`.
pub fn ones_complement_sum(initial: u32, data: &[u8]) -> u32 {
    let mut sum = initial as u64;
    let mut chunks = data.chunks_exact(2);
    for c in &mut chunks {
        sum += u16::from_be_bytes([c[0], c[1]]) as u64;
    }
    if let [last] = chunks.remainder() {
        sum += (*last as u64) << 8;
    }
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    sum as u32
}

fn pseudo_header_sum(src: &[u8; 16], dst: &[u8; 16], len: usize) -> u32 {
    let mut s = ones_complement_sum(0, src);
    s = ones_complement_sum(s, dst);
    s = ones_complement_sum(s, &(len as u32).to_be_bytes());
    ones_complement_sum(s, &[0, 0, 0, NEXT_HEADER_ICMPV6])
}

/// Sum over pseudo-header and `msg` exactly as given (checksum included).
/// A message with a correct checksum sums to 0xffff.
pub fn icmpv6_sum(src: &[u8; 16], dst: &[u8; 16], msg: &[u8]) -> u16 {
    ones_complement_sum(pseudo_header_sum(src, dst, msg.len()), msg) as u16
}

/// Checksum for `msg`, treating its checksum field (bytes 2..4) as zero.
pub fn icmpv6_checksum(src: &[u8; 16], dst: &[u8; 16], msg: &[u8]) -> u16 {
    let mut s = pseudo_header_sum(src, dst, msg.len());
    if msg.len() >= 4 {
        s = ones_complement_sum(s, &msg[..2]);
        s = ones_complement_sum(s, &msg[4..]);
    } else {
        s = ones_complement_sum(s, msg);
    }
    !(s as u16)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EchoMessage {
    /// [`ICMPV6_ECHO_REQUEST`] or [`ICMPV6_ECHO_REPLY`].
    pub icmp_type: u8,
    pub id: u16,
    pub seq: u16,
    pub payload: Vec<u8>,
}

impl EchoMessage {
    /// ICMPv6 message bytes with a correct checksum for `src` -> `dst`.
    pub fn encode(&self, src: Ipv6Addr, dst: Ipv6Addr) -> Vec<u8> {
        let mut m = Vec::with_capacity(ECHO_HEADER_LEN + self.payload.len());
        m.extend_from_slice(&[self.icmp_type, 0, 0, 0]);
        m.extend_from_slice(&self.id.to_be_bytes());
        m.extend_from_slice(&self.seq.to_be_bytes());
        m.extend_from_slice(&self.payload);
        let c = icmpv6_checksum(&src.octets(), &dst.octets(), &m);
        m[2..4].copy_from_slice(&c.to_be_bytes());
        m
    }
}

/// A parsed IPv6 packet carrying an ICMPv6 echo message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EchoPacket {
    pub src: Ipv6Addr,
    pub dst: Ipv6Addr,
    pub hop_limit: u8,
    pub message: EchoMessage,
    /// The raw ICMPv6 message, checksum as received.
    pub raw: Vec<u8>,
    pub checksum_ok: bool,
}

pub fn ipv6_packet(src: Ipv6Addr, dst: Ipv6Addr, next_header: u8, payload: &[u8]) -> Vec<u8> {
    let mut p = Vec::with_capacity(IPV6_HEADER_LEN + payload.len());
    p.extend_from_slice(&[0x60, 0, 0, 0]);
    p.extend_from_slice(&(payload.len() as u16).to_be_bytes());
    p.push(next_header);
    p.push(HOP_LIMIT);
    p.extend_from_slice(&src.octets());
    p.extend_from_slice(&dst.octets());
    p.extend_from_slice(payload);
    p
}

/// Parses an echo request or reply; anything else yields `None`.
pub fn parse_echo(frame: &EthernetFrame) -> Option<EchoPacket> {
    let p = &frame.payload;
    if frame.ethertype != ETHERTYPE_IPV6 || p.len() < IPV6_HEADER_LEN || p[0] >> 4 != 6 {
        return None;
    }
    let plen = u16::from_be_bytes([p[4], p[5]]) as usize;
    if p[6] != NEXT_HEADER_ICMPV6 || p.len() < IPV6_HEADER_LEN + plen || plen < ECHO_HEADER_LEN {
        return None;
    }
    let octets = |r: std::ops::Range<usize>| -> [u8; 16] { p[r].try_into().expect("16 bytes") };
    let src = octets(8..24);
    let dst = octets(24..40);
    let msg = &p[IPV6_HEADER_LEN..IPV6_HEADER_LEN + plen];
    if !matches!(msg[0], ICMPV6_ECHO_REQUEST | ICMPV6_ECHO_REPLY) || msg[1] != 0 {
        return None;
    }
    Some(EchoPacket {
        src: Ipv6Addr::from(src),
        dst: Ipv6Addr::from(dst),
        hop_limit: p[7],
        message: EchoMessage {
            icmp_type: msg[0],
            id: u16::from_be_bytes([msg[4], msg[5]]),
            seq: u16::from_be_bytes([msg[6], msg[7]]),
            payload: msg[ECHO_HEADER_LEN..].to_vec(),
        },
        raw: msg.to_vec(),
        checksum_ok: icmpv6_sum(&src, &dst, msg) == 0xffff,
    })
}

/// Echo request between the link-local addresses derived from two MACs.
pub fn build_echo_request(src: MacAddress, dst: MacAddress, id: u16, seq: u16, payload: &[u8]) -> EthernetFrame {
    let (sip, dip) = (ipv6_from_mac(src), ipv6_from_mac(dst));
    let msg = EchoMessage { icmp_type: ICMPV6_ECHO_REQUEST, id, seq, payload: payload.to_vec() };
    EthernetFrame {
        dst,
        src,
        ethertype: ETHERTYPE_IPV6,
        payload: ipv6_packet(sip, dip, NEXT_HEADER_ICMPV6, &msg.encode(sip, dip)),
    }
}

/// Reply `node` would send to `frame`, if it is a valid echo request
/// addressed to the node's link-local address.
pub fn echo_responder(node: MacAddress, frame: &EthernetFrame) -> Option<EthernetFrame> {
    let req = parse_echo(frame)?;
    if req.message.icmp_type != ICMPV6_ECHO_REQUEST || !req.checksum_ok || req.dst != ipv6_from_mac(node) {
        return None;
    }
    let reply = EchoMessage { icmp_type: ICMPV6_ECHO_REPLY, ..req.message };
    Some(EthernetFrame {
        dst: frame.src,
        src: node,
        ethertype: ETHERTYPE_IPV6,
        payload: ipv6_packet(req.dst, req.src, NEXT_HEADER_ICMPV6, &reply.encode(req.dst, req.src)),
    })
}
