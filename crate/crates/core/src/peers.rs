//! Neighbour table fed by received action frames.

use std::collections::BTreeMap;
use std::net::Ipv6Addr;

use serde::{Deserialize, Serialize};

use crate::codec::{
    decode_election_params, decode_hostname, decode_sync_params, tlv_type, ActionFrame, ElectionParams, SyncParams,
};
use crate::election::{PeerAdvert, ELECTION_FRESH_MICROS};
use crate::mac::MacAddress;
use crate::time::TimeMicros;

pub const DEFAULT_PEER_TIMEOUT_MICROS: u64 = 3_000_000;

/// Link-local address with a modified EUI-64 interface identifier.
pub fn ipv6_from_mac(m: MacAddress) -> Ipv6Addr {
    let o = m.0;
    Ipv6Addr::from([
        0xfe,
        0x80,
        0,
        0,
        0,
        0,
        0,
        0, //
        o[0] ^ 0x02,
        o[1],
        o[2],
        0xff,
        0xfe,
        o[3],
        o[4],
        o[5],
    ])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Peer {
    pub addr: MacAddress,
    pub ipv6_ll: Ipv6Addr,
    pub last_seen: TimeMicros,
    pub election: Option<ElectionParams>,
    pub sync: Option<SyncParams>,
    pub hostname: Option<String>,
}

impl Peer {
    fn new(addr: MacAddress, now: TimeMicros) -> Self {
        Peer { addr, ipv6_ll: ipv6_from_mac(addr), last_seen: now, election: None, sync: None, hostname: None }
    }
}

/// Result of [`PeerTable::upsert`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Upsert {
    pub is_new: bool,
    /// Registered TLVs that failed to decode and were skipped.
    pub decode_errors: usize,
}

/// One line of `peers` output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerSummary {
    pub mac: MacAddress,
    pub ipv6: Ipv6Addr,
    pub age_ms: u64,
    pub master: Option<MacAddress>,
    pub distance: Option<u32>,
    pub metric: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerTable {
    peers: BTreeMap<MacAddress, Peer>,
    pub timeout: u64,
}

impl Default for PeerTable {
    fn default() -> Self {
        PeerTable::new(DEFAULT_PEER_TIMEOUT_MICROS)
    }
}

impl PeerTable {
    pub fn new(timeout: u64) -> Self {
        PeerTable { peers: BTreeMap::new(), timeout }
    }

    pub fn len(&self) -> usize {
        self.peers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peers.is_empty()
    }

    pub fn get(&self, addr: &MacAddress) -> Option<&Peer> {
        self.peers.get(addr)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Peer> {
        self.peers.values()
    }

    /// Creates or refreshes the entry for the frame's transmitter.
    pub fn upsert(&mut self, frame: &ActionFrame, now: TimeMicros) -> Upsert {
        let addr = frame.src();
        let mut out = Upsert::default();
        let peer = self.peers.entry(addr).or_insert_with(|| {
            out.is_new = true;
            Peer::new(addr, now)
        });
        peer.last_seen = peer.last_seen.max(now);

        for t in &frame.tlvs {
            let ok = match t.tlv_type {
                tlv_type::ELECTION_PARAMS => decode_election_params(t).map(|e| peer.election = Some(e)).is_ok(),
                tlv_type::SYNC_PARAMS => decode_sync_params(t).map(|s| peer.sync = Some(s)).is_ok(),
                tlv_type::HOSTNAME => decode_hostname(t).map(|h| peer.hostname = Some(h)).is_ok(),
                _ => true,
            };
            if !ok {
                out.decode_errors += 1;
            }
        }
        out
    }

    /// Removes peers silent for longer than the timeout.
    pub fn expire(&mut self, now: TimeMicros) -> Vec<MacAddress> {
        let timeout = self.timeout;
        let removed: Vec<MacAddress> =
            self.peers.values().filter(|p| now.saturating_sub(p.last_seen) > timeout).map(|p| p.addr).collect();
        for a in &removed {
            self.peers.remove(a);
        }
        removed
    }

    /// Election inputs: every peer with election parameters, flagged fresh
    /// when heard within the election horizon.
    pub fn adverts(&self, now: TimeMicros) -> Vec<PeerAdvert> {
        self.peers
            .values()
            .filter_map(|p| {
                p.election.map(|params| PeerAdvert {
                    addr: p.addr,
                    params,
                    fresh: now.saturating_sub(p.last_seen) <= ELECTION_FRESH_MICROS,
                })
            })
            .collect()
    }

    pub fn summaries(&self, now: TimeMicros) -> Vec<PeerSummary> {
        self.peers
            .values()
            .map(|p| PeerSummary {
                mac: p.addr,
                ipv6: p.ipv6_ll,
                age_ms: now.saturating_sub(p.last_seen) / 1000,
                master: p.election.map(|e| e.master_address),
                distance: p.election.map(|e| e.distance_to_master),
                metric: p.election.map(|e| e.self_metric),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{encode_election_params, encode_hostname, ActionSubtype, Tlv};

    fn mac(last: u8) -> MacAddress {
        MacAddress([0x02, 0, 0, 0, 0, last])
    }

    fn frame(src: MacAddress, tlvs: Vec<Tlv>) -> ActionFrame {
        ActionFrame::new(src, MacAddress::BROADCAST, ActionSubtype::Mif, 0, 0, tlvs)
    }

    #[test]
    fn eui64_vectors() {
        let a: Ipv6Addr = "fe80::0225:00ff:feff:9473".parse().unwrap();
        assert_eq!(ipv6_from_mac(crate::mac::AWDL_BSSID), a);
        let b: Ipv6Addr = "fe80::0000:00ff:fe00:0001".parse().unwrap();
        assert_eq!(ipv6_from_mac(MacAddress([0x02, 0, 0, 0, 0, 1])), b);
    }

    #[test]
    fn upsert_new_and_refresh() {
        let mut t = PeerTable::default();
        let f = frame(mac(1), vec![encode_hostname("a")]);
        assert!(t.upsert(&f, TimeMicros(10)).is_new);
        assert_eq!(t.len(), 1);
        let u = t.upsert(&f, TimeMicros(20));
        assert!(!u.is_new);
        assert_eq!(t.len(), 1);
        assert_eq!(t.get(&mac(1)).unwrap().last_seen, TimeMicros(20));
        // Out-of-order time never moves last_seen backwards.
        t.upsert(&f, TimeMicros(5));
        assert_eq!(t.get(&mac(1)).unwrap().last_seen, TimeMicros(20));
        assert_eq!(t.get(&mac(1)).unwrap().ipv6_ll, ipv6_from_mac(mac(1)));
    }

    #[test]
    fn partial_update_keeps_previous_sync() {
        use crate::codec::{encode_sync_params, ChannelSequence, SyncParams};
        let sync = SyncParams {
            next_aw_channel: 6,
            tx_counter: 1,
            master_channel: 6,
            guard_time: 0,
            aw_period: 16,
            af_period: 110,
            flags: 0,
            aw_ext_length: 16,
            aw_common_length: 16,
            remaining_aw_length: 3,
            ext_counts: [0; 4],
            master_address: mac(1),
            presence_mode: 0,
            aw_seq_number: 9,
            ap_alignment_delta: 0,
            channel_sequence: ChannelSequence::uniform(6),
        };
        let e1 = ElectionParams {
            master_address: mac(1),
            sync_address: mac(1),
            master_counter: 0,
            distance_to_master: 0,
            master_metric: 5,
            self_metric: 5,
            self_counter: 0,
        };
        let mut t = PeerTable::default();
        t.upsert(&frame(mac(1), vec![encode_sync_params(&sync), encode_election_params(&e1)]), TimeMicros(0));

        let e2 = ElectionParams { master_address: mac(9), distance_to_master: 1, ..e1 };
        let mut bad_sync = encode_sync_params(&sync);
        bad_sync.value.truncate(20);
        let u = t.upsert(&frame(mac(1), vec![bad_sync, encode_election_params(&e2)]), TimeMicros(1));
        assert_eq!(u.decode_errors, 1);
        let p = t.get(&mac(1)).unwrap();
        assert_eq!(p.election, Some(e2));
        assert_eq!(p.sync, Some(sync));
    }

    #[test]
    fn expiry_boundary() {
        let mut t = PeerTable::new(3_000_000);
        assert!(t.expire(TimeMicros(0)).is_empty());
        t.upsert(&frame(mac(1), vec![]), TimeMicros(0));
        assert!(t.expire(TimeMicros(3_000_000)).is_empty());
        assert_eq!(t.expire(TimeMicros(3_000_001)), vec![mac(1)]);
        assert!(t.is_empty());
        assert!(t.expire(TimeMicros(3_000_001)).is_empty());
    }

    #[test]
    fn adverts_freshness() {
        let e = ElectionParams {
            master_address: mac(1),
            sync_address: mac(1),
            master_counter: 0,
            distance_to_master: 0,
            master_metric: 5,
            self_metric: 5,
            self_counter: 0,
        };
        let mut t = PeerTable::default();
        t.upsert(&frame(mac(1), vec![encode_election_params(&e)]), TimeMicros(0));
        t.upsert(&frame(mac(2), vec![]), TimeMicros(0));
        let a = t.adverts(TimeMicros(ELECTION_FRESH_MICROS));
        assert_eq!(a.len(), 1);
        assert!(a[0].fresh);
        assert!(!t.adverts(TimeMicros(ELECTION_FRESH_MICROS + 1))[0].fresh);
    }
}
