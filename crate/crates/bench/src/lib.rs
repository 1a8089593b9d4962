//! Shared fixtures for the benchmarks.

use awdl_core::codec::{
    encode_sync_params, encode_version, serialize_action_frame, ActionFrame, ActionSubtype, ChannelSequence,
};
use awdl_core::election::{build_election_tlv, ElectionState};
use awdl_core::engine::PROTOCOL_VERSION;
use awdl_core::mac::MacAddress;
use awdl_core::sim::{Scenario, SimNode};
use awdl_core::sync::{build_sync_params, SyncState};
use awdl_core::time::TimeMicros;

pub fn node_mac(i: u8) -> MacAddress {
    MacAddress([0x02, 0, 0, 0, 0, i])
}

/// A master's action frame carrying the usual TLV set.
pub fn action_frame() -> ActionFrame {
    let mac = node_mac(1);
    let sync = SyncState::new(TimeMicros(0), 0, 110, ChannelSequence::uniform(6));
    let election = ElectionState::new(mac, 300, 1);
    let now = TimeMicros(5_000_000);
    let tlvs = vec![
        encode_sync_params(&build_sync_params(&sync, &election, now, now)),
        build_election_tlv(&election),
        encode_version(PROTOCOL_VERSION),
    ];
    ActionFrame::new(mac, MacAddress::BROADCAST, ActionSubtype::Mif, 0, 0, tlvs)
}

pub fn action_frame_bytes() -> Vec<u8> {
    serialize_action_frame(&action_frame()).expect("fixture serialises")
}

/// `n` fully connected nodes with staggered joins and mild skew.
pub fn mesh_scenario(n: u8, duration_ms: u64) -> Scenario {
    let mut s = Scenario::new(TimeMicros(duration_ms * 1000), 1);
    for i in 1..=n {
        let mut node = SimNode::new(node_mac(i), 100 + i as u32);
        node.ppm = if i % 2 == 0 { 10.0 } else { -10.0 };
        node.join_at = TimeMicros(i as u64 * 50_000);
        s.nodes.push(node);
    }
    s
}
