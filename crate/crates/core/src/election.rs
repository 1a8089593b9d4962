//! Master election.
//!
//! Every node advertises the best master it knows about. A node compares its
//! own candidacy against the masters advertised by its fresh neighbours and
//! follows the largest [`CandidateKey`], taking timing from the neighbour
//! closest to that master.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::codec::{encode_election_params, ElectionParams, Tlv};
use crate::mac::MacAddress;

/// Advertisements at this distance are never adopted.
pub const MAX_DISTANCE: u32 = 10;
/// Peers heard within this horizon take part in the election.
pub const ELECTION_FRESH_MICROS: u64 = 2_000_000;

/// Election key. Larger wins; compared on counter, then metric, then address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CandidateKey {
    pub counter: u32,
    pub metric: u32,
    pub addr: MacAddress,
}

pub fn compare_candidates(a: &CandidateKey, b: &CandidateKey) -> Ordering {
    a.cmp(b)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElectionState {
    pub self_addr: MacAddress,
    pub self_metric: u32,
    pub self_counter: u32,
    pub top_master: MacAddress,
    pub master_metric: u32,
    pub master_counter: u32,
    pub distance: u32,
    pub sync_master: MacAddress,
}

impl ElectionState {
    /// A node that is its own master.
    pub fn new(self_addr: MacAddress, self_metric: u32, self_counter: u32) -> Self {
        ElectionState {
            self_addr,
            self_metric,
            self_counter,
            top_master: self_addr,
            master_metric: self_metric,
            master_counter: self_counter,
            distance: 0,
            sync_master: self_addr,
        }
    }

    pub fn is_master(&self) -> bool {
        self.top_master == self.self_addr
    }

    pub fn self_key(&self) -> CandidateKey {
        CandidateKey { counter: self.self_counter, metric: self.self_metric, addr: self.self_addr }
    }

    pub fn master_key(&self) -> CandidateKey {
        CandidateKey { counter: self.master_counter, metric: self.master_metric, addr: self.top_master }
    }

    /// The parameters this node advertises.
    pub fn advertisement(&self) -> ElectionParams {
        ElectionParams {
            master_address: self.top_master,
            sync_address: self.sync_master,
            master_counter: self.master_counter,
            distance_to_master: self.distance,
            master_metric: self.master_metric,
            self_metric: self.self_metric,
            self_counter: self.self_counter,
        }
    }

    /// Checks the structural invariants; returns a description of the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.is_master()
            && (self.distance != 0
                || self.sync_master != self.self_addr
                || self.master_metric != self.self_metric
                || self.master_counter != self.self_counter)
        {
            return Err(format!("self-master state inconsistent: {self:?}"));
        }
        if self.distance > MAX_DISTANCE {
            return Err(format!("distance {} exceeds {MAX_DISTANCE}", self.distance));
        }
        Ok(())
    }
}

/// One neighbour's latest election advertisement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeerAdvert {
    pub addr: MacAddress,
    pub params: ElectionParams,
    /// Heard within [`ELECTION_FRESH_MICROS`].
    pub fresh: bool,
}

pub fn run_election(state: &ElectionState, peers: &[PeerAdvert]) -> ElectionState {
    let advert_key = |p: &PeerAdvert| CandidateKey {
        counter: p.params.master_counter,
        metric: p.params.master_metric,
        addr: p.params.master_address,
    };

    // Peers advertising this node as their master carry no new candidate.
    let usable = peers.iter().filter(|p| {
        p.fresh
            && p.addr != state.self_addr
            && p.params.distance_to_master < MAX_DISTANCE
            && p.params.master_address != state.self_addr
    });

    let mut best: Option<(CandidateKey, &PeerAdvert)> = None;
    for p in usable {
        let key = advert_key(p);
        let better = match &best {
            None => true,
            Some((bk, bp)) => match key.cmp(bk) {
                Ordering::Greater => true,
                Ordering::Less => false,
                Ordering::Equal => {
                    (p.params.distance_to_master, std::cmp::Reverse(p.addr))
                        < (bp.params.distance_to_master, std::cmp::Reverse(bp.addr))
                }
            },
        };
        if better {
            best = Some((key, p));
        }
    }

    match best {
        Some((key, via)) if key > state.self_key() => ElectionState {
            top_master: key.addr,
            master_metric: key.metric,
            master_counter: key.counter,
            distance: via.params.distance_to_master + 1,
            sync_master: via.addr,
            ..state.clone()
        },
        _ => {
            let counter = if state.is_master() { state.self_counter } else { state.self_counter.wrapping_add(1) };
            ElectionState::new(state.self_addr, state.self_metric, counter)
        }
    }
}

pub fn build_election_tlv(state: &ElectionState) -> Tlv {
    encode_election_params(&state.advertisement())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::decode_election_params;

    fn mac(last: u8) -> MacAddress {
        MacAddress([0x02, 0, 0, 0, 0, last])
    }

    fn advert(addr: MacAddress, master: MacAddress, counter: u32, metric: u32, distance: u32) -> PeerAdvert {
        PeerAdvert {
            addr,
            params: ElectionParams {
                master_address: master,
                sync_address: master,
                master_counter: counter,
                distance_to_master: distance,
                master_metric: metric,
                self_metric: metric,
                self_counter: counter,
            },
            fresh: true,
        }
    }

    #[test]
    fn candidate_order() {
        let a = CandidateKey { counter: 5, metric: 1, addr: MacAddress([0xaa; 6]) };
        let b = CandidateKey { counter: 4, metric: 9, addr: MacAddress([0xbb; 6]) };
        assert_eq!(compare_candidates(&a, &b), Ordering::Greater);
        let c = CandidateKey { counter: 1, metric: 1, addr: MacAddress([0x02, 0, 0, 0, 0, 0]) };
        let d = CandidateKey { counter: 1, metric: 1, addr: MacAddress([0x01, 0, 0, 0, 0, 0]) };
        assert_eq!(compare_candidates(&c, &d), Ordering::Greater);
        assert_eq!(compare_candidates(&a, &a), Ordering::Equal);
    }

    #[test]
    fn no_peers_self_master() {
        let s = ElectionState::new(mac(1), 10, 0);
        let out = run_election(&s, &[]);
        assert!(out.is_master());
        assert_eq!(out.distance, 0);
        assert_eq!(out, s);
    }

    #[test]
    fn counter_dominates_metric() {
        let s = ElectionState::new(mac(1), 99, 1);
        let p = advert(mac(2), mac(2), 2, 50, 0);
        let out = run_election(&s, &[p]);
        assert_eq!(out.top_master, mac(2));
        assert_eq!(out.master_counter, 2);
        assert_eq!(out.master_metric, 50);
        assert_eq!(out.distance, 1);
        assert_eq!(out.sync_master, mac(2));
        out.check_invariants().unwrap();
    }

    #[test]
    fn stale_and_far_adverts_ignored() {
        let s = ElectionState::new(mac(1), 10, 0);
        let mut stale = advert(mac(2), mac(2), 0, 500, 0);
        stale.fresh = false;
        let far = advert(mac(3), mac(9), 0, 900, MAX_DISTANCE);
        let out = run_election(&s, &[stale, far]);
        assert!(out.is_master());
        // One hop short of the limit is still adopted, landing exactly on it.
        let edge = advert(mac(3), mac(9), 0, 900, MAX_DISTANCE - 1);
        let out = run_election(&s, &[edge]);
        assert_eq!(out.distance, MAX_DISTANCE);
    }

    #[test]
    fn sync_master_prefers_smaller_distance_then_larger_addr() {
        let s = ElectionState::new(mac(1), 10, 0);
        let m = mac(0x50);
        let far = advert(mac(7), m, 0, 100, 2);
        let near_lo = advert(mac(3), m, 0, 100, 1);
        let near_hi = advert(mac(4), m, 0, 100, 1);
        let out = run_election(&s, &[far, near_lo, near_hi]);
        assert_eq!(out.sync_master, mac(4));
        assert_eq!(out.distance, 2);
    }

    #[test]
    fn losing_master_increments_counter() {
        let s = ElectionState::new(mac(1), 10, 0);
        let following = run_election(&s, &[advert(mac(2), mac(2), 0, 50, 0)]);
        assert!(!following.is_master());
        let alone = run_election(&following, &[]);
        assert!(alone.is_master());
        assert_eq!(alone.self_counter, 1);
        assert_eq!(alone.master_counter, 1);
        alone.check_invariants().unwrap();
        // Staying master does not bump it again.
        assert_eq!(run_election(&alone, &[]).self_counter, 1);
    }

    #[test]
    fn own_address_advertised_back_is_ignored() {
        let s = ElectionState::new(mac(1), 10, 0);
        let echo = advert(mac(2), mac(1), 5, 10, 1);
        assert!(run_election(&s, &[echo]).is_master());
    }

    #[test]
    fn tlv_echoes_state() {
        let s = ElectionState::new(mac(1), 10, 3);
        let d = decode_election_params(&build_election_tlv(&s)).unwrap();
        assert_eq!(d.distance_to_master, 0);
        assert_eq!(d.master_address, mac(1));
        assert_eq!(d.self_counter, 3);
        let f = run_election(&s, &[advert(mac(2), mac(9), 4, 1, 3)]);
        let d = decode_election_params(&build_election_tlv(&f)).unwrap();
        assert_eq!(d, f.advertisement());
        assert_eq!((d.master_address, d.sync_address, d.distance_to_master), (mac(9), mac(2), 4));
    }
}
