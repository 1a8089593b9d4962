//! Deterministic shared broadcast channel.
//!
//! Every frame sent by one node is offered to every other registered node.
//! Each (frame, receiver) pair draws one uniform `f64` from a ChaCha8 stream
//! seeded with `rng_seed`, in ascending receiver order, and is dropped when
//! the draw falls below `loss_probability`. Blocked pairs draw nothing.
//! Deliveries come out ordered by (time, receiver, send order).

use std::cell::RefCell;
use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashSet, VecDeque};
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FramePort, LinkFrame, PortError};
use crate::time::TimeMicros;

pub type NodeId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimChannelConfig {
    pub loss_probability: f64,
    pub propagation_delay: u64,
    pub rng_seed: u64,
}

impl Default for SimChannelConfig {
    fn default() -> Self {
        SimChannelConfig { loss_probability: 0.0, propagation_delay: 0, rng_seed: 0 }
    }
}

#[derive(Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Pending {
    time: TimeMicros,
    node: NodeId,
    order: u64,
    bytes: Vec<u8>,
}

#[derive(Debug)]
pub struct SimChannel {
    config: SimChannelConfig,
    rng: ChaCha8Rng,
    nodes: BTreeSet<NodeId>,
    blocked: HashSet<(NodeId, NodeId)>,
    queue: BinaryHeap<Reverse<Pending>>,
    inboxes: BTreeMap<NodeId, VecDeque<LinkFrame>>,
    order: u64,
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
}

impl SimChannel {
    pub fn new(config: SimChannelConfig) -> Self {
        SimChannel {
            config,
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
            nodes: BTreeSet::new(),
            blocked: HashSet::new(),
            queue: BinaryHeap::new(),
            inboxes: BTreeMap::new(),
            order: 0,
            sent: 0,
            delivered: 0,
            dropped: 0,
        }
    }

    pub fn config(&self) -> &SimChannelConfig {
        &self.config
    }

    pub fn register(&mut self, id: NodeId) {
        self.nodes.insert(id);
    }

    /// Stops all traffic between `a` and `b`, both directions.
    pub fn block(&mut self, a: NodeId, b: NodeId) {
        self.blocked.insert((a, b));
        self.blocked.insert((b, a));
    }

    pub fn send(&mut self, from: NodeId, frame: &LinkFrame) -> Result<(), PortError> {
        if !self.nodes.contains(&from) {
            return Err(PortError::UnknownNode(from));
        }
        self.sent += 1;
        let at = frame.timestamp + self.config.propagation_delay;
        for &to in &self.nodes {
            if to == from || self.blocked.contains(&(from, to)) {
                continue;
            }
            let draw: f64 = self.rng.random();
            if draw < self.config.loss_probability {
                self.dropped += 1;
                continue;
            }
            self.order += 1;
            self.queue.push(Reverse(Pending { time: at, node: to, order: self.order, bytes: frame.bytes.clone() }));
        }
        Ok(())
    }

    pub fn next_delivery_time(&self) -> Option<TimeMicros> {
        self.queue.peek().map(|Reverse(p)| p.time)
    }

    /// All deliveries due at or before `until`.
    pub fn advance(&mut self, until: TimeMicros) -> Vec<(NodeId, LinkFrame)> {
        let mut out = Vec::new();
        while self.queue.peek().is_some_and(|Reverse(p)| p.time <= until) {
            let Reverse(p) = self.queue.pop().expect("peeked");
            self.delivered += 1;
            out.push((p.node, LinkFrame::new(p.time, p.bytes)));
        }
        out
    }

    /// Next frame for `node` due by `until`; deliveries for other nodes are
    /// parked in their inboxes.
    pub fn recv_for(&mut self, node: NodeId, until: TimeMicros) -> Result<Option<LinkFrame>, PortError> {
        if !self.nodes.contains(&node) {
            return Err(PortError::UnknownNode(node));
        }
        for (to, f) in self.advance(until) {
            self.inboxes.entry(to).or_default().push_back(f);
        }
        Ok(self.inboxes.get_mut(&node).and_then(VecDeque::pop_front))
    }
}

/// A [`SimChannel`] seen from one node.
#[derive(Debug, Clone)]
pub struct SimPort {
    channel: Rc<RefCell<SimChannel>>,
    id: NodeId,
}

impl SimPort {
    pub fn new(channel: Rc<RefCell<SimChannel>>, id: NodeId) -> Self {
        channel.borrow_mut().register(id);
        SimPort { channel, id }
    }
}

impl FramePort for SimPort {
    fn recv(&mut self, deadline: TimeMicros) -> Result<Option<LinkFrame>, PortError> {
        self.channel.borrow_mut().recv_for(self.id, deadline)
    }

    fn send(&mut self, frame: LinkFrame) -> Result<(), PortError> {
        self.channel.borrow_mut().send(self.id, &frame)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(t: u64, b: u8) -> LinkFrame {
        LinkFrame::new(TimeMicros(t), vec![b])
    }

    fn channel(loss: f64, seed: u64) -> SimChannel {
        let mut ch = SimChannel::new(SimChannelConfig { loss_probability: loss, propagation_delay: 5, rng_seed: seed });
        ch.register(1);
        ch.register(2);
        ch
    }

    #[test]
    fn lossless_delivers_once_to_peer_only() {
        let mut ch = channel(0.0, 1);
        for i in 0..10 {
            ch.send(1, &frame(i * 10, i as u8)).unwrap();
        }
        let d = ch.advance(TimeMicros(1000));
        assert_eq!(d.len(), 10);
        assert!(d.iter().all(|(n, _)| *n == 2));
        assert_eq!(d[3].1, frame(35, 3));
    }

    #[test]
    fn full_loss_delivers_nothing() {
        let mut ch = channel(1.0, 1);
        for i in 0..100 {
            ch.send(1, &frame(i, 0)).unwrap();
        }
        assert!(ch.advance(TimeMicros(u64::MAX)).is_empty());
        assert_eq!(ch.dropped, 100);
    }

    #[test]
    fn unknown_sender() {
        let mut ch = channel(0.0, 1);
        assert!(matches!(ch.send(9, &frame(0, 0)), Err(PortError::UnknownNode(9))));
        assert!(matches!(ch.recv_for(9, TimeMicros(0)), Err(PortError::UnknownNode(9))));
    }

    #[test]
    fn delivery_order_time_node_insertion() {
        let mut ch = SimChannel::new(SimChannelConfig::default());
        for id in [3, 1, 2] {
            ch.register(id);
        }
        ch.send(3, &frame(10, 0xa)).unwrap();
        ch.send(1, &frame(5, 0xb)).unwrap();
        ch.send(2, &frame(10, 0xc)).unwrap();
        let got: Vec<(NodeId, u64, u8)> =
            ch.advance(TimeMicros(100)).into_iter().map(|(n, f)| (n, f.timestamp.0, f.bytes[0])).collect();
        assert_eq!(got, vec![(2, 5, 0xb), (3, 5, 0xb), (1, 10, 0xa), (1, 10, 0xc), (2, 10, 0xa), (3, 10, 0xc)]);
    }

    #[test]
    fn blocked_pairs() {
        let mut ch = channel(0.0, 0);
        ch.register(3);
        ch.block(1, 2);
        ch.send(1, &frame(0, 0)).unwrap();
        ch.send(2, &frame(0, 0)).unwrap();
        let to: Vec<(NodeId, u8)> = ch.advance(TimeMicros(10)).into_iter().map(|(n, f)| (n, f.bytes[0])).collect();
        assert_eq!(to, vec![(3, 0), (3, 0)]);
    }

    #[test]
    fn seeded_loss_matches_independent_replay() {
        let mut ch = channel(0.5, 42);
        for i in 0..1000 {
            ch.send(1, &frame(i, 0)).unwrap();
        }
        let delivered = ch.advance(TimeMicros(u64::MAX)).len();

        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let expected = (0..1000).filter(|_| rng.random::<f64>() >= 0.5).count();
        assert_eq!(delivered, expected);
        assert!(delivered > 400 && delivered < 600);
    }

    #[test]
    fn sim_port_routes_per_node() {
        let ch = Rc::new(RefCell::new(SimChannel::new(SimChannelConfig::default())));
        let mut a = SimPort::new(ch.clone(), 1);
        let mut b = SimPort::new(ch.clone(), 2);
        let mut c = SimPort::new(ch, 3);
        a.send(frame(0, 7)).unwrap();
        assert_eq!(b.recv(TimeMicros(0)).unwrap(), Some(frame(0, 7)));
        assert!(b.recv(TimeMicros(0)).unwrap().is_none());
        assert_eq!(c.recv(TimeMicros(0)).unwrap(), Some(frame(0, 7)));
        assert!(a.recv(TimeMicros(0)).unwrap().is_none());
    }
}
