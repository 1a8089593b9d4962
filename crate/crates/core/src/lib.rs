//! Apple Wireless Direct Link (AWDL) protocol core.
//!
//! The crate is organised bottom-up:
//!
//! - [`codec`]: bit-exact parsing and serialisation of AWDL frames.
//! - [`election`], [`sync`], [`peers`], [`datapath`]: the protocol's pure
//!   pieces, each a set of functions over plain state.
//! - [`engine`]: a sans-I/O node composing those pieces, plus a run loop.
//! - [`link`]: frame ports (loopback, scripted, pcap replay, simulated channel).
//! - [`sim`]: a deterministic multi-node simulator driven by scenario files.
//! - [`analyzer`]: offline dissection and timing analysis of captures.

pub mod analyzer;
pub mod codec;
pub mod datapath;
pub mod election;
pub mod engine;
pub mod link;
pub mod mac;
pub mod peers;
pub mod sim;
pub mod sync;
pub mod time;

pub use codec::CodecError;
pub use datapath::EthernetFrame;
pub use engine::{EngineAction, EngineEvent, LogRecord, NodeConfig, NodeState};
pub use link::LinkFrame;
pub use mac::MacAddress;
pub use time::TimeMicros;
