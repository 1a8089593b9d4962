//! Ethernet <-> AWDL data frame translation.

use serde::{Deserialize, Serialize};

use crate::codec::{build_data_frame, parse_data_frame, CodecError, DataHeader};
use crate::mac::MacAddress;

pub const ETHERTYPE_IPV6: u16 = 0x86dd;
pub const ETHERNET_HEADER_LEN: usize = 14;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EthernetFrame {
    pub dst: MacAddress,
    pub src: MacAddress,
    pub ethertype: u16,
    pub payload: Vec<u8>,
}

impl EthernetFrame {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(ETHERNET_HEADER_LEN + self.payload.len());
        b.extend_from_slice(&self.dst.0);
        b.extend_from_slice(&self.src.0);
        b.extend_from_slice(&self.ethertype.to_be_bytes());
        b.extend_from_slice(&self.payload);
        b
    }

    pub fn from_bytes(b: &[u8]) -> Option<EthernetFrame> {
        if b.len() < ETHERNET_HEADER_LEN {
            return None;
        }
        Some(EthernetFrame {
            dst: MacAddress::from_slice(&b[0..6]),
            src: MacAddress::from_slice(&b[6..12]),
            ethertype: u16::from_be_bytes([b[12], b[13]]),
            payload: b[ETHERNET_HEADER_LEN..].to_vec(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatapathState {
    /// Sequence number for the next outbound frame.
    pub seq_counter: u16,
    pub tx_frames: u64,
    pub rx_frames: u64,
}

/// Strips the AWDL encapsulation from a received data frame.
pub fn awdl_to_ethernet(raw: &[u8]) -> Result<EthernetFrame, CodecError> {
    let f = parse_data_frame(raw)?;
    Ok(EthernetFrame { dst: f.dst, src: f.src, ethertype: f.header.ethertype, payload: f.payload })
}

/// Encapsulates a host frame, stamping and advancing the sequence counter.
/// The counter is left untouched when the frame is rejected.
pub fn ethernet_to_awdl(f: &EthernetFrame, st: &mut DatapathState) -> Result<Vec<u8>, CodecError> {
    let raw = build_data_frame(f.src, f.dst, DataHeader::new(st.seq_counter, f.ethertype), &f.payload)?;
    st.seq_counter = st.seq_counter.wrapping_add(1);
    st.tx_frames += 1;
    Ok(raw)
}
