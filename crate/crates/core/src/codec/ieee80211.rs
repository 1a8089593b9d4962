use serde::{Deserialize, Serialize};

use super::{CodecError, Result};
use crate::mac::{MacAddress, AWDL_BSSID};

/// Length of the three-address 802.11 header.
pub const HEADER_LEN: usize = 24;
/// Maximum 802.11 frame body.
pub const MAX_BODY_LEN: usize = 2304;

/// Frame control for management/action (type 0, subtype 13), little-endian value.
pub const FC_ACTION: u16 = 0x00d0;
/// Frame control for plain data (type 2, subtype 0).
pub const FC_DATA: u16 = 0x0008;

/// Three-address 802.11 MAC header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ieee80211Header {
    pub frame_control: u16,
    pub duration: u16,
    pub addr1: MacAddress,
    pub addr2: MacAddress,
    pub addr3: MacAddress,
    pub seq_ctrl: u16,
}

impl Ieee80211Header {
    pub fn action(dst: MacAddress, src: MacAddress) -> Self {
        Ieee80211Header {
            frame_control: FC_ACTION,
            duration: 0,
            addr1: dst,
            addr2: src,
            addr3: AWDL_BSSID,
            seq_ctrl: 0,
        }
    }

    pub fn data(dst: MacAddress, src: MacAddress) -> Self {
        Ieee80211Header { frame_control: FC_DATA, ..Self::action(dst, src) }
    }

    pub fn parse(raw: &[u8]) -> Result<Self> {
        if raw.len() < HEADER_LEN {
            return Err(CodecError::TruncatedFrame { needed: HEADER_LEN, available: raw.len() });
        }
        Ok(Ieee80211Header {
            frame_control: u16::from_le_bytes([raw[0], raw[1]]),
            duration: u16::from_le_bytes([raw[2], raw[3]]),
            addr1: MacAddress::from_slice(&raw[4..10]),
            addr2: MacAddress::from_slice(&raw[10..16]),
            addr3: MacAddress::from_slice(&raw[16..22]),
            seq_ctrl: u16::from_le_bytes([raw[22], raw[23]]),
        })
    }

    pub fn write(&self, buf: &mut Vec<u8>) {
        buf.extend_from_slice(&self.frame_control.to_le_bytes());
        buf.extend_from_slice(&self.duration.to_le_bytes());
        buf.extend_from_slice(&self.addr1.0);
        buf.extend_from_slice(&self.addr2.0);
        buf.extend_from_slice(&self.addr3.0);
        buf.extend_from_slice(&self.seq_ctrl.to_le_bytes());
    }

    pub fn protocol_version(&self) -> u8 {
        (self.frame_control & 0x3) as u8
    }

    pub fn frame_type(&self) -> u8 {
        ((self.frame_control >> 2) & 0x3) as u8
    }

    pub fn subtype(&self) -> u8 {
        ((self.frame_control >> 4) & 0xf) as u8
    }

    /// 12-bit 802.11 sequence number.
    pub fn sequence_number(&self) -> u16 {
        self.seq_ctrl >> 4
    }
}
