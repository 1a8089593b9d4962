use serde::{Deserialize, Serialize};

use super::{CodecError, Result};

/// Bytes of type + length preceding every TLV value.
pub const TLV_HEADER_LEN: usize = 3;

/// TLV type registry. Anything else is carried as an opaque value.
pub mod tlv_type {
    pub const SYNC_PARAMS: u8 = 0x04;
    pub const HOSTNAME: u8 = 0x10;
    pub const CHANNEL_SEQUENCE: u8 = 0x12;
    pub const VERSION: u8 = 0x15;
    pub const ELECTION_PARAMS: u8 = 0x18;

    pub fn name(t: u8) -> Option<&'static str> {
        match t {
            SYNC_PARAMS => Some("sync_params"),
            HOSTNAME => Some("hostname"),
            CHANNEL_SEQUENCE => Some("channel_sequence"),
            VERSION => Some("version"),
            ELECTION_PARAMS => Some("election_params"),
            _ => None,
        }
    }
}

/// A type-length-value element: `type (u8) | length (u16 LE) | value`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tlv {
    pub tlv_type: u8,
    pub value: Vec<u8>,
}

impl Tlv {
    pub fn new(tlv_type: u8, value: Vec<u8>) -> Self {
        Tlv { tlv_type, value }
    }

    pub fn encoded_len(&self) -> usize {
        TLV_HEADER_LEN + self.value.len()
    }

    pub(crate) fn write(&self, buf: &mut Vec<u8>) {
        buf.push(self.tlv_type);
        buf.extend_from_slice(&(self.value.len() as u16).to_le_bytes());
        buf.extend_from_slice(&self.value);
    }

    pub(crate) fn expect_type(&self, expected: u8) -> Result<()> {
        if self.tlv_type != expected {
            return Err(CodecError::WrongTlvType { expected, found: self.tlv_type });
        }
        Ok(())
    }
}

/// Splits `data` into TLVs. `base` is the offset of `data` inside the frame
/// body and only feeds error reporting.
pub(crate) fn parse_tlvs(data: &[u8], base: usize) -> Result<Vec<Tlv>> {
    let mut tlvs = Vec::new();
    let mut pos = 0;
    while pos < data.len() {
        let remaining = data.len() - pos;
        if remaining < TLV_HEADER_LEN {
            return Err(CodecError::TruncatedTlv { offset: base + pos, available: remaining });
        }
        let len = u16::from_le_bytes([data[pos + 1], data[pos + 2]]) as usize;
        if len > remaining - TLV_HEADER_LEN {
            return Err(CodecError::TruncatedTlv { offset: base + pos, available: remaining });
        }
        let start = pos + TLV_HEADER_LEN;
        tlvs.push(Tlv::new(data[pos], data[start..start + len].to_vec()));
        pos = start + len;
    }
    Ok(tlvs)
}
