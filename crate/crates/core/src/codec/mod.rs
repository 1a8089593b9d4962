//! Bit-exact codec for AWDL action frames, TLVs and data frames.
//!
//! Every frame rides in a plain 802.11 frame whose addr3 is [`AWDL_BSSID`].
//! Action frames are management/action frames with a vendor-specific body:
//!
//! ```text
//! category 0x7f | OUI 00:17:f2 | type 0x08 | version | subtype | reserved
//! phy_tx_time (u32 LE) | target_tx_time (u32 LE) | TLV* (type u8, len u16 LE, value)
//! ```
//!
//! Data frames are 802.11 data frames carrying an LLC/SNAP header with the
//! same OUI, followed by a [`DataHeader`] and the upper-layer payload.
//!
//! All multi-byte integers are little-endian except the data header's
//! ethertype, which is in network order.
//!
//! Parsers never panic on arbitrary input. They are deliberately lenient
//! about cross-field semantics; strictness lives in the state machines.

mod action;
mod data;
mod ieee80211;
mod params;
mod tlv;

pub use action::{parse_action_frame, serialize_action_frame, ActionFrame, ActionSubtype};
pub use data::{
    build_data_frame, parse_data_frame, DataFrame, DataHeader, DATA_HEADER_LEN, DATA_MAGIC, MAX_DATA_PAYLOAD,
    SNAP_HEADER, SNAP_LEN,
};
pub use ieee80211::{Ieee80211Header, FC_ACTION, FC_DATA, HEADER_LEN, MAX_BODY_LEN};
pub use params::{
    decode_channel_sequence, decode_election_params, decode_hostname, decode_sync_params, decode_version,
    encode_channel_sequence, encode_election_params, encode_hostname, encode_sync_params, encode_version,
    is_valid_channel, ChannelEntry, ChannelSequence, ElectionParams, SequenceEncoding, SyncParams, VersionInfo,
    CHANNEL_SEQUENCE_LEN, ELECTION_PARAMS_LEN, SYNC_PARAMS_FIXED_LEN,
};
pub use tlv::{tlv_type, Tlv, TLV_HEADER_LEN};

use serde::{Deserialize, Serialize};

use crate::mac::{MacAddress, AWDL_BSSID};

/// Vendor OUI used in action-frame bodies and in the data SNAP header.
pub const AWDL_OUI: [u8; 3] = [0x00, 0x17, 0xf2];
/// 802.11 action category for vendor-specific frames.
pub const CATEGORY_VENDOR: u8 = 0x7f;
/// OUI sub-type identifying AWDL inside a vendor action frame.
pub const AWDL_TYPE: u8 = 0x08;
/// Version byte emitted in the fixed header.
pub const AWDL_VERSION: u8 = 0x10;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("frame truncated: need {needed} bytes, have {available}")]
    TruncatedFrame { needed: usize, available: usize },
    #[error("TLV at body offset {offset} overruns the frame ({available} bytes remain)")]
    TruncatedTlv { offset: usize, available: usize },
    #[error("serialized body of {len} bytes exceeds the {MAX_BODY_LEN}-byte limit")]
    OversizeFrame { len: usize },
    #[error("expected TLV type {expected:#04x}, found {found:#04x}")]
    WrongTlvType { expected: u8, found: u8 },
    #[error("TLV value truncated: need {needed} bytes, have {available}")]
    TruncatedValue { needed: usize, available: usize },
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("unknown channel sequence encoding {0}")]
    BadEncodingId(u8),
    #[error("bad data header magic {:02x}{:02x}", .0[0], .0[1])]
    BadMagic([u8; 2]),
    #[error("not an AWDL {0} frame")]
    NotAwdl(&'static str),
}

impl CodecError {
    /// Short stable name of the error variant, used in dissection output.
    pub fn kind(&self) -> &'static str {
        match self {
            CodecError::TruncatedFrame { .. } => "TruncatedFrame",
            CodecError::TruncatedTlv { .. } => "TruncatedTlv",
            CodecError::OversizeFrame { .. } => "OversizeFrame",
            CodecError::WrongTlvType { .. } => "WrongTlvType",
            CodecError::TruncatedValue { .. } => "TruncatedValue",
            CodecError::InvariantViolation(_) => "InvariantViolation",
            CodecError::BadEncodingId(_) => "BadEncodingId",
            CodecError::BadMagic(_) => "BadMagic",
            CodecError::NotAwdl(_) => "NotAwdl",
        }
    }
}

pub type Result<T> = std::result::Result<T, CodecError>;

/// Outcome of the BSSID filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameClass {
    AwdlAction,
    AwdlData,
    Other,
}

/// Classifies a raw 802.11 frame (no radiotap).
///
/// Only frames whose addr3 equals [`AWDL_BSSID`] can be AWDL frames; anything
/// truncated or unrecognised is [`FrameClass::Other`].
pub fn classify_frame(raw: &[u8]) -> FrameClass {
    let Ok(hdr) = Ieee80211Header::parse(raw) else {
        return FrameClass::Other;
    };
    if hdr.addr3 != AWDL_BSSID || hdr.protocol_version() != 0 {
        return FrameClass::Other;
    }
    let body = &raw[HEADER_LEN..];
    match (hdr.frame_type(), hdr.subtype()) {
        (0, 13) if body.len() >= 5 && body[0] == CATEGORY_VENDOR && body[1..4] == AWDL_OUI && body[4] == AWDL_TYPE => {
            FrameClass::AwdlAction
        }
        (2, 0) if body.len() >= SNAP_LEN && body[..SNAP_LEN] == SNAP_HEADER => FrameClass::AwdlData,
        _ => FrameClass::Other,
    }
}

/// Bounds-checked little-endian cursor over a TLV value.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub(crate) fn position(&self) -> usize {
        self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.buf.len() {
            return Err(CodecError::TruncatedValue { needed: end, available: self.buf.len() });
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16_le(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub(crate) fn u32_le(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn mac(&mut self) -> Result<MacAddress> {
        Ok(MacAddress::from_slice(self.take(6)?))
    }
}
