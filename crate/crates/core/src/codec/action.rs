use serde::{Deserialize, Serialize};

use super::tlv::parse_tlvs;
use super::{
    CodecError, Ieee80211Header, Result, Tlv, AWDL_OUI, AWDL_TYPE, AWDL_VERSION, CATEGORY_VENDOR, HEADER_LEN,
    MAX_BODY_LEN,
};
use crate::mac::MacAddress;

/// Bytes from the category byte through target_tx_time.
pub(crate) const FIXED_BODY_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionSubtype {
    /// Periodic synchronization frame.
    Psf,
    /// Master indication frame.
    Mif,
    /// Any other subtype seen on the air; preserved for dissection.
    Unknown(u8),
}

impl From<u8> for ActionSubtype {
    fn from(v: u8) -> Self {
        match v {
            0 => ActionSubtype::Psf,
            3 => ActionSubtype::Mif,
            other => ActionSubtype::Unknown(other),
        }
    }
}

impl From<ActionSubtype> for u8 {
    fn from(s: ActionSubtype) -> u8 {
        match s {
            ActionSubtype::Psf => 0,
            ActionSubtype::Mif => 3,
            ActionSubtype::Unknown(v) => v,
        }
    }
}

/// A parsed AWDL vendor action frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionFrame {
    pub hdr: Ieee80211Header,
    pub subtype: ActionSubtype,
    pub version: u8,
    /// Byte following the subtype; zero on emit, preserved on parse.
    pub reserved: u8,
    /// Sender-local transmit timestamp, microseconds.
    pub phy_tx_time: u32,
    /// Sender-local scheduled transmit timestamp, microseconds.
    pub target_tx_time: u32,
    pub tlvs: Vec<Tlv>,
}

impl ActionFrame {
    pub fn new(
        src: MacAddress,
        dst: MacAddress,
        subtype: ActionSubtype,
        phy_tx_time: u32,
        target_tx_time: u32,
        tlvs: Vec<Tlv>,
    ) -> Self {
        ActionFrame {
            hdr: Ieee80211Header::action(dst, src),
            subtype,
            version: AWDL_VERSION,
            reserved: 0,
            phy_tx_time,
            target_tx_time,
            tlvs,
        }
    }

    /// Transmitter address (addr2).
    pub fn src(&self) -> MacAddress {
        self.hdr.addr2
    }

    /// First TLV of the given type, if any.
    pub fn find_tlv(&self, tlv_type: u8) -> Option<&Tlv> {
        self.tlvs.iter().find(|t| t.tlv_type == tlv_type)
    }

    pub fn body_len(&self) -> usize {
        FIXED_BODY_LEN + self.tlvs.iter().map(Tlv::encoded_len).sum::<usize>()
    }
}

pub fn serialize_action_frame(f: &ActionFrame) -> Result<Vec<u8>> {
    let body_len = f.body_len();
    if body_len > MAX_BODY_LEN || f.tlvs.iter().any(|t| t.value.len() > u16::MAX as usize) {
        return Err(CodecError::OversizeFrame { len: body_len });
    }
    let mut buf = Vec::with_capacity(HEADER_LEN + body_len);
    f.hdr.write(&mut buf);
    buf.push(CATEGORY_VENDOR);
    buf.extend_from_slice(&AWDL_OUI);
    buf.push(AWDL_TYPE);
    buf.push(f.version);
    buf.push(f.subtype.into());
    buf.push(f.reserved);
    buf.extend_from_slice(&f.phy_tx_time.to_le_bytes());
    buf.extend_from_slice(&f.target_tx_time.to_le_bytes());
    for t in &f.tlvs {
        t.write(&mut buf);
    }
    Ok(buf)
}

pub fn parse_action_frame(raw: &[u8]) -> Result<ActionFrame> {
    let hdr = Ieee80211Header::parse(raw)?;
    let body = &raw[HEADER_LEN..];
    if body.len() < 5 || body[0] != CATEGORY_VENDOR || body[1..4] != AWDL_OUI || body[4] != AWDL_TYPE {
        return Err(CodecError::NotAwdl("action"));
    }
    if body.len() < FIXED_BODY_LEN {
        return Err(CodecError::TruncatedFrame { needed: HEADER_LEN + FIXED_BODY_LEN, available: raw.len() });
    }
    let le32 = |i: usize| u32::from_le_bytes([body[i], body[i + 1], body[i + 2], body[i + 3]]);
    Ok(ActionFrame {
        hdr,
        version: body[5],
        subtype: body[6].into(),
        reserved: body[7],
        phy_tx_time: le32(8),
        target_tx_time: le32(12),
        tlvs: parse_tlvs(&body[FIXED_BODY_LEN..], FIXED_BODY_LEN)?,
    })
}
