use serde::{Deserialize, Serialize};

use super::{CodecError, FrameClass, Ieee80211Header, Result, HEADER_LEN, MAX_BODY_LEN};
use crate::mac::MacAddress;

/// LLC AA AA 03, OUI 00:17:f2, protocol id 08 00.
pub const SNAP_HEADER: [u8; 8] = [0xaa, 0xaa, 0x03, 0x00, 0x17, 0xf2, 0x08, 0x00];
pub const SNAP_LEN: usize = SNAP_HEADER.len();
pub const DATA_MAGIC: [u8; 2] = [0x03, 0x04];
pub const DATA_HEADER_LEN: usize = 8;
/// Largest payload that fits one data frame body.
pub const MAX_DATA_PAYLOAD: usize = MAX_BODY_LEN - SNAP_LEN - DATA_HEADER_LEN;

/// `magic 03 04 | sequence u16 LE | pad u16 | ethertype u16 BE`
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DataHeader {
    pub sequence: u16,
    /// Zero on emit; any value is tolerated on parse.
    pub pad: u16,
    pub ethertype: u16,
}

impl DataHeader {
    pub fn new(sequence: u16, ethertype: u16) -> Self {
        DataHeader { sequence, pad: 0, ethertype }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataFrame {
    pub src: MacAddress,
    pub dst: MacAddress,
    pub header: DataHeader,
    pub payload: Vec<u8>,
}

pub fn build_data_frame(src: MacAddress, dst: MacAddress, hdr: DataHeader, payload: &[u8]) -> Result<Vec<u8>> {
    if payload.len() > MAX_DATA_PAYLOAD {
        return Err(CodecError::OversizeFrame { len: SNAP_LEN + DATA_HEADER_LEN + payload.len() });
    }
    let mut buf = Vec::with_capacity(HEADER_LEN + SNAP_LEN + DATA_HEADER_LEN + payload.len());
    Ieee80211Header::data(dst, src).write(&mut buf);
    buf.extend_from_slice(&SNAP_HEADER);
    buf.extend_from_slice(&DATA_MAGIC);
    buf.extend_from_slice(&hdr.sequence.to_le_bytes());
    buf.extend_from_slice(&hdr.pad.to_le_bytes());
    buf.extend_from_slice(&hdr.ethertype.to_be_bytes());
    buf.extend_from_slice(payload);
    Ok(buf)
}

pub fn parse_data_frame(raw: &[u8]) -> Result<DataFrame> {
    if super::classify_frame(raw) != FrameClass::AwdlData {
        if raw.len() < HEADER_LEN + SNAP_LEN {
            return Err(CodecError::TruncatedFrame { needed: HEADER_LEN + SNAP_LEN, available: raw.len() });
        }
        return Err(CodecError::NotAwdl("data"));
    }
    let hdr = Ieee80211Header::parse(raw)?;
    let start = HEADER_LEN + SNAP_LEN;
    if raw.len() < start + DATA_HEADER_LEN {
        return Err(CodecError::TruncatedFrame { needed: start + DATA_HEADER_LEN, available: raw.len() });
    }
    let h = &raw[start..start + DATA_HEADER_LEN];
    if h[..2] != DATA_MAGIC {
        return Err(CodecError::BadMagic([h[0], h[1]]));
    }
    Ok(DataFrame {
        src: hdr.addr2,
        dst: hdr.addr1,
        header: DataHeader {
            sequence: u16::from_le_bytes([h[2], h[3]]),
            pad: u16::from_le_bytes([h[4], h[5]]),
            ethertype: u16::from_be_bytes([h[6], h[7]]),
        },
        payload: raw[start + DATA_HEADER_LEN..].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: MacAddress = MacAddress([0x02, 0, 0, 0, 0, 0x0a]);
    const B: MacAddress = MacAddress([0x02, 0, 0, 0, 0, 0x0b]);

    #[test]
    fn round_trip() {
        let hdr = DataHeader::new(0x1234, 0x86dd);
        let raw = build_data_frame(A, B, hdr, b"hello").unwrap();
        assert_eq!(&raw[4..10], &B.0);
        assert_eq!(&raw[10..16], &A.0);
        assert_eq!(&raw[16..22], &crate::mac::AWDL_BSSID.0);
        assert_eq!(&raw[32..40], &[0x03, 0x04, 0x34, 0x12, 0x00, 0x00, 0x86, 0xdd]);
        let f = parse_data_frame(&raw).unwrap();
        assert_eq!(f, DataFrame { src: A, dst: B, header: hdr, payload: b"hello".to_vec() });
    }

    #[test]
    fn bad_magic() {
        let mut raw = build_data_frame(A, B, DataHeader::new(1, 0x86dd), b"").unwrap();
        raw[33] = 0x05;
        assert_eq!(parse_data_frame(&raw), Err(CodecError::BadMagic([0x03, 0x05])));
    }

    #[test]
    fn multicast_and_empty_payload() {
        let all_nodes = MacAddress([0x33, 0x33, 0, 0, 0, 1]);
        let raw = build_data_frame(A, all_nodes, DataHeader::new(0, 0x86dd), &[]).unwrap();
        let f = parse_data_frame(&raw).unwrap();
        assert_eq!(f.dst, all_nodes);
        assert!(f.payload.is_empty());
    }

    #[test]
    fn nonzero_pad_tolerated() {
        let raw = build_data_frame(A, B, DataHeader { sequence: 1, pad: 0xffff, ethertype: 0x0800 }, b"x").unwrap();
        assert_eq!(parse_data_frame(&raw).unwrap().header.pad, 0xffff);
    }

    #[test]
    fn oversize_and_truncation() {
        assert!(build_data_frame(A, B, DataHeader::new(0, 0x86dd), &vec![0; MAX_DATA_PAYLOAD]).is_ok());
        assert!(matches!(
            build_data_frame(A, B, DataHeader::new(0, 0x86dd), &vec![0; MAX_DATA_PAYLOAD + 1]),
            Err(CodecError::OversizeFrame { .. })
        ));
        let raw = build_data_frame(A, B, DataHeader::new(0, 0x86dd), b"").unwrap();
        assert!(matches!(parse_data_frame(&raw[..36]), Err(CodecError::TruncatedFrame { .. })));
        assert!(matches!(parse_data_frame(&raw[..10]), Err(CodecError::TruncatedFrame { .. })));
    }
}
