//! Classic libpcap files.
//!
//! The writer always produces microsecond-resolution little-endian files with
//! linktype 127 and a minimal 8-byte radiotap header in front of each frame.
//! The reader accepts either byte order, micro- or nanosecond magic, and
//! linktypes 127 (radiotap) and 105 (bare 802.11).

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::LinkFrame;
use crate::time::TimeMicros;

pub const PCAP_MAGIC_MICROS: u32 = 0xa1b2_c3d4;
const PCAP_MAGIC_NANOS: u32 = 0xa1b2_3c4d;
pub const LINKTYPE_IEEE802_11: u32 = 105;
pub const LINKTYPE_RADIOTAP: u32 = 127;
const SNAPLEN: u32 = 65535;

/// version 0, pad 0, length 8, no present flags.
pub const MINIMAL_RADIOTAP: [u8; 8] = [0, 0, 8, 0, 0, 0, 0, 0];

#[derive(Debug, thiserror::Error)]
pub enum PcapError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad pcap magic {0:#010x}")]
    BadMagic(u32),
    #[error("unsupported linktype {0}")]
    UnsupportedLinktype(u32),
    #[error("record {index} truncated")]
    TruncatedRecord { index: usize },
    #[error("radiotap header declares {declared} bytes but record holds {available}")]
    BadRadiotap { declared: usize, available: usize },
}

/// One capture record, link-layer header still attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PcapRecord {
    pub timestamp: TimeMicros,
    pub orig_len: u32,
    pub data: Vec<u8>,
}

impl PcapRecord {
    pub fn to_link_frame(&self, linktype: u32) -> Result<LinkFrame, PcapError> {
        Ok(LinkFrame::new(self.timestamp, strip_radiotap(linktype, &self.data)?.to_vec()))
    }
}

/// Removes the radiotap header (length at bytes 2-3, little-endian) when the
/// linktype carries one.
pub fn strip_radiotap(linktype: u32, data: &[u8]) -> Result<&[u8], PcapError> {
    match linktype {
        LINKTYPE_IEEE802_11 => Ok(data),
        LINKTYPE_RADIOTAP => {
            if data.len() < 4 {
                return Err(PcapError::BadRadiotap { declared: 4, available: data.len() });
            }
            let len = u16::from_le_bytes([data[2], data[3]]) as usize;
            if data[0] != 0 || len < MINIMAL_RADIOTAP.len() || len > data.len() {
                return Err(PcapError::BadRadiotap { declared: len, available: data.len() });
            }
            Ok(&data[len..])
        }
        other => Err(PcapError::UnsupportedLinktype(other)),
    }
}

pub struct PcapReader<R> {
    inner: R,
    big_endian: bool,
    nanos: bool,
    linktype: u32,
    index: usize,
}

/// Reads up to `buf.len()` bytes, returning how many were available.
fn read_up_to<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match r.read(&mut buf[n..]) {
            Ok(0) => break,
            Ok(k) => n += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(n)
}

impl<R: Read> PcapReader<R> {
    pub fn new(mut inner: R) -> Result<Self, PcapError> {
        let mut h = [0u8; 24];
        let n = read_up_to(&mut inner, &mut h)?;
        let magic_le = u32::from_le_bytes([h[0], h[1], h[2], h[3]]);
        let (big_endian, nanos) = match magic_le {
            PCAP_MAGIC_MICROS => (false, false),
            PCAP_MAGIC_NANOS => (false, true),
            m if m.swap_bytes() == PCAP_MAGIC_MICROS => (true, false),
            m if m.swap_bytes() == PCAP_MAGIC_NANOS => (true, true),
            m => return Err(PcapError::BadMagic(m)),
        };
        if n < h.len() {
            return Err(PcapError::TruncatedRecord { index: 0 });
        }
        let mut r = PcapReader { inner, big_endian, nanos, linktype: 0, index: 0 };
        r.linktype = r.u32_at(&h, 20);
        if r.linktype != LINKTYPE_RADIOTAP && r.linktype != LINKTYPE_IEEE802_11 {
            return Err(PcapError::UnsupportedLinktype(r.linktype));
        }
        Ok(r)
    }

    fn u32_at(&self, b: &[u8], i: usize) -> u32 {
        let a = [b[i], b[i + 1], b[i + 2], b[i + 3]];
        if self.big_endian {
            u32::from_be_bytes(a)
        } else {
            u32::from_le_bytes(a)
        }
    }

    pub fn linktype(&self) -> u32 {
        self.linktype
    }

    /// Next raw record; `Ok(None)` at a clean end of file.
    pub fn next_record(&mut self) -> Result<Option<PcapRecord>, PcapError> {
        let mut h = [0u8; 16];
        match read_up_to(&mut self.inner, &mut h)? {
            0 => return Ok(None),
            16 => {}
            _ => return Err(PcapError::TruncatedRecord { index: self.index }),
        }
        let secs = self.u32_at(&h, 0) as u64;
        let frac = self.u32_at(&h, 4) as u64;
        let incl = self.u32_at(&h, 8) as u64;
        let orig_len = self.u32_at(&h, 12);
        let mut data = Vec::new();
        (&mut self.inner).take(incl).read_to_end(&mut data)?;
        if (data.len() as u64) < incl {
            return Err(PcapError::TruncatedRecord { index: self.index });
        }
        self.index += 1;
        let micros = if self.nanos { frac / 1000 } else { frac };
        Ok(Some(PcapRecord { timestamp: TimeMicros(secs * 1_000_000 + micros), orig_len, data }))
    }

    /// Next record with its radiotap header stripped.
    pub fn next_frame(&mut self) -> Result<Option<LinkFrame>, PcapError> {
        match self.next_record()? {
            None => Ok(None),
            Some(r) => r.to_link_frame(self.linktype).map(Some),
        }
    }
}

pub struct PcapWriter<W: Write> {
    inner: W,
}

impl<W: Write> PcapWriter<W> {
    pub fn new(mut inner: W) -> Result<Self, PcapError> {
        let mut h = Vec::with_capacity(24);
        h.extend_from_slice(&PCAP_MAGIC_MICROS.to_le_bytes());
        h.extend_from_slice(&2u16.to_le_bytes());
        h.extend_from_slice(&4u16.to_le_bytes());
        h.extend_from_slice(&0i32.to_le_bytes()); // thiszone
        h.extend_from_slice(&0u32.to_le_bytes()); // sigfigs
        h.extend_from_slice(&SNAPLEN.to_le_bytes());
        h.extend_from_slice(&LINKTYPE_RADIOTAP.to_le_bytes());
        inner.write_all(&h)?;
        Ok(PcapWriter { inner })
    }

    pub fn write_frame(&mut self, f: &LinkFrame) -> Result<(), PcapError> {
        let len = (MINIMAL_RADIOTAP.len() + f.bytes.len()) as u32;
        let mut h = [0u8; 16];
        h[0..4].copy_from_slice(&((f.timestamp.0 / 1_000_000) as u32).to_le_bytes());
        h[4..8].copy_from_slice(&((f.timestamp.0 % 1_000_000) as u32).to_le_bytes());
        h[8..12].copy_from_slice(&len.to_le_bytes());
        h[12..16].copy_from_slice(&len.to_le_bytes());
        self.inner.write_all(&h)?;
        self.inner.write_all(&MINIMAL_RADIOTAP)?;
        self.inner.write_all(&f.bytes)?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), PcapError> {
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

pub fn write_pcap(path: &Path, frames: &[LinkFrame]) -> Result<(), PcapError> {
    let mut w = PcapWriter::new(BufWriter::new(File::create(path)?))?;
    for f in frames {
        w.write_frame(f)?;
    }
    w.flush()
}

pub fn read_pcap(path: &Path) -> Result<Vec<LinkFrame>, PcapError> {
    let mut r = PcapReader::new(BufReader::new(File::open(path)?))?;
    let mut out = Vec::new();
    while let Some(f) = r.next_frame()? {
        out.push(f);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn to_bytes(frames: &[LinkFrame]) -> Vec<u8> {
        let mut w = PcapWriter::new(Vec::new()).unwrap();
        for f in frames {
            w.write_frame(f).unwrap();
        }
        w.into_inner()
    }

    #[test]
    fn header_layout() {
        let b = to_bytes(&[LinkFrame::new(TimeMicros(1_500_000), vec![0xaa, 0xbb])]);
        assert_eq!(&b[0..4], &[0xd4, 0xc3, 0xb2, 0xa1]);
        assert_eq!(&b[4..8], &[2, 0, 4, 0]);
        assert_eq!(&b[16..20], &65535u32.to_le_bytes());
        assert_eq!(&b[20..24], &127u32.to_le_bytes());
        assert_eq!(&b[24..28], &1u32.to_le_bytes());
        assert_eq!(&b[28..32], &500_000u32.to_le_bytes());
        assert_eq!(&b[32..36], &10u32.to_le_bytes());
        assert_eq!(&b[40..48], &MINIMAL_RADIOTAP);
        assert_eq!(&b[48..], &[0xaa, 0xbb]);
    }

    #[test]
    fn round_trip() {
        let frames: Vec<LinkFrame> =
            (0..20u64).map(|i| LinkFrame::new(TimeMicros(i * 123_457), vec![i as u8; 1 + i as usize])).collect();
        let b = to_bytes(&frames);
        let mut r = PcapReader::new(&b[..]).unwrap();
        let mut back = Vec::new();
        while let Some(f) = r.next_frame().unwrap() {
            back.push(f);
        }
        assert_eq!(back, frames);
    }

    #[test]
    fn strips_long_radiotap() {
        let mut rec = vec![0u8; 24];
        rec[2] = 24;
        rec.extend_from_slice(&[1, 2, 3]);
        assert_eq!(strip_radiotap(LINKTYPE_RADIOTAP, &rec).unwrap(), &[1, 2, 3]);
        rec[2] = 30;
        assert!(matches!(strip_radiotap(LINKTYPE_RADIOTAP, &rec), Err(PcapError::BadRadiotap { declared: 30, .. })));
        assert_eq!(strip_radiotap(LINKTYPE_IEEE802_11, &rec).unwrap().len(), 27);
    }

    #[test]
    fn big_endian_bare_80211() {
        let mut b = Vec::new();
        b.extend_from_slice(&PCAP_MAGIC_MICROS.to_be_bytes());
        b.extend_from_slice(&2u16.to_be_bytes());
        b.extend_from_slice(&4u16.to_be_bytes());
        b.extend_from_slice(&[0; 8]);
        b.extend_from_slice(&65535u32.to_be_bytes());
        b.extend_from_slice(&105u32.to_be_bytes());
        b.extend_from_slice(&3u32.to_be_bytes());
        b.extend_from_slice(&7u32.to_be_bytes());
        b.extend_from_slice(&2u32.to_be_bytes());
        b.extend_from_slice(&2u32.to_be_bytes());
        b.extend_from_slice(&[9, 9]);
        let f = PcapReader::new(&b[..]).unwrap().next_frame().unwrap().unwrap();
        assert_eq!(f, LinkFrame::new(TimeMicros(3_000_007), vec![9, 9]));
    }

    #[test]
    fn errors() {
        assert!(matches!(PcapReader::new(&[0u8; 24][..]), Err(PcapError::BadMagic(0))));
        let mut b = to_bytes(&[]);
        b[20] = 1;
        assert!(matches!(PcapReader::new(&b[..]), Err(PcapError::UnsupportedLinktype(1))));
        let b = to_bytes(&[LinkFrame::new(TimeMicros(0), vec![1, 2, 3]), LinkFrame::new(TimeMicros(1), vec![4])]);
        let mut r = PcapReader::new(&b[..b.len() - 1]).unwrap();
        assert!(r.next_frame().unwrap().is_some());
        assert!(matches!(r.next_frame(), Err(PcapError::TruncatedRecord { index: 1 })));
        let mut r = PcapReader::new(&b[..b.len() - 10]).unwrap();
        r.next_frame().unwrap();
        assert!(matches!(r.next_frame(), Err(PcapError::TruncatedRecord { index: 1 })));
    }
}
