//! Value layouts of the registered TLVs.
//!
//! Sync parameters (type 0x04), offsets in bytes:
//!
//! ```text
//!  0 next_aw_channel u8      13 aw_common_length u16     27 presence_mode u8
//!  1 tx_counter u16          15 remaining_aw_length u16  28 reserved u8
//!  3 master_channel u8       17 min_ext u8               29 aw_seq_number u16
//!  4 guard_time u8           18 max_multicast_ext u8     31 ap_alignment_delta u16
//!  5 aw_period u16           19 max_unicast_ext u8       33 channel sequence ...
//!  7 af_period u16           20 max_af_ext u8
//!  9 flags u16               21 master_address [6]
//! 11 aw_ext_length u16
//! ```
//!
//! Election parameters (type 0x18): master_address, sync_address, then
//! master_counter, distance_to_master, master_metric, self_metric and
//! self_counter as u32.
//!
//! Channel sequence: count (entries - 1), encoding (0 = one channel byte per
//! entry, 1 = flags/channel pairs), duplicate, step_count - 1, fill_channel
//! u16, then 16 entries.

use serde::{Deserialize, Serialize};

use super::tlv::tlv_type;
use super::{CodecError, Reader, Result, Tlv};
use crate::mac::MacAddress;

pub const CHANNEL_SEQUENCE_LEN: usize = 16;
pub const SYNC_PARAMS_FIXED_LEN: usize = 33;
pub const ELECTION_PARAMS_LEN: usize = 32;
const CHANNEL_SEQUENCE_HEADER_LEN: usize = 6;

/// `true` for 0 (unused slot) and valid 2.4/5 GHz channel numbers.
pub fn is_valid_channel(ch: u8) -> bool {
    matches!(ch, 0 | 1..=14 | 36..=165)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SequenceEncoding {
    /// One channel byte per entry; flags decode as zero.
    Channels,
    /// (flags, channel) byte pairs.
    Flagged,
}

impl SequenceEncoding {
    fn id(self) -> u8 {
        match self {
            SequenceEncoding::Channels => 0,
            SequenceEncoding::Flagged => 1,
        }
    }

    fn entry_len(self) -> usize {
        match self {
            SequenceEncoding::Channels => 1,
            SequenceEncoding::Flagged => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ChannelEntry {
    pub flags: u8,
    pub channel: u8,
}

/// A 16-slot advisory channel schedule.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChannelSequence {
    pub encoding: SequenceEncoding,
    /// Availability windows per slot.
    pub step_count: u8,
    pub fill_channel: u16,
    pub entries: [ChannelEntry; CHANNEL_SEQUENCE_LEN],
}

impl ChannelSequence {
    /// Every slot on `channel`.
    pub fn uniform(channel: u8) -> Self {
        ChannelSequence {
            encoding: SequenceEncoding::Channels,
            step_count: 4,
            fill_channel: 0xffff,
            entries: [ChannelEntry { flags: 0, channel }; CHANNEL_SEQUENCE_LEN],
        }
    }

    /// Builds a sequence from up to 16 entries, padding with the last one.
    pub fn from_entries(encoding: SequenceEncoding, entries: &[ChannelEntry]) -> Result<Self> {
        let Some(last) = entries.last() else {
            return Err(CodecError::InvariantViolation("channel sequence needs at least one entry".into()));
        };
        if entries.len() > CHANNEL_SEQUENCE_LEN {
            return Err(CodecError::InvariantViolation(format!(
                "channel sequence has {} entries, at most {CHANNEL_SEQUENCE_LEN} allowed",
                entries.len()
            )));
        }
        let mut padded = [*last; CHANNEL_SEQUENCE_LEN];
        padded[..entries.len()].copy_from_slice(entries);
        let seq = ChannelSequence { encoding, step_count: 4, fill_channel: 0xffff, entries: padded };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(bad) = self.entries.iter().find(|e| !is_valid_channel(e.channel)) {
            return Err(CodecError::InvariantViolation(format!("invalid channel {}", bad.channel)));
        }
        if self.step_count == 0 {
            return Err(CodecError::InvariantViolation("step_count must be positive".into()));
        }
        Ok(())
    }

    pub fn encoded_len(&self) -> usize {
        CHANNEL_SEQUENCE_HEADER_LEN + CHANNEL_SEQUENCE_LEN * self.encoding.entry_len()
    }
}

pub fn encode_channel_sequence(c: &ChannelSequence) -> Vec<u8> {
    let mut buf = Vec::with_capacity(c.encoded_len());
    write_channel_sequence(c, &mut buf);
    buf
}

fn write_channel_sequence(c: &ChannelSequence, buf: &mut Vec<u8>) {
    buf.push((CHANNEL_SEQUENCE_LEN - 1) as u8);
    buf.push(c.encoding.id());
    buf.push(0);
    buf.push(c.step_count.wrapping_sub(1));
    buf.extend_from_slice(&c.fill_channel.to_le_bytes());
    for e in &c.entries {
        if c.encoding == SequenceEncoding::Flagged {
            buf.push(e.flags);
        }
        buf.push(e.channel);
    }
}

pub fn decode_channel_sequence(raw: &[u8]) -> Result<ChannelSequence> {
    read_channel_sequence(&mut Reader::new(raw))
}

fn read_channel_sequence(r: &mut Reader<'_>) -> Result<ChannelSequence> {
    let count = r.u8()?;
    let encoding = match r.u8()? {
        0 => SequenceEncoding::Channels,
        1 => SequenceEncoding::Flagged,
        other => return Err(CodecError::BadEncodingId(other)),
    };
    let _duplicate = r.u8()?;
    let step_count = r.u8()?.wrapping_add(1);
    let fill_channel = r.u16_le()?;
    if count as usize != CHANNEL_SEQUENCE_LEN - 1 {
        return Err(CodecError::InvariantViolation(format!(
            "channel sequence count {} (expected {})",
            count,
            CHANNEL_SEQUENCE_LEN - 1
        )));
    }
    let mut entries = [ChannelEntry::default(); CHANNEL_SEQUENCE_LEN];
    for e in entries.iter_mut() {
        if encoding == SequenceEncoding::Flagged {
            e.flags = r.u8()?;
        }
        e.channel = r.u8()?;
    }
    let seq = ChannelSequence { encoding, step_count, fill_channel, entries };
    seq.validate()?;
    Ok(seq)
}

/// Synchronization parameters; lengths and counters are in TU.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SyncParams {
    pub next_aw_channel: u8,
    pub tx_counter: u16,
    pub master_channel: u8,
    pub guard_time: u8,
    pub aw_period: u16,
    pub af_period: u16,
    pub flags: u16,
    pub aw_ext_length: u16,
    pub aw_common_length: u16,
    pub remaining_aw_length: u16,
    /// min_ext, max_multicast_ext, max_unicast_ext, max_af_ext.
    pub ext_counts: [u8; 4],
    pub master_address: MacAddress,
    pub presence_mode: u8,
    pub aw_seq_number: u16,
    pub ap_alignment_delta: u16,
    pub channel_sequence: ChannelSequence,
}

pub fn encode_sync_params(s: &SyncParams) -> Tlv {
    let mut v = Vec::with_capacity(SYNC_PARAMS_FIXED_LEN + s.channel_sequence.encoded_len());
    v.push(s.next_aw_channel);
    v.extend_from_slice(&s.tx_counter.to_le_bytes());
    v.push(s.master_channel);
    v.push(s.guard_time);
    v.extend_from_slice(&s.aw_period.to_le_bytes());
    v.extend_from_slice(&s.af_period.to_le_bytes());
    v.extend_from_slice(&s.flags.to_le_bytes());
    v.extend_from_slice(&s.aw_ext_length.to_le_bytes());
    v.extend_from_slice(&s.aw_common_length.to_le_bytes());
    v.extend_from_slice(&s.remaining_aw_length.to_le_bytes());
    v.extend_from_slice(&s.ext_counts);
    v.extend_from_slice(&s.master_address.0);
    v.push(s.presence_mode);
    v.push(0);
    v.extend_from_slice(&s.aw_seq_number.to_le_bytes());
    v.extend_from_slice(&s.ap_alignment_delta.to_le_bytes());
    write_channel_sequence(&s.channel_sequence, &mut v);
    Tlv::new(tlv_type::SYNC_PARAMS, v)
}

pub fn decode_sync_params(t: &Tlv) -> Result<SyncParams> {
    t.expect_type(tlv_type::SYNC_PARAMS)?;
    let mut r = Reader::new(&t.value);
    let next_aw_channel = r.u8()?;
    let tx_counter = r.u16_le()?;
    let master_channel = r.u8()?;
    let guard_time = r.u8()?;
    let aw_period = r.u16_le()?;
    let af_period = r.u16_le()?;
    let flags = r.u16_le()?;
    let aw_ext_length = r.u16_le()?;
    let aw_common_length = r.u16_le()?;
    let remaining_aw_length = r.u16_le()?;
    let mut ext_counts = [0u8; 4];
    ext_counts.copy_from_slice(r.take(4)?);
    let master_address = r.mac()?;
    let presence_mode = r.u8()?;
    let _reserved = r.u8()?;
    let aw_seq_number = r.u16_le()?;
    let ap_alignment_delta = r.u16_le()?;
    debug_assert_eq!(r.position(), SYNC_PARAMS_FIXED_LEN);
    let channel_sequence = read_channel_sequence(&mut r)?;
    if remaining_aw_length > aw_common_length {
        return Err(CodecError::InvariantViolation(format!(
            "remaining_aw_length {remaining_aw_length} exceeds aw_common_length {aw_common_length}"
        )));
    }
    Ok(SyncParams {
        next_aw_channel,
        tx_counter,
        master_channel,
        guard_time,
        aw_period,
        af_period,
        flags,
        aw_ext_length,
        aw_common_length,
        remaining_aw_length,
        ext_counts,
        master_address,
        presence_mode,
        aw_seq_number,
        ap_alignment_delta,
        channel_sequence,
    })
}

/// Election parameters as advertised by one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ElectionParams {
    pub master_address: MacAddress,
    pub sync_address: MacAddress,
    pub master_counter: u32,
    pub distance_to_master: u32,
    pub master_metric: u32,
    pub self_metric: u32,
    pub self_counter: u32,
}

pub fn encode_election_params(e: &ElectionParams) -> Tlv {
    let mut v = Vec::with_capacity(ELECTION_PARAMS_LEN);
    v.extend_from_slice(&e.master_address.0);
    v.extend_from_slice(&e.sync_address.0);
    for x in [e.master_counter, e.distance_to_master, e.master_metric, e.self_metric, e.self_counter] {
        v.extend_from_slice(&x.to_le_bytes());
    }
    Tlv::new(tlv_type::ELECTION_PARAMS, v)
}

pub fn decode_election_params(t: &Tlv) -> Result<ElectionParams> {
    t.expect_type(tlv_type::ELECTION_PARAMS)?;
    let mut r = Reader::new(&t.value);
    Ok(ElectionParams {
        master_address: r.mac()?,
        sync_address: r.mac()?,
        master_counter: r.u32_le()?,
        distance_to_master: r.u32_le()?,
        master_metric: r.u32_le()?,
        self_metric: r.u32_le()?,
        self_counter: r.u32_le()?,
    })
}

pub fn encode_hostname(name: &str) -> Tlv {
    Tlv::new(tlv_type::HOSTNAME, name.as_bytes().to_vec())
}

/// Hostnames are opaque; invalid UTF-8 is replaced rather than rejected.
pub fn decode_hostname(t: &Tlv) -> Result<String> {
    t.expect_type(tlv_type::HOSTNAME)?;
    Ok(String::from_utf8_lossy(&t.value).into_owned())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VersionInfo {
    pub version: u8,
    pub device_class: u8,
}

pub fn encode_version(v: VersionInfo) -> Tlv {
    Tlv::new(tlv_type::VERSION, vec![v.version, v.device_class])
}

pub fn decode_version(t: &Tlv) -> Result<VersionInfo> {
    t.expect_type(tlv_type::VERSION)?;
    let mut r = Reader::new(&t.value);
    Ok(VersionInfo { version: r.u8()?, device_class: r.u8()? })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample_sync() -> SyncParams {
        SyncParams {
            next_aw_channel: 6,
            tx_counter: 40,
            master_channel: 6,
            guard_time: 0,
            aw_period: 16,
            af_period: 110,
            flags: 0x1800,
            aw_ext_length: 16,
            aw_common_length: 16,
            remaining_aw_length: 9,
            ext_counts: [3, 3, 3, 3],
            master_address: MacAddress([2, 1, 2, 3, 4, 5]),
            presence_mode: 4,
            aw_seq_number: 0xbeef,
            ap_alignment_delta: 0,
            channel_sequence: ChannelSequence::uniform(6),
        }
    }

    #[test]
    fn sync_round_trip() {
        let s = sample_sync();
        let t = encode_sync_params(&s);
        assert_eq!(t.value.len(), SYNC_PARAMS_FIXED_LEN + 6 + 16);
        assert_eq!(decode_sync_params(&t).unwrap(), s);
    }

    #[test]
    fn sync_truncated_before_master_address() {
        let t = encode_sync_params(&sample_sync());
        let cut = Tlv::new(tlv_type::SYNC_PARAMS, t.value[..23].to_vec());
        assert!(matches!(decode_sync_params(&cut), Err(CodecError::TruncatedValue { .. })));
    }

    #[test]
    fn sync_seq_number_little_endian() {
        let mut t = encode_sync_params(&sample_sync());
        t.value[29] = 0x02;
        t.value[30] = 0x01;
        assert_eq!(decode_sync_params(&t).unwrap().aw_seq_number, 258);
    }

    #[test]
    fn sync_remaining_exceeds_common() {
        let mut s = sample_sync();
        s.remaining_aw_length = 17;
        let t = encode_sync_params(&s);
        assert!(matches!(decode_sync_params(&t), Err(CodecError::InvariantViolation(_))));
    }

    #[test]
    fn wrong_tlv_type() {
        let t = Tlv::new(0x05, vec![0; 64]);
        assert_eq!(decode_sync_params(&t), Err(CodecError::WrongTlvType { expected: 0x04, found: 0x05 }));
        assert!(matches!(decode_election_params(&t), Err(CodecError::WrongTlvType { .. })));
    }

    #[test]
    fn election_round_trip_and_layout() {
        let e = ElectionParams {
            master_address: MacAddress([2, 0, 0, 0, 0, 9]),
            sync_address: MacAddress([2, 0, 0, 0, 0, 8]),
            master_counter: 3,
            distance_to_master: 2,
            master_metric: 700,
            self_metric: 0x100,
            self_counter: 1,
        };
        let t = encode_election_params(&e);
        assert_eq!(t.value.len(), ELECTION_PARAMS_LEN);
        assert_eq!(&t.value[24..28], &[0x00, 0x01, 0x00, 0x00]);
        assert_eq!(decode_election_params(&t).unwrap(), e);
        let short = Tlv::new(tlv_type::ELECTION_PARAMS, t.value[..31].to_vec());
        assert!(matches!(decode_election_params(&short), Err(CodecError::TruncatedValue { .. })));
    }

    #[test]
    fn election_decode_is_lenient_about_distance() {
        // Distance 0 while naming some other master: decode accepts it.
        let e = ElectionParams {
            master_address: MacAddress([2, 0, 0, 0, 0, 9]),
            sync_address: MacAddress([2, 0, 0, 0, 0, 9]),
            master_counter: 0,
            distance_to_master: 0,
            master_metric: 1,
            self_metric: 1,
            self_counter: 0,
        };
        assert_eq!(decode_election_params(&encode_election_params(&e)).unwrap(), e);
    }

    #[test]
    fn uniform_social_channel_sequence() {
        for ch in [6, 44, 149] {
            let c = decode_channel_sequence(&encode_channel_sequence(&ChannelSequence::uniform(ch))).unwrap();
            assert_eq!(c.entries.len(), 16);
            assert!(c.entries.iter().all(|e| e.channel == ch));
        }
    }

    #[test]
    fn bare_encoding_hand_built() {
        let mut raw = vec![15, 0, 0, 3, 0xff, 0xff];
        raw.extend((0..16).map(|i| if i < 8 { 6 } else { 44 }));
        let c = decode_channel_sequence(&raw).unwrap();
        assert_eq!(c.encoding, SequenceEncoding::Channels);
        assert_eq!(c.step_count, 4);
        assert_eq!(c.fill_channel, 0xffff);
        assert!(c.entries.iter().all(|e| e.flags == 0));
        assert_eq!(c.entries[7].channel, 6);
        assert_eq!(c.entries[8].channel, 44);
        assert_eq!(encode_channel_sequence(&c), raw);
    }

    #[test]
    fn flagged_encoding_round_trip() {
        let mut raw = vec![15, 1, 0, 3, 0xff, 0xff];
        for i in 0..16u8 {
            raw.extend_from_slice(&[0x51 + (i % 2), if i % 4 == 0 { 149 } else { 6 }]);
        }
        let c = decode_channel_sequence(&raw).unwrap();
        assert_eq!(c.entries[0], ChannelEntry { flags: 0x51, channel: 149 });
        assert_eq!(c.entries[1], ChannelEntry { flags: 0x52, channel: 6 });
        assert_eq!(encode_channel_sequence(&c), raw);
    }

    #[test]
    fn channel_sequence_errors() {
        let mut raw = encode_channel_sequence(&ChannelSequence::uniform(6));
        raw[1] = 2;
        assert_eq!(decode_channel_sequence(&raw), Err(CodecError::BadEncodingId(2)));
        let raw = encode_channel_sequence(&ChannelSequence::uniform(6));
        assert!(matches!(decode_channel_sequence(&raw[..20]), Err(CodecError::TruncatedValue { .. })));
        let mut raw = encode_channel_sequence(&ChannelSequence::uniform(6));
        raw[10] = 20;
        assert!(matches!(decode_channel_sequence(&raw), Err(CodecError::InvariantViolation(_))));
    }

    #[test]
    fn padding_with_last_entry() {
        let e = [ChannelEntry { flags: 0, channel: 149 }, ChannelEntry { flags: 0, channel: 6 }];
        let c = ChannelSequence::from_entries(SequenceEncoding::Channels, &e).unwrap();
        assert_eq!(c.entries[0].channel, 149);
        assert!(c.entries[1..].iter().all(|e| e.channel == 6));
        assert!(ChannelSequence::from_entries(SequenceEncoding::Channels, &[]).is_err());
        assert!(ChannelSequence::from_entries(SequenceEncoding::Channels, &[e[0]; 17]).is_err());
    }

    #[test]
    fn hostname_and_version() {
        assert_eq!(decode_hostname(&encode_hostname("linux-box")).unwrap(), "linux-box");
        let v = VersionInfo { version: 0x3e, device_class: 0x01 };
        assert_eq!(decode_version(&encode_version(v)).unwrap(), v);
        assert!(decode_version(&Tlv::new(tlv_type::VERSION, vec![1])).is_err());
    }
}
