//! Availability-window timekeeping.
//!
//! A node's schedule is an anchor: the local time at which the availability
//! window numbered `anchor_seq` started. Windows are 16 TU long and numbered
//! with a wrapping u16. Followers re-anchor on every frame from their sync
//! master; masters only ever advance on their own clock.

use serde::{Deserialize, Serialize};

use crate::codec::{ChannelSequence, SyncParams, CHANNEL_SEQUENCE_LEN};
use crate::election::ElectionState;
use crate::time::{TimeMicros, TU_MICROS};

/// Availability window length in TU.
pub const AW_TU: u16 = 16;
pub const AW_DURATION_MICROS: u32 = AW_TU as u32 * TU_MICROS as u32;
/// Availability windows per channel-sequence slot.
pub const SLOT_AWS: u8 = 4;
/// Windows covered by one pass through the channel sequence.
pub const SEQUENCE_PERIOD_AWS: u16 = CHANNEL_SEQUENCE_LEN as u16 * SLOT_AWS as u16;
pub const DEFAULT_AF_PERIOD_TU: u16 = 110;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SyncError {
    #[error("remaining_aw_length {remaining} exceeds aw_common_length {common}")]
    InvariantViolation { remaining: u16, common: u16 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncState {
    /// Local start time of window `anchor_seq`.
    pub anchor_time: TimeMicros,
    pub anchor_seq: u16,
    pub aw_duration: u32,
    pub slot_aws: u8,
    /// Action-frame period in microseconds.
    pub af_period: u32,
    pub channel_sequence: ChannelSequence,
}

impl SyncState {
    pub fn new(anchor_time: TimeMicros, anchor_seq: u16, af_period_tu: u16, channel_sequence: ChannelSequence) -> Self {
        SyncState {
            anchor_time,
            anchor_seq,
            aw_duration: AW_DURATION_MICROS,
            slot_aws: SLOT_AWS,
            af_period: af_period_tu as u32 * TU_MICROS as u32,
            channel_sequence,
        }
    }

    /// Local start time of the window containing `t`.
    pub fn aw_start_at(&self, t: TimeMicros) -> TimeMicros {
        let (_, elapsed) = aw_seq_at(self, t);
        TimeMicros(t.0 - elapsed as u64)
    }
}

/// Window number and offset into that window at local time `t`.
pub fn aw_seq_at(s: &SyncState, t: TimeMicros) -> (u16, u32) {
    let d = t.signed_diff(s.anchor_time);
    let dur = s.aw_duration as i128;
    let windows = d.div_euclid(dur);
    let elapsed = d.rem_euclid(dur) as u32;
    let seq = (s.anchor_seq as i128 + windows).rem_euclid(1 << 16) as u16;
    (seq, elapsed)
}

/// Advisory channel for window `seq`. The engine never retunes.
pub fn channel_for_seq(s: &SyncState, seq: u16) -> u8 {
    let slot = (seq % SEQUENCE_PERIOD_AWS) as usize / s.slot_aws.max(1) as usize;
    s.channel_sequence.entries[slot.min(CHANNEL_SEQUENCE_LEN - 1)].channel
}

/// Re-anchors on a master's parameters. `frame_target_tx` is the local time
/// the parameters describe.
pub fn adopt_timing(s: &SyncState, sp: &SyncParams, frame_target_tx: TimeMicros) -> Result<SyncState, SyncError> {
    if sp.remaining_aw_length > sp.aw_common_length {
        return Err(SyncError::InvariantViolation { remaining: sp.remaining_aw_length, common: sp.aw_common_length });
    }
    let elapsed = (sp.aw_common_length - sp.remaining_aw_length) as u64 * TU_MICROS;
    let mut anchor_seq = sp.aw_seq_number;
    let anchor_time = if frame_target_tx.0 >= elapsed {
        frame_target_tx.0 - elapsed
    } else {
        // Window would start before the epoch; anchor on a later window instead.
        let dur = s.aw_duration as u64;
        let k = (elapsed - frame_target_tx.0).div_ceil(dur);
        anchor_seq = anchor_seq.wrapping_add(k as u16);
        frame_target_tx.0 + k * dur - elapsed
    };
    Ok(SyncState {
        anchor_time: TimeMicros(anchor_time),
        anchor_seq,
        channel_sequence: sp.channel_sequence.clone(),
        ..s.clone()
    })
}

/// Parameters describing `s` at `next_af`, the frame's target transmit time.
pub fn build_sync_params(s: &SyncState, e: &ElectionState, now: TimeMicros, next_af: TimeMicros) -> SyncParams {
    let (seq, elapsed) = aw_seq_at(s, next_af);
    let remaining = ((s.aw_duration - elapsed) as u64 / TU_MICROS) as u16;
    let channel = channel_for_seq(s, seq);
    let tx_counter = next_af.saturating_sub(now).div_ceil(TU_MICROS).min(u16::MAX as u64) as u16;
    let aw_tu = (s.aw_duration as u64 / TU_MICROS) as u16;
    SyncParams {
        next_aw_channel: channel,
        tx_counter,
        master_channel: channel,
        guard_time: 0,
        aw_period: aw_tu,
        af_period: (s.af_period as u64 / TU_MICROS) as u16,
        flags: 0,
        aw_ext_length: aw_tu,
        aw_common_length: aw_tu,
        remaining_aw_length: remaining,
        ext_counts: [0; 4],
        master_address: e.top_master,
        presence_mode: 0,
        aw_seq_number: seq,
        ap_alignment_delta: 0,
        channel_sequence: s.channel_sequence.clone(),
    }
}

/// Smallest `t > now` on the action-frame grid anchored at `anchor_time`.
pub fn next_af_time(s: &SyncState, now: TimeMicros) -> TimeMicros {
    let period = s.af_period.max(1) as i128;
    let d = now.signed_diff(s.anchor_time);
    let k = d.div_euclid(period) + 1;
    TimeMicros((s.anchor_time.0 as i128 + k * period) as u64)
}

/// Phase distance between two predicted window starts, in `[0, aw_duration/2]`.
pub fn sync_error(a_pred: TimeMicros, b_pred: TimeMicros, aw_duration: u32) -> u32 {
    let d = (a_pred.0.abs_diff(b_pred.0) % aw_duration as u64) as u32;
    d.min(aw_duration - d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{ChannelEntry, SequenceEncoding};
    use crate::mac::MacAddress;

    fn state(anchor: u64, seq: u16) -> SyncState {
        SyncState::new(TimeMicros(anchor), seq, DEFAULT_AF_PERIOD_TU, ChannelSequence::uniform(6))
    }

    #[test]
    fn aw_seq_examples() {
        let s = state(1_000_000, 7);
        assert_eq!(aw_seq_at(&s, TimeMicros(1_000_000)), (7, 0));
        assert_eq!(aw_seq_at(&s, TimeMicros(1_000_000 + 16_384)), (8, 0));
        let s = state(1_000_000, 65535);
        assert_eq!(aw_seq_at(&s, TimeMicros(1_000_000 + 3 * 16_384 + 100)), (2, 100));
        // Before the anchor: one microsecond earlier is the tail of the previous window.
        let s = state(1_000_000, 0);
        assert_eq!(aw_seq_at(&s, TimeMicros(999_999)), (65535, 16_383));
    }

    #[test]
    fn channel_slots() {
        let entries: Vec<ChannelEntry> = (0..16u8).map(|i| ChannelEntry { flags: 0, channel: 36 + 4 * i }).collect();
        let mut s = state(0, 0);
        s.channel_sequence = ChannelSequence::from_entries(SequenceEncoding::Channels, &entries).unwrap();
        assert_eq!(channel_for_seq(&s, 0), 36);
        assert_eq!(channel_for_seq(&s, 3), 36);
        assert_eq!(channel_for_seq(&s, 4), 40);
        assert_eq!(channel_for_seq(&s, 63), 96);
        assert_eq!(channel_for_seq(&s, 64), 36);
        let u = state(0, 0);
        assert!((0..=u16::MAX).step_by(97).all(|seq| channel_for_seq(&u, seq) == 6));
    }

    fn master() -> ElectionState {
        ElectionState::new(MacAddress([2, 0, 0, 0, 0, 1]), 10, 0)
    }

    #[test]
    fn adopt_examples() {
        let s = state(0, 0);
        let mut sp = build_sync_params(&state(0, 0), &master(), TimeMicros(0), TimeMicros(0));
        sp.aw_common_length = 16;
        sp.remaining_aw_length = 16;
        sp.aw_seq_number = 42;
        let a = adopt_timing(&s, &sp, TimeMicros(1_000_000)).unwrap();
        assert_eq!((a.anchor_time, a.anchor_seq), (TimeMicros(1_000_000), 42));

        sp.remaining_aw_length = 8;
        let a = adopt_timing(&s, &sp, TimeMicros(1_000_000)).unwrap();
        assert_eq!(a.anchor_time, TimeMicros(1_000_000 - 8192));
        assert_eq!(adopt_timing(&s, &sp, TimeMicros(1_000_000)).unwrap(), a);
        assert_eq!(a.af_period, s.af_period);

        sp.remaining_aw_length = 17;
        assert!(adopt_timing(&s, &sp, TimeMicros(1_000_000)).is_err());
    }

    #[test]
    fn adopt_near_epoch_moves_anchor_forward() {
        let s = state(0, 0);
        let mut sp = build_sync_params(&s, &master(), TimeMicros(0), TimeMicros(0));
        sp.remaining_aw_length = 4;
        sp.aw_seq_number = 65535;
        let a = adopt_timing(&s, &sp, TimeMicros(100)).unwrap();
        // The window began 12 TU before t=100; the next one starts 4 TU after it.
        assert_eq!((a.anchor_time, a.anchor_seq), (TimeMicros(100 + 4096), 0));
        assert_eq!(aw_seq_at(&a, TimeMicros(100)), (65535, 12 * 1024));
    }

    #[test]
    fn build_params_examples() {
        let s = state(0, 0);
        let sp = build_sync_params(&s, &master(), TimeMicros(0), TimeMicros(20_000));
        assert_eq!(sp.aw_seq_number, 1);
        // Window 1 ends at 32768; floor((32768 - 20000) / 1024) = 12.
        assert_eq!(sp.remaining_aw_length, 12);
        assert_eq!(sp.aw_common_length, 16);
        assert_eq!(sp.aw_ext_length, 16);
        assert_eq!(sp.af_period, 110);
        assert_eq!(sp.tx_counter, 20); // ceil(20000 / 1024)
        assert_eq!(sp.master_address, master().top_master);

        let boundary = build_sync_params(&s, &master(), TimeMicros(0), TimeMicros(3 * 16_384));
        assert_eq!(boundary.remaining_aw_length, boundary.aw_common_length);
        assert_eq!(boundary.aw_seq_number, 3);
    }

    #[test]
    fn next_af_examples() {
        let mut s = state(0, 0);
        assert_eq!(s.af_period, 112_640);
        assert_eq!(next_af_time(&s, TimeMicros(500_000)), TimeMicros(563_200));
        assert_eq!(next_af_time(&s, TimeMicros(563_199)), TimeMicros(563_200));
        assert_eq!(next_af_time(&s, TimeMicros(563_200)), TimeMicros(675_840));
        s.anchor_time = TimeMicros(1_000_000);
        assert_eq!(next_af_time(&s, TimeMicros(0)), TimeMicros(1_000_000 - 8 * 112_640));
    }

    #[test]
    fn sync_error_examples() {
        assert_eq!(sync_error(TimeMicros(5), TimeMicros(5), 16_384), 0);
        assert_eq!(sync_error(TimeMicros(5), TimeMicros(5 + 16_384), 16_384), 0);
        assert_eq!(sync_error(TimeMicros(0), TimeMicros(15_000), 16_384), 1_384);
        assert_eq!(sync_error(TimeMicros(15_000), TimeMicros(0), 16_384), 1_384);
        assert_eq!(sync_error(TimeMicros(0), TimeMicros(8192), 16_384), 8192);
    }
}
