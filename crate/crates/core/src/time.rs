//! Microsecond timestamps and 802.11 time units.

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

/// One 802.11 time unit in microseconds.
pub const TU_MICROS: u64 = 1024;

/// Microseconds since an arbitrary per-run epoch.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TimeMicros(pub u64);

impl TimeMicros {
    pub const ZERO: TimeMicros = TimeMicros(0);

    pub const fn from_millis(ms: u64) -> Self {
        TimeMicros(ms * 1000)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn saturating_sub(self, other: TimeMicros) -> u64 {
        self.0.saturating_sub(other.0)
    }

    /// Signed difference `self - other` in microseconds.
    pub fn signed_diff(self, other: TimeMicros) -> i128 {
        self.0 as i128 - other.0 as i128
    }
}

impl Add<u64> for TimeMicros {
    type Output = TimeMicros;
    fn add(self, rhs: u64) -> TimeMicros {
        TimeMicros(self.0 + rhs)
    }
}

impl Sub<u64> for TimeMicros {
    type Output = TimeMicros;
    fn sub(self, rhs: u64) -> TimeMicros {
        TimeMicros(self.0 - rhs)
    }
}

impl fmt::Debug for TimeMicros {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}us", self.0)
    }
}

impl fmt::Display for TimeMicros {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
