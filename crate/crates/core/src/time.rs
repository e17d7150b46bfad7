//! Integer time base shared by the simulator and the tag streams.
//!
//! Simulation time is counted in femtoseconds so that every apparatus
//! constant (23 ns loop, 45 ns dead time, 156.25 ps tagger bins) is exact.

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

/// Femtoseconds per second.
pub const FS_PER_SECOND: f64 = 1e15;

/// Time-tagger resolution, 156.25 ps, in femtoseconds.
pub const TICK_FS: u64 = 156_250;

/// Triplet coincidence window in ticks: 95.9375 ns / 156.25 ps.
pub const DEFAULT_WINDOW_TICKS: u64 = 614;

/// A point in time (or a duration) in whole femtoseconds.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Femtos(pub u64);

impl Femtos {
    pub const ZERO: Femtos = Femtos(0);
    pub const MAX: Femtos = Femtos(u64::MAX);

    /// Rounds a non-negative duration in seconds to the nearest femtosecond.
    ///
    /// Returns `None` for negative, non-finite or out-of-range input.
    pub fn from_seconds(seconds: f64) -> Option<Femtos> {
        if !seconds.is_finite() || seconds < 0.0 {
            return None;
        }
        let fs = (seconds * FS_PER_SECOND).round();
        if fs > u64::MAX as f64 {
            return None;
        }
        Some(Femtos(fs as u64))
    }

    pub fn as_seconds(self) -> f64 {
        self.0 as f64 / FS_PER_SECOND
    }

    /// Tag bin containing this instant.
    pub fn to_ticks(self, tick_fs: u64) -> u64 {
        self.0 / tick_fs
    }

    pub fn checked_add(self, rhs: Femtos) -> Option<Femtos> {
        self.0.checked_add(rhs.0).map(Femtos)
    }

    pub fn saturating_sub(self, rhs: Femtos) -> Femtos {
        Femtos(self.0.saturating_sub(rhs.0))
    }
}

impl Add for Femtos {
    type Output = Femtos;
    fn add(self, rhs: Femtos) -> Femtos {
        Femtos(self.0 + rhs.0)
    }
}

impl Sub for Femtos {
    type Output = Femtos;
    fn sub(self, rhs: Femtos) -> Femtos {
        Femtos(self.0 - rhs.0)
    }
}

impl fmt::Display for Femtos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} fs", self.0)
    }
}

/// Converts a duration in seconds to (fractional) tagger ticks.
pub fn seconds_to_ticks(seconds: f64, tick_fs: u64) -> f64 {
    seconds * FS_PER_SECOND / tick_fs as f64
}
