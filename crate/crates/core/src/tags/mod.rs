//! Time-tag data model, stream I/O and triplet coincidence finding.

mod io;
mod triplets;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use io::{
    read_stream, write_csv, write_stream, BinaryTagWriter, CsvTagWriter, StreamFormat, TagError, TagReader, TagStream,
    BINARY_HEADER_LEN, BINARY_RECORD_LEN, FORMAT_VERSION, MAGIC,
};
pub use triplets::{find_triplets, triplets_csv, TripletEvent, TripletFinder};

/// Detector channel: D1 heralds, D2 and D3 the two telecom detectors.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Channel {
    D1 = 1,
    D2 = 2,
    D3 = 3,
}

impl Channel {
    pub fn id(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for Channel {
    type Error = u8;

    fn try_from(value: u8) -> Result<Self, u8> {
        match value {
            1 => Ok(Channel::D1),
            2 => Ok(Channel::D2),
            3 => Ok(Channel::D3),
            other => Err(other),
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "D{}", self.id())
    }
}

/// One detector click. Ordered by ticks, then channel.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TimeTag {
    pub ticks: u64,
    pub channel: Channel,
}

impl TimeTag {
    pub fn new(channel: Channel, ticks: u64) -> Self {
        TimeTag { ticks, channel }
    }
}
