//! Binary and CSV tag streams.
//!
//! Binary layout, little-endian:
//!
//! ```text
//! "TTG1" | version: u8 = 1 | tick size in fs: u64 | record count: u64
//! record: channel: u8 | ticks: u64
//! ```
//!
//! The CSV form has the header `channel,ticks` and one tag per line.

use std::io::{self, BufRead, Seek, SeekFrom, Write};

use thiserror::Error;

use super::{Channel, TimeTag};
use crate::time::TICK_FS;

pub const MAGIC: &[u8; 4] = b"TTG1";
pub const FORMAT_VERSION: u8 = 1;
pub const BINARY_HEADER_LEN: u64 = 21;
pub const BINARY_RECORD_LEN: u64 = 9;
const CSV_HEADER: &str = "channel,ticks";

#[derive(Debug, Error)]
pub enum TagError {
    #[error("malformed header at byte {offset}: {reason}")]
    MalformedHeader { offset: u64, reason: String },
    #[error("tag out of order at byte {offset}: {found:?} after {previous:?}")]
    OutOfOrder {
        offset: u64,
        previous: TimeTag,
        found: TimeTag,
    },
    #[error("bad channel {channel} at byte {offset}")]
    BadChannel { offset: u64, channel: u64 },
    #[error("malformed record at byte {offset}: {reason}")]
    BadRecord { offset: u64, reason: String },
    #[error("stream truncated at byte {offset}: header announced {expected} records, found {found}")]
    Truncated { offset: u64, expected: u64, found: u64 },
    #[error("unexpected data after the last record at byte {offset}")]
    TrailingData { offset: u64 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum StreamFormat {
    Binary,
    Csv,
}

/// A fully loaded stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TagStream {
    pub tick_fs: u64,
    pub tags: Vec<TimeTag>,
}

/// Streaming reader that validates channel range and ordering as it goes.
/// The format is detected from the first bytes.
pub struct TagReader<R> {
    source: R,
    format: StreamFormat,
    tick_fs: u64,
    offset: u64,
    announced: u64,
    read: u64,
    previous: Option<TimeTag>,
    line: String,
    done: bool,
}

fn read_full<R: BufRead>(source: &mut R, buf: &mut [u8]) -> Result<usize, TagError> {
    let mut filled = 0;
    while filled < buf.len() {
        match source.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(filled)
}

impl<R: BufRead> TagReader<R> {
    pub fn new(mut source: R) -> Result<Self, TagError> {
        let head = source.fill_buf()?;
        if head.starts_with(MAGIC) || (head.len() < MAGIC.len() && !head.is_empty() && MAGIC.starts_with(head)) {
            Self::binary(source)
        } else if head.starts_with(b"channel") {
            Self::csv(source)
        } else {
            Err(TagError::MalformedHeader {
                offset: 0,
                reason: if head.is_empty() {
                    "empty stream".into()
                } else {
                    "neither TTG1 magic nor a CSV header".into()
                },
            })
        }
    }

    fn binary(mut source: R) -> Result<Self, TagError> {
        let mut header = [0u8; BINARY_HEADER_LEN as usize];
        let got = read_full(&mut source, &mut header)?;
        if got < header.len() {
            return Err(TagError::MalformedHeader {
                offset: got as u64,
                reason: format!("header needs {BINARY_HEADER_LEN} bytes, got {got}"),
            });
        }
        if header[4] != FORMAT_VERSION {
            return Err(TagError::MalformedHeader {
                offset: 4,
                reason: format!("unsupported version {}", header[4]),
            });
        }
        let tick_fs = u64::from_le_bytes(header[5..13].try_into().unwrap());
        if tick_fs == 0 {
            return Err(TagError::MalformedHeader {
                offset: 5,
                reason: "tick size is zero".into(),
            });
        }
        let announced = u64::from_le_bytes(header[13..21].try_into().unwrap());
        Ok(TagReader {
            source,
            format: StreamFormat::Binary,
            tick_fs,
            offset: BINARY_HEADER_LEN,
            announced,
            read: 0,
            previous: None,
            line: String::new(),
            done: false,
        })
    }

    fn csv(mut source: R) -> Result<Self, TagError> {
        let mut line = String::new();
        let n = source.read_line(&mut line)?;
        if line.trim_end_matches(['\r', '\n']) != CSV_HEADER {
            return Err(TagError::MalformedHeader {
                offset: 0,
                reason: format!("expected `{CSV_HEADER}`"),
            });
        }
        Ok(TagReader {
            source,
            format: StreamFormat::Csv,
            tick_fs: TICK_FS,
            offset: n as u64,
            announced: 0,
            read: 0,
            previous: None,
            line,
            done: false,
        })
    }

    pub fn format(&self) -> StreamFormat {
        self.format
    }

    /// Tick size in femtoseconds (the default 156250 for CSV input).
    pub fn tick_fs(&self) -> u64 {
        self.tick_fs
    }

    fn check_order(&mut self, tag: TimeTag, offset: u64) -> Result<TimeTag, TagError> {
        if let Some(previous) = self.previous {
            if tag < previous {
                return Err(TagError::OutOfOrder {
                    offset,
                    previous,
                    found: tag,
                });
            }
        }
        self.previous = Some(tag);
        self.read += 1;
        Ok(tag)
    }

    fn next_binary(&mut self) -> Result<Option<TimeTag>, TagError> {
        let start = self.offset;
        let mut record = [0u8; BINARY_RECORD_LEN as usize];
        if self.read == self.announced {
            let got = read_full(&mut self.source, &mut record[..1])?;
            return if got == 0 {
                Ok(None)
            } else {
                Err(TagError::TrailingData { offset: start })
            };
        }
        let got = read_full(&mut self.source, &mut record)?;
        if got < record.len() {
            return Err(TagError::Truncated {
                offset: start + got as u64,
                expected: self.announced,
                found: self.read,
            });
        }
        self.offset += BINARY_RECORD_LEN;
        let channel = Channel::try_from(record[0]).map_err(|c| TagError::BadChannel {
            offset: start,
            channel: c as u64,
        })?;
        let ticks = u64::from_le_bytes(record[1..].try_into().unwrap());
        self.check_order(TimeTag::new(channel, ticks), start).map(Some)
    }

    fn next_csv(&mut self) -> Result<Option<TimeTag>, TagError> {
        loop {
            let start = self.offset;
            self.line.clear();
            let n = self.source.read_line(&mut self.line)?;
            if n == 0 {
                return Ok(None);
            }
            self.offset += n as u64;
            let text = self.line.trim_end_matches(['\r', '\n']);
            if text.is_empty() {
                continue;
            }
            let bad = |reason: &str| TagError::BadRecord {
                offset: start,
                reason: reason.to_string(),
            };
            let (c, t) = text.split_once(',').ok_or_else(|| bad("expected `channel,ticks`"))?;
            let c: u64 = c.trim().parse().map_err(|_| bad("channel is not an integer"))?;
            let ticks: u64 = t.trim().parse().map_err(|_| bad("ticks is not an unsigned integer"))?;
            let channel = u8::try_from(c)
                .ok()
                .and_then(|c| Channel::try_from(c).ok())
                .ok_or(TagError::BadChannel {
                    offset: start,
                    channel: c,
                })?;
            return self.check_order(TimeTag::new(channel, ticks), start).map(Some);
        }
    }
}

impl<R: BufRead> Iterator for TagReader<R> {
    type Item = Result<TimeTag, TagError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = match self.format {
            StreamFormat::Binary => self.next_binary(),
            StreamFormat::Csv => self.next_csv(),
        };
        match item {
            Ok(Some(tag)) => Some(Ok(tag)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Reads and validates a whole stream.
pub fn read_stream<R: BufRead>(source: R) -> Result<TagStream, TagError> {
    let mut reader = TagReader::new(source)?;
    let mut tags = Vec::new();
    for tag in reader.by_ref() {
        tags.push(tag?);
    }
    Ok(TagStream {
        tick_fs: reader.tick_fs(),
        tags,
    })
}

fn check_sorted(tags: &[TimeTag], header_len: u64, record_len: u64) -> Result<(), TagError> {
    for (i, pair) in tags.windows(2).enumerate() {
        if pair[1] < pair[0] {
            return Err(TagError::OutOfOrder {
                offset: header_len + (i as u64 + 1) * record_len,
                previous: pair[0],
                found: pair[1],
            });
        }
    }
    Ok(())
}

fn encode_record(tag: TimeTag) -> [u8; BINARY_RECORD_LEN as usize] {
    let mut record = [0u8; BINARY_RECORD_LEN as usize];
    record[0] = tag.channel.id();
    record[1..].copy_from_slice(&tag.ticks.to_le_bytes());
    record
}

fn encode_header(tick_fs: u64, count: u64) -> [u8; BINARY_HEADER_LEN as usize] {
    let mut header = [0u8; BINARY_HEADER_LEN as usize];
    header[..4].copy_from_slice(MAGIC);
    header[4] = FORMAT_VERSION;
    header[5..13].copy_from_slice(&tick_fs.to_le_bytes());
    header[13..].copy_from_slice(&count.to_le_bytes());
    header
}

/// Writes the binary format and returns the number of bytes written.
pub fn write_stream<W: Write>(tags: &[TimeTag], tick_fs: u64, mut sink: W) -> Result<u64, TagError> {
    check_sorted(tags, BINARY_HEADER_LEN, BINARY_RECORD_LEN)?;
    sink.write_all(&encode_header(tick_fs, tags.len() as u64))?;
    for &tag in tags {
        sink.write_all(&encode_record(tag))?;
    }
    sink.flush()?;
    Ok(BINARY_HEADER_LEN + BINARY_RECORD_LEN * tags.len() as u64)
}

/// Writes the CSV format and returns the number of bytes written.
pub fn write_csv<W: Write>(tags: &[TimeTag], mut sink: W) -> Result<u64, TagError> {
    check_sorted(tags, 0, 0)?;
    let mut written = 0u64;
    let mut put = |s: &str, sink: &mut W| -> io::Result<()> {
        written += s.len() as u64;
        sink.write_all(s.as_bytes())
    };
    put(&format!("{CSV_HEADER}\n"), &mut sink)?;
    for tag in tags {
        put(&format!("{},{}\n", tag.channel.id(), tag.ticks), &mut sink)?;
    }
    sink.flush()?;
    Ok(written)
}

/// Incremental binary writer; the record count is patched into the header
/// by [`BinaryTagWriter::finish`].
pub struct BinaryTagWriter<W: Write + Seek> {
    sink: W,
    count: u64,
    previous: Option<TimeTag>,
}

impl<W: Write + Seek> BinaryTagWriter<W> {
    pub fn new(mut sink: W, tick_fs: u64) -> Result<Self, TagError> {
        sink.write_all(&encode_header(tick_fs, 0))?;
        Ok(BinaryTagWriter {
            sink,
            count: 0,
            previous: None,
        })
    }

    pub fn push(&mut self, tag: TimeTag) -> Result<(), TagError> {
        if let Some(previous) = self.previous {
            if tag < previous {
                return Err(TagError::OutOfOrder {
                    offset: BINARY_HEADER_LEN + self.count * BINARY_RECORD_LEN,
                    previous,
                    found: tag,
                });
            }
        }
        self.sink.write_all(&encode_record(tag))?;
        self.previous = Some(tag);
        self.count += 1;
        Ok(())
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Patches the header and returns the total byte count.
    pub fn finish(mut self) -> Result<(W, u64), TagError> {
        self.sink.seek(SeekFrom::Start(13))?;
        self.sink.write_all(&self.count.to_le_bytes())?;
        self.sink.seek(SeekFrom::End(0))?;
        self.sink.flush()?;
        Ok((self.sink, BINARY_HEADER_LEN + self.count * BINARY_RECORD_LEN))
    }
}

/// Incremental CSV writer.
pub struct CsvTagWriter<W: Write> {
    sink: W,
    count: u64,
    bytes: u64,
    previous: Option<TimeTag>,
}

impl<W: Write> CsvTagWriter<W> {
    pub fn new(mut sink: W) -> Result<Self, TagError> {
        let header = format!("{CSV_HEADER}\n");
        sink.write_all(header.as_bytes())?;
        Ok(CsvTagWriter {
            sink,
            count: 0,
            bytes: header.len() as u64,
            previous: None,
        })
    }

    pub fn push(&mut self, tag: TimeTag) -> Result<(), TagError> {
        if let Some(previous) = self.previous {
            if tag < previous {
                return Err(TagError::OutOfOrder {
                    offset: self.bytes,
                    previous,
                    found: tag,
                });
            }
        }
        let line = format!("{},{}\n", tag.channel.id(), tag.ticks);
        self.sink.write_all(line.as_bytes())?;
        self.bytes += line.len() as u64;
        self.previous = Some(tag);
        self.count += 1;
        Ok(())
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn finish(mut self) -> Result<(W, u64), TagError> {
        self.sink.flush()?;
        Ok((self.sink, self.bytes))
    }
}
