//! Timetag streams: the raw detection and trigger events recorded by the
//! time-to-digital converter, plus validation and merging.
//!
//! All timestamps are integer picoseconds since the stream origin. A stream
//! additionally records its quantization (`resolution_ps`); every timestamp
//! is expected to be a multiple of it.

mod qtt;

pub use qtt::{read_stream, read_stream_file, write_stream, write_stream_file, QTT1_MAGIC};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Detector or trigger channel id as stored in stream files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Channel(pub u16);

impl Channel {
    pub const SIGNAL: Channel = Channel(0);
    pub const IDLER: Channel = Channel(1);
    pub const TRIGGER: Channel = Channel(2);

    pub fn is_known(self) -> bool {
        self.0 <= 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimeTag {
    pub channel: Channel,
    pub time: i64,
}

impl TimeTag {
    pub fn new(channel: Channel, time: i64) -> Self {
        TimeTag { channel, time }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagStream {
    pub tags: Vec<TimeTag>,
    pub resolution_ps: u64,
}

impl Default for TagStream {
    fn default() -> Self {
        TagStream::empty()
    }
}

impl TagStream {
    pub fn new(tags: Vec<TimeTag>, resolution_ps: u64) -> Result<Self> {
        if resolution_ps == 0 {
            return Err(Error::InvalidArgument("resolution must be positive".into()));
        }
        Ok(TagStream {
            tags,
            resolution_ps,
        })
    }

    /// Empty stream at 1 ps resolution.
    pub fn empty() -> Self {
        TagStream {
            tags: Vec::new(),
            resolution_ps: 1,
        }
    }

    /// Builds a single-channel stream from sorted picosecond timestamps.
    pub fn from_times(channel: Channel, times: impl IntoIterator<Item = i64>) -> Self {
        TagStream {
            tags: times
                .into_iter()
                .map(|t| TimeTag::new(channel, t))
                .collect(),
            resolution_ps: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = i64> + '_ {
        self.tags.iter().map(|t| t.time)
    }

    /// Sub-stream holding only the tags of `channel`, order preserved.
    pub fn channel(&self, channel: Channel) -> TagStream {
        TagStream {
            tags: self
                .tags
                .iter()
                .copied()
                .filter(|t| t.channel == channel)
                .collect(),
            resolution_ps: self.resolution_ps,
        }
    }

    /// Rewrites channel ids through `map` (pairs of `from -> to`). Ids not
    /// listed are kept. Used to adapt recordings wired to other inputs.
    pub fn remap_channels(&mut self, map: &[(Channel, Channel)]) {
        if map.iter().all(|(from, to)| from == to) {
            return;
        }
        for tag in &mut self.tags {
            if let Some((_, to)) = map.iter().find(|(from, _)| *from == tag.channel) {
                tag.channel = *to;
            }
        }
    }

    pub fn validate(&self) -> ValidationReport {
        validate_stream(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// Timestamp smaller than its predecessor.
    NonMonotonic {
        previous: i64,
        time: i64,
    },
    NegativeTime(i64),
    UnknownChannel(Channel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub index: usize,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Reports every ordering, sign, and channel violation in `stream`.
pub fn validate_stream(stream: &TagStream) -> ValidationReport {
    let mut violations = Vec::new();
    let mut previous: Option<i64> = None;
    for (index, tag) in stream.tags.iter().enumerate() {
        if tag.time < 0 {
            violations.push(Violation {
                index,
                kind: ViolationKind::NegativeTime(tag.time),
            });
        }
        if !tag.channel.is_known() {
            violations.push(Violation {
                index,
                kind: ViolationKind::UnknownChannel(tag.channel),
            });
        }
        if let Some(prev) = previous {
            if tag.time < prev {
                violations.push(Violation {
                    index,
                    kind: ViolationKind::NonMonotonic {
                        previous: prev,
                        time: tag.time,
                    },
                });
            }
        }
        previous = Some(tag.time);
    }
    ValidationReport { violations }
}

/// Time-ordered union of two streams. On equal timestamps tags from `a`
/// come first, and each input keeps its internal order.
pub fn merge_streams(a: &TagStream, b: &TagStream) -> Result<TagStream> {
    if a.resolution_ps != b.resolution_ps {
        return Err(Error::ResolutionMismatch {
            a: a.resolution_ps,
            b: b.resolution_ps,
        });
    }
    let mut tags = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.tags.len() && j < b.tags.len() {
        if b.tags[j].time < a.tags[i].time {
            tags.push(b.tags[j]);
            j += 1;
        } else {
            tags.push(a.tags[i]);
            i += 1;
        }
    }
    tags.extend_from_slice(&a.tags[i..]);
    tags.extend_from_slice(&b.tags[j..]);
    Ok(TagStream {
        tags,
        resolution_ps: a.resolution_ps,
    })
}
