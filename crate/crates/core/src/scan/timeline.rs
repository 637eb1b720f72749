use serde::Serialize;

use super::ScanConfig;
use crate::error::{Error, Result};

/// Half-open time interval `[start, end)` in ps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Segment {
    pub start: i64,
    pub end: i64,
}

impl Segment {
    pub fn contains(&self, t: i64) -> bool {
        self.start <= t && t < self.end
    }

    pub fn duration(&self) -> i64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineRecord {
    pub line_index: u32,
    pub trigger: i64,
    pub forward: Segment,
    pub reverse: Option<Segment>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Frame {
    pub lines: Vec<LineRecord>,
    pub flyback: Option<Segment>,
    /// False for a trailing frame cut short by the end of the acquisition.
    pub complete: bool,
}

impl Frame {
    pub fn start(&self) -> i64 {
        self.lines[0].trigger
    }
}

/// A valid-data segment flattened out of the frame structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScanSegment {
    pub span: Segment,
    pub row: u32,
    pub frame: u32,
    pub reverse: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanTimeline {
    pub frames: Vec<Frame>,
    #[serde(skip)]
    segments: Vec<ScanSegment>,
}

impl ScanTimeline {
    /// All scan segments in time order.
    pub fn segments(&self) -> &[ScanSegment] {
        &self.segments
    }

    pub fn frame_starts(&self) -> Vec<i64> {
        self.frames.iter().map(Frame::start).collect()
    }

    /// Segment containing `t`, if any.
    pub fn locate(&self, t: i64) -> Option<&ScanSegment> {
        let k = self.segments.partition_point(|s| s.span.start <= t);
        k.checked_sub(1)
            .map(|k| &self.segments[k])
            .filter(|s| s.span.contains(t))
    }

    pub fn complete_frames(&self) -> usize {
        self.frames.iter().filter(|f| f.complete).count()
    }
}

/// Decodes line trigger times into per-line forward/reverse segments grouped
/// into frames of `pixels_y` lines.
pub fn build_timeline(triggers: &[i64], config: &ScanConfig) -> Result<ScanTimeline> {
    config.validate()?;
    if triggers.is_empty() {
        return Err(Error::Timeline("no line triggers".into()));
    }
    let required = config.min_trigger_spacing_ps();
    for (k, pair) in triggers.windows(2).enumerate() {
        let spacing = pair[1] - pair[0];
        if spacing <= 0 {
            return Err(Error::Timeline(format!(
                "line triggers not strictly increasing at index {}",
                k + 1
            )));
        }
        if spacing < required {
            return Err(Error::OverlappingSegments {
                index: k + 1,
                spacing_ps: spacing,
                required_ps: required,
            });
        }
    }

    let pass = config.pass_ps();
    let turn = config.turnaround_ps();
    let lines_per_frame = config.pixels_y as usize;
    let mut frames = Vec::with_capacity(triggers.len() / lines_per_frame + 1);
    let mut segments = Vec::with_capacity(triggers.len() * 2);

    for (f, chunk) in triggers.chunks(lines_per_frame).enumerate() {
        let mut lines = Vec::with_capacity(chunk.len());
        for (row, &trigger) in chunk.iter().enumerate() {
            let forward = Segment {
                start: trigger,
                end: trigger + pass,
            };
            let reverse = config.bidirectional.then(|| Segment {
                start: forward.end + turn,
                end: forward.end + turn + pass,
            });
            segments.push(ScanSegment {
                span: forward,
                row: row as u32,
                frame: f as u32,
                reverse: false,
            });
            if let Some(span) = reverse {
                segments.push(ScanSegment {
                    span,
                    row: row as u32,
                    frame: f as u32,
                    reverse: true,
                });
            }
            lines.push(LineRecord {
                line_index: row as u32,
                trigger,
                forward,
                reverse,
            });
        }
        let complete = chunk.len() == lines_per_frame;
        let flyback = complete.then(|| {
            let last = lines.last().unwrap();
            let start = last.reverse.unwrap_or(last.forward).end;
            let next = f * lines_per_frame + chunk.len();
            let end = triggers
                .get(next)
                .copied()
                .unwrap_or(start + turn + config.flyback_ps());
            Segment { start, end }
        });
        frames.push(Frame {
            lines,
            flyback,
            complete,
        });
    }

    Ok(ScanTimeline { frames, segments })
}
