//! Scan timeline decoding and pixel assignment.

mod config;
mod image;
mod timeline;

pub use config::{Directions, ScanConfig};
pub use image::{accumulate_frames, read_frame_stack, write_frame_stack, ExpectedImage, ImageGrid};
pub use timeline::{build_timeline, Frame, LineRecord, ScanSegment, ScanTimeline, Segment};

use rayon::prelude::*;

/// Pixel `(row, col)` an event at `t` belongs to, or `None` if it falls in a
/// turnaround, flyback, outside the scan, or in a direction excluded by
/// `config.directions`.
pub fn pixel_of(t: i64, timeline: &ScanTimeline, config: &ScanConfig) -> Option<(usize, usize)> {
    let seg = timeline.locate(t)?;
    let wanted = match config.directions {
        Directions::Both => true,
        Directions::ForwardOnly => !seg.reverse,
        Directions::ReverseOnly => seg.reverse,
    };
    if !wanted {
        return None;
    }
    let col = ((t - seg.span.start) / config.dwell_ps()) as usize;
    let col = if seg.reverse {
        config.pixels_x as usize - 1 - col
    } else {
        col
    };
    Some((seg.row as usize, col))
}

/// Bins event times into an image. Events outside valid scan segments are
/// tallied in `discarded_tags`; input order does not matter.
pub fn assign_pixels(
    events: impl IntoIterator<Item = i64>,
    timeline: &ScanTimeline,
    config: &ScanConfig,
) -> ImageGrid {
    let mut grid = empty_grid(config);
    grid.frames_accumulated = timeline.frames.len() as u64;
    for t in events {
        match pixel_of(t, timeline, config) {
            Some((r, c)) => grid.counts[r * grid.width + c] += 1,
            None => grid.discarded_tags += 1,
        }
    }
    grid
}

/// One image per timeline frame. Frame `f` owns events from its first
/// trigger up to the next frame's first trigger; events before the first
/// trigger land (as discards) in frame 0. Summing the result equals
/// [`assign_pixels`] over the same events.
pub fn assign_frames(
    events: &[i64],
    timeline: &ScanTimeline,
    config: &ScanConfig,
) -> Vec<ImageGrid> {
    let sorted;
    let events = if events.windows(2).all(|w| w[0] <= w[1]) {
        events
    } else {
        let mut v = events.to_vec();
        v.sort_unstable();
        sorted = v;
        &sorted
    };
    let starts = timeline.frame_starts();
    let n = starts.len();
    let bounds: Vec<usize> = (0..=n)
        .map(|f| match f {
            0 => 0,
            f if f == n => events.len(),
            f => events.partition_point(|&t| t < starts[f]),
        })
        .collect();
    (0..n)
        .into_par_iter()
        .map(|f| {
            let mut g = assign_pixels(
                events[bounds[f]..bounds[f + 1]].iter().copied(),
                timeline,
                config,
            );
            g.frames_accumulated = 1;
            g
        })
        .collect()
}

fn empty_grid(config: &ScanConfig) -> ImageGrid {
    ImageGrid::new(
        config.pixels_x as usize,
        config.pixels_y as usize,
        config.pixel_pitch_x_um(),
    )
}
