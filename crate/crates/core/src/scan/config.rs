use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PS_PER_US: f64 = 1e6;

/// Which scan directions contribute to the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Directions {
    /// Forward and column-mirrored reverse passes are folded into one image.
    #[default]
    Both,
    ForwardOnly,
    ReverseOnly,
}

/// Scanner geometry and timing.
///
/// One line trigger is emitted per line; a bidirectional line is a forward
/// pass, a turnaround, the reverse pass, and another turnaround before the
/// next trigger. After the last line of a frame the mirrors fly back for a
/// time equal to the frame scan duration when `flyback_equals_frame` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub pixels_x: u32,
    pub pixels_y: u32,
    pub dwell_time_us: f64,
    pub turnaround_time_us: f64,
    pub field_of_view_x_um: f64,
    pub field_of_view_y_um: f64,
    pub bidirectional: bool,
    pub flyback_equals_frame: bool,
    pub directions: Directions,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            pixels_x: 96,
            pixels_y: 96,
            dwell_time_us: 10.0,
            turnaround_time_us: 400.0,
            field_of_view_x_um: 100.0,
            field_of_view_y_um: 100.0,
            bidirectional: true,
            flyback_equals_frame: true,
            directions: Directions::Both,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(format!("scan: {msg}")));
        if self.pixels_x == 0 || self.pixels_y == 0 {
            return bad("pixel counts must be positive");
        }
        if !(self.dwell_time_us.is_finite() && self.dwell_ps() > 0) {
            return bad("dwell time must be at least 1 ps");
        }
        if !(self.turnaround_time_us.is_finite() && self.turnaround_time_us >= 0.0) {
            return bad("turnaround time must be non-negative");
        }
        for fov in [self.field_of_view_x_um, self.field_of_view_y_um] {
            if !(fov.is_finite() && fov > 0.0) {
                return bad("field of view must be positive");
            }
        }
        if !self.bidirectional && self.directions == Directions::ReverseOnly {
            return bad("reverse-only reconstruction needs a bidirectional scan");
        }
        Ok(())
    }

    pub fn dwell_ps(&self) -> i64 {
        (self.dwell_time_us * PS_PER_US).round() as i64
    }

    pub fn turnaround_ps(&self) -> i64 {
        (self.turnaround_time_us * PS_PER_US).round() as i64
    }

    /// Duration of one constant-speed pass across a line.
    pub fn pass_ps(&self) -> i64 {
        self.pixels_x as i64 * self.dwell_ps()
    }

    /// Shortest admissible spacing between consecutive line triggers.
    pub fn min_trigger_spacing_ps(&self) -> i64 {
        let one_way = self.pass_ps() + self.turnaround_ps();
        if self.bidirectional {
            one_way + self.pass_ps()
        } else {
            one_way
        }
    }

    /// Nominal trigger spacing within a frame.
    pub fn line_period_ps(&self) -> i64 {
        let one_way = self.pass_ps() + self.turnaround_ps();
        if self.bidirectional {
            2 * one_way
        } else {
            one_way
        }
    }

    pub fn frame_scan_ps(&self) -> i64 {
        self.pixels_y as i64 * self.line_period_ps()
    }

    pub fn flyback_ps(&self) -> i64 {
        if self.flyback_equals_frame {
            self.frame_scan_ps()
        } else {
            0
        }
    }

    pub fn frame_period_ps(&self) -> i64 {
        self.frame_scan_ps() + self.flyback_ps()
    }

    pub fn pixel_pitch_x_um(&self) -> f64 {
        self.field_of_view_x_um / self.pixels_x as f64
    }

    pub fn pixel_pitch_y_um(&self) -> f64 {
        self.field_of_view_y_um / self.pixels_y as f64
    }

    /// Line trigger times of an ideal scanner started at `first`, up to (not
    /// including) `until`.
    pub fn trigger_times(&self, first: i64, until: i64) -> Vec<i64> {
        let mut out = Vec::new();
        let mut frame_start = first;
        'frames: loop {
            for line in 0..self.pixels_y as i64 {
                let t = frame_start + line * self.line_period_ps();
                if t >= until {
                    break 'frames;
                }
                out.push(t);
            }
            frame_start += self.frame_period_ps();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_timing_in_picoseconds() {
        let c = ScanConfig::default();
        assert_eq!(c.dwell_ps(), 10_000_000);
        assert_eq!(c.turnaround_ps(), 400_000_000);
        assert_eq!(c.pass_ps(), 960_000_000);
        assert_eq!(c.line_period_ps(), 2 * (960_000_000 + 400_000_000));
        assert_eq!(c.flyback_ps(), c.frame_scan_ps());
    }

    #[test]
    fn pixel_pitch_near_one_micron() {
        let c = ScanConfig::default();
        assert!((c.pixel_pitch_x_um() - 1.04).abs() < 0.005);
    }

    #[test]
    fn validation_catches_zero_dwell_and_pixels() {
        let c = ScanConfig {
            dwell_time_us: 0.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = ScanConfig {
            pixels_x: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        assert!(ScanConfig::default().validate().is_ok());
    }

    #[test]
    fn trigger_train_has_flyback_gap() {
        let c = ScanConfig {
            pixels_y: 3,
            ..ScanConfig::default()
        };
        let t = c.trigger_times(0, 2 * c.frame_period_ps());
        assert_eq!(t.len(), 6);
        assert_eq!(t[1] - t[0], c.line_period_ps());
        assert_eq!(t[3] - t[2], c.line_period_ps() + c.flyback_ps());
    }
}
