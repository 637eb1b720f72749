use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::edge::{fit_edge, EdgeFitResult};
use crate::error::{Error, Result};
use crate::scan::ImageGrid;

/// Direction the profiles run in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileAxis {
    /// Profiles are image rows (crossing a vertical edge).
    Rows,
    /// Profiles are image columns (crossing a horizontal edge).
    Columns,
}

/// Rectangle `rows[0]..rows[1]` x `cols[0]..cols[1]` (half-open) straddling
/// an edge, sampled by `count` evenly spaced one-pixel profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeRegion {
    pub axis: ProfileAxis,
    pub rows: [usize; 2],
    pub cols: [usize; 2],
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Linescan {
    /// Row (or column) index the profile was taken from.
    pub line: usize,
    /// `(position_um, counts)` at pixel centres.
    pub points: Vec<(f64, f64)>,
}

pub fn extract_linescans(image: &ImageGrid, region: &EdgeRegion) -> Result<Vec<Linescan>> {
    let [r0, r1] = region.rows;
    let [c0, c1] = region.cols;
    if r0 >= r1 || c0 >= c1 || r1 > image.height || c1 > image.width {
        return Err(Error::InvalidArgument(format!(
            "edge region rows {r0}..{r1}, cols {c0}..{c1} outside {}x{} image",
            image.height, image.width
        )));
    }
    let (lines, along) = match region.axis {
        ProfileAxis::Rows => (r0..r1, c0..c1),
        ProfileAxis::Columns => (c0..c1, r0..r1),
    };
    let n = lines.len();
    if region.count == 0 || region.count > n {
        return Err(Error::InvalidArgument(format!(
            "cannot take {} profiles from {n} lines",
            region.count
        )));
    }
    let pitch = image.pixel_pitch_um;
    Ok((0..region.count)
        .map(|i| {
            let line = lines.start + i * n / region.count;
            let points = along
                .clone()
                .map(|k| {
                    let v = match region.axis {
                        ProfileAxis::Rows => image.get(line, k),
                        ProfileAxis::Columns => image.get(k, line),
                    };
                    ((k as f64 + 0.5) * pitch, v as f64)
                })
                .collect();
            Linescan { line, points }
        })
        .collect())
}

/// Fits every linescan independently.
pub fn fit_linescans(scans: &[Linescan]) -> Vec<Result<EdgeFitResult>> {
    scans.par_iter().map(|s| fit_edge(&s.points)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_image() -> ImageGrid {
        let mut g = ImageGrid::new(10, 30, 2.0);
        for r in 0..30 {
            for c in 0..10 {
                g.counts[r * 10 + c] = if c >= 5 { 100 + r as u64 } else { 3 };
            }
        }
        g
    }

    #[test]
    fn single_profile_equals_row() {
        let g = step_image();
        let region = EdgeRegion {
            axis: ProfileAxis::Rows,
            rows: [7, 8],
            cols: [0, 10],
            count: 1,
        };
        let scans = extract_linescans(&g, &region).unwrap();
        assert_eq!(scans.len(), 1);
        let counts: Vec<u64> = scans[0].points.iter().map(|p| p.1 as u64).collect();
        assert_eq!(counts, g.row(7));
        assert_eq!(scans[0].points[0].0, 1.0);
    }

    #[test]
    fn twenty_profiles_of_equal_length() {
        let g = step_image();
        let region = EdgeRegion {
            axis: ProfileAxis::Rows,
            rows: [5, 25],
            cols: [1, 9],
            count: 20,
        };
        let scans = extract_linescans(&g, &region).unwrap();
        assert_eq!(scans.len(), 20);
        assert!(scans.iter().all(|s| s.points.len() == 8));
        let lines: Vec<usize> = scans.iter().map(|s| s.line).collect();
        assert_eq!(lines, (5..25).collect::<Vec<_>>());
    }

    #[test]
    fn column_profiles() {
        let g = step_image();
        let region = EdgeRegion {
            axis: ProfileAxis::Columns,
            rows: [0, 30],
            cols: [6, 8],
            count: 2,
        };
        let scans = extract_linescans(&g, &region).unwrap();
        assert_eq!(scans[1].line, 7);
        assert_eq!(scans[1].points.len(), 30);
        assert_eq!(scans[1].points[4].1, 104.0);
    }

    #[test]
    fn region_outside_image_rejected() {
        let g = step_image();
        let region = EdgeRegion {
            axis: ProfileAxis::Rows,
            rows: [25, 31],
            cols: [0, 10],
            count: 2,
        };
        assert!(extract_linescans(&g, &region).is_err());
        let too_many = EdgeRegion {
            rows: [0, 3],
            count: 4,
            ..region
        };
        assert!(extract_linescans(&g, &too_many).is_err());
    }
}
