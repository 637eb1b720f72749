use std::io::BufRead;

use serde::Serialize;

use crate::error::{Error, Result};

/// Ground-truth reflectance map covering `size_x_um` x `size_y_um`, stored
/// row-major with row 0 at y = 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplePattern {
    pub width: usize,
    pub height: usize,
    pub reflectance: Vec<f64>,
    pub size_x_um: f64,
    pub size_y_um: f64,
    /// Gaussian optical blur applied before sampling.
    pub blur_sigma_um: Option<f64>,
}

impl SamplePattern {
    pub fn new(
        width: usize,
        height: usize,
        reflectance: Vec<f64>,
        size_x_um: f64,
        size_y_um: f64,
    ) -> Result<Self> {
        if width == 0 || height == 0 || reflectance.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "reflectance map of {} values does not fit {width}x{height}",
                reflectance.len()
            )));
        }
        if let Some(bad) = reflectance.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::InvalidArgument(format!(
                "reflectance {bad} outside [0, 1]"
            )));
        }
        if !(size_x_um > 0.0 && size_y_um > 0.0) {
            return Err(Error::InvalidArgument(
                "sample size must be positive".into(),
            ));
        }
        Ok(SamplePattern {
            width,
            height,
            reflectance,
            size_x_um,
            size_y_um,
            blur_sigma_um: None,
        })
    }

    pub fn with_blur(mut self, sigma_um: f64) -> Self {
        self.blur_sigma_um = (sigma_um > 0.0).then_some(sigma_um);
        self
    }

    /// Loads a reflectance map from comma-separated rows of values in [0, 1].
    pub fn read_csv<R: BufRead>(input: R, size_x_um: f64, size_y_um: f64) -> Result<Self> {
        let mut values = Vec::new();
        let mut width = None;
        let mut height = 0;
        for line in input.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Format(format!("bad reflectance row {}", height)))?;
            if *width.get_or_insert(row.len()) != row.len() {
                return Err(Error::Format(format!(
                    "reflectance row {height} has wrong length"
                )));
            }
            values.extend(row);
            height += 1;
        }
        SamplePattern::new(width.unwrap_or(0), height, values, size_x_um, size_y_um)
    }

    pub fn cell_x_um(&self) -> f64 {
        self.size_x_um / self.width as f64
    }

    pub fn cell_y_um(&self) -> f64 {
        self.size_y_um / self.height as f64
    }

    pub fn fraction_above(&self, level: f64) -> f64 {
        self.reflectance.iter().filter(|&&r| r > level).count() as f64
            / self.reflectance.len() as f64
    }

    /// Nearest-cell reflectance at a physical position; zero off the map.
    pub fn at(&self, x_um: f64, y_um: f64) -> f64 {
        if !(x_um >= 0.0 && y_um >= 0.0 && x_um < self.size_x_um && y_um < self.size_y_um) {
            return 0.0;
        }
        let c = ((x_um / self.cell_x_um()) as usize).min(self.width - 1);
        let r = ((y_um / self.cell_y_um()) as usize).min(self.height - 1);
        self.reflectance[r * self.width + c]
    }

    /// The map as the optics see it: Gaussian-blurred with `blur_sigma_um`
    /// (edge cells replicated at the borders). Without blur, a clone.
    pub fn blurred(&self) -> SamplePattern {
        let Some(sigma) = self.blur_sigma_um else {
            return self.clone();
        };
        let kx = gaussian_kernel(sigma / self.cell_x_um());
        let ky = gaussian_kernel(sigma / self.cell_y_um());
        let (w, h) = (self.width, self.height);
        let clampi = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;

        let mut tmp = vec![0.0; w * h];
        let rx = (kx.len() / 2) as isize;
        for r in 0..h {
            let row = &self.reflectance[r * w..(r + 1) * w];
            for c in 0..w {
                tmp[r * w + c] = kx
                    .iter()
                    .enumerate()
                    .map(|(k, wk)| wk * row[clampi(c as isize + k as isize - rx, w)])
                    .sum();
            }
        }
        let mut out = vec![0.0; w * h];
        let ry = (ky.len() / 2) as isize;
        for r in 0..h {
            for c in 0..w {
                let v: f64 = ky
                    .iter()
                    .enumerate()
                    .map(|(k, wk)| wk * tmp[clampi(r as isize + k as isize - ry, h) * w + c])
                    .sum();
                out[r * w + c] = v.clamp(0.0, 1.0);
            }
        }
        SamplePattern {
            reflectance: out,
            blur_sigma_um: None,
            ..self.clone()
        }
    }
}

fn gaussian_kernel(sigma_cells: f64) -> Vec<f64> {
    let radius = (4.0 * sigma_cells).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i as f64).powi(2) / (2.0 * sigma_cells * sigma_cells)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Periodic grating of reflective squares (reflectance 1) separated by
/// non-reflective gaps, starting with a square at the origin.
pub fn make_grating(
    square_um: f64,
    gap_um: f64,
    field_um: f64,
    resolution: usize,
) -> Result<SamplePattern> {
    if resolution == 0 {
        return Err(Error::InvalidArgument(
            "grating resolution must be positive".into(),
        ));
    }
    if !(square_um > 0.0 && gap_um >= 0.0 && field_um > 0.0) {
        return Err(Error::InvalidArgument(
            "grating dimensions must be positive".into(),
        ));
    }
    let period = square_um + gap_um;
    let cell = field_um / resolution as f64;
    let on: Vec<bool> = (0..resolution)
        .map(|i| ((i as f64 + 0.5) * cell).rem_euclid(period) < square_um)
        .collect();
    let mut reflectance = Vec::with_capacity(resolution * resolution);
    for &row_on in &on {
        reflectance.extend(
            on.iter()
                .map(|&col_on| if row_on && col_on { 1.0 } else { 0.0 }),
        );
    }
    SamplePattern::new(resolution, resolution, reflectance, field_um, field_um)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grating_has_30_um_period() {
        let g = make_grating(20.0, 10.0, 100.0, 400).unwrap();
        let row: Vec<f64> = (0..400).map(|c| g.reflectance[40 * 400 + c]).collect();
        // cells are 0.25 um: squares at [0,20), [30,50), [60,80), [90,100)
        assert_eq!(row[0], 1.0);
        assert_eq!(row[79], 1.0);
        assert_eq!(row[80], 0.0);
        assert_eq!(row[119], 0.0);
        assert_eq!(row[120], 1.0);
        let rises = row
            .windows(2)
            .filter(|w| w[0] == 0.0 && w[1] == 1.0)
            .count();
        assert!(rises + 1 >= 3);
    }

    #[test]
    fn square_filling_field_is_all_ones() {
        let g = make_grating(50.0, 0.0, 50.0, 64).unwrap();
        assert!(g.reflectance.iter().all(|&r| r == 1.0));
    }

    #[test]
    fn large_field_area_fraction() {
        let g = make_grating(20.0, 10.0, 3000.0, 3000).unwrap();
        let frac = g.reflectance.iter().sum::<f64>() / g.reflectance.len() as f64;
        let expected = (20.0f64 / 30.0).powi(2);
        assert!((frac - expected).abs() / expected < 0.05, "{frac}");
    }

    #[test]
    fn zero_resolution_rejected() {
        assert!(make_grating(20.0, 10.0, 100.0, 0).is_err());
    }

    #[test]
    fn blur_preserves_mean_away_from_edges_and_range() {
        let g = make_grating(20.0, 10.0, 300.0, 600).unwrap().with_blur(2.0);
        let b = g.blurred();
        assert!(b.reflectance.iter().all(|r| (0.0..=1.0).contains(r)));
        // square centres stay bright, gap centres dark
        assert!(b.at(10.0, 10.0) > 0.99);
        assert!(b.at(25.0, 10.0) < 0.02);
        // at the edge itself the blurred step reads one half
        assert!((b.at(20.0, 10.0) - 0.5).abs() < 0.07);
    }

    #[test]
    fn csv_map_validates_range() {
        let ok = SamplePattern::read_csv("0,0.5\n1,0.25\n".as_bytes(), 10.0, 10.0).unwrap();
        assert_eq!((ok.width, ok.height), (2, 2));
        assert!(SamplePattern::read_csv("0,1.5\n".as_bytes(), 1.0, 1.0).is_err());
        assert!(SamplePattern::read_csv("0,1\n1\n".as_bytes(), 1.0, 1.0).is_err());
    }
}
