use serde::Serialize;

use crate::error::{Error, Result};
use crate::scan::ImageGrid;

/// Complementary bright/dark pixel masks, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MaskPair {
    pub width: usize,
    pub height: usize,
    pub bright: Vec<bool>,
    pub dark: Vec<bool>,
}

impl MaskPair {
    pub fn bright_count(&self) -> usize {
        self.bright.iter().filter(|&&b| b).count()
    }

    pub fn dark_count(&self) -> usize {
        self.dark.iter().filter(|&&b| b).count()
    }
}

/// Bright = pixels strictly above the image mean, dark = the rest.
pub fn threshold_mask(reference: &ImageGrid) -> MaskPair {
    threshold_mask_values(&reference.values(), reference.width, reference.height)
}

pub fn threshold_mask_values(values: &[f64], width: usize, height: usize) -> MaskPair {
    let mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
    let bright: Vec<bool> = values.iter().map(|&v| v > mean).collect();
    let dark = bright.iter().map(|b| !b).collect();
    MaskPair {
        width,
        height,
        bright,
        dark,
    }
}

/// Contrast-to-noise of an image between two regions:
/// `|mean_bright − mean_dark| / sqrt(var_bright + var_dark)` with population
/// variances over the pixels of each region.
pub fn snr(image: &ImageGrid, masks: &MaskPair) -> Result<f64> {
    snr_values(&image.values(), image.width, image.height, masks)
}

pub fn snr_values(values: &[f64], width: usize, height: usize, masks: &MaskPair) -> Result<f64> {
    if (masks.height, masks.width) != (height, width) {
        return Err(Error::DimensionMismatch {
            expected: (height, width),
            got: (masks.height, masks.width),
        });
    }
    let (mb, vb) = region_stats(values, &masks.bright).ok_or(Error::EmptyRegion("bright"))?;
    let (md, vd) = region_stats(values, &masks.dark).ok_or(Error::EmptyRegion("dark"))?;
    let num = (mb - md).abs();
    let den = (vb + vd).sqrt();
    Ok(if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    })
}

fn region_stats(values: &[f64], mask: &[bool]) -> Option<(f64, f64)> {
    let (mut n, mut sum) = (0usize, 0.0);
    for (v, _) in values.iter().zip(mask).filter(|(_, &m)| m) {
        n += 1;
        sum += v;
    }
    if n == 0 {
        return None;
    }
    let mean = sum / n as f64;
    let var = values
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(v, _)| (v - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    Some((mean, var))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SqrtFitResult {
    /// SNR per square-root frame.
    pub a: f64,
    pub r_squared: f64,
    /// The data have no spread (a single point, or all values equal), so
    /// R² carries no information.
    pub degenerate: bool,
}

/// Least-squares fit of `y = A·sqrt(x)` to `(frames, snr)` points.
pub fn fit_sqrt_scaling(points: &[(u64, f64)]) -> Result<SqrtFitResult> {
    if points.is_empty() {
        return Err(Error::Degenerate("no SNR points to fit".into()));
    }
    if points.iter().any(|&(x, _)| x == 0) {
        return Err(Error::InvalidArgument("frame counts must be >= 1".into()));
    }
    if points.iter().all(|&(_, y)| y == 0.0) {
        return Err(Error::Degenerate("all SNR values are zero".into()));
    }
    let sum_x: f64 = points.iter().map(|&(x, _)| x as f64).sum();
    let sum_xy: f64 = points.iter().map(|&(x, y)| y * (x as f64).sqrt()).sum();
    let a = sum_xy / sum_x;

    let n = points.len() as f64;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let ss_res: f64 = points
        .iter()
        .map(|&(x, y)| (y - a * (x as f64).sqrt()).powi(2))
        .sum();
    let ss_tot: f64 = points.iter().map(|&(_, y)| (y - mean_y).powi(2)).sum();
    let degenerate = ss_tot == 0.0;
    let r_squared = if degenerate {
        if ss_res <= f64::EPSILON * mean_y * mean_y * n {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(SqrtFitResult {
        a,
        r_squared,
        degenerate,
    })
}

/// SNR of the cumulative sum of the first k frames, for k = 1..=frames.len().
pub fn snr_curve(frames: &[ImageGrid], masks: &MaskPair) -> Result<Vec<(u64, f64)>> {
    let Some(first) = frames.first() else {
        return Ok(Vec::new());
    };
    let mut acc = vec![0.0; first.counts.len()];
    let mut out = Vec::with_capacity(frames.len());
    for (k, f) in frames.iter().enumerate() {
        if f.dims() != first.dims() {
            return Err(Error::DimensionMismatch {
                expected: first.dims(),
                got: f.dims(),
            });
        }
        for (a, &c) in acc.iter_mut().zip(&f.counts) {
            *a += c as f64;
        }
        out.push((
            k as u64 + 1,
            snr_values(&acc, first.width, first.height, masks)?,
        ));
    }
    Ok(out)
}

/// Pearson correlation coefficient; `None` if either input is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, Poisson};

    fn grid(w: usize, h: usize, counts: Vec<u64>) -> ImageGrid {
        let mut g = ImageGrid::new(w, h, 1.0);
        g.counts = counts;
        g
    }

    fn half_masks(n: usize) -> MaskPair {
        let bright: Vec<bool> = (0..n).map(|k| k < n / 2).collect();
        MaskPair {
            width: n,
            height: 1,
            dark: bright.iter().map(|b| !b).collect(),
            bright,
        }
    }

    #[test]
    fn uniform_image_is_all_dark() {
        let m = threshold_mask(&grid(3, 3, vec![7; 9]));
        assert_eq!(m.bright_count(), 0);
        assert_eq!(m.dark_count(), 9);
    }

    #[test]
    fn two_level_image_masks_are_level_sets() {
        let counts: Vec<u64> = (0..10).map(|k| if k % 2 == 0 { 100 } else { 0 }).collect();
        let m = threshold_mask(&grid(10, 1, counts.clone()));
        for (k, c) in counts.iter().enumerate() {
            assert_eq!(m.bright[k], *c == 100);
            assert_eq!(m.dark[k], *c == 0);
        }
    }

    #[test]
    fn equal_constant_regions_give_zero() {
        let g = grid(4, 1, vec![5; 4]);
        assert_eq!(snr(&g, &half_masks(4)).unwrap(), 0.0);
    }

    #[test]
    fn empty_region_is_an_error() {
        let g = grid(4, 1, vec![5; 4]);
        let m = threshold_mask(&g);
        assert!(matches!(snr(&g, &m), Err(Error::EmptyRegion("bright"))));
    }

    #[test]
    fn poisson_contrast_of_100_gives_about_10() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pois = Poisson::new(100.0).unwrap();
        let n = 2000;
        let counts: Vec<u64> = (0..n)
            .map(|k| {
                if k < n / 2 {
                    pois.sample(&mut rng) as u64
                } else {
                    0
                }
            })
            .collect();
        let s = snr(&grid(n, 1, counts), &half_masks(n)).unwrap();
        assert!((s - 10.0).abs() < 1.0, "{s}");
    }

    #[test]
    fn constant_shift_and_scaling_leave_snr_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(81);
        let pois = Poisson::new(20.0).unwrap();
        let n = 200;
        let values: Vec<f64> = (0..n)
            .map(|k| pois.sample(&mut rng) + if k < n / 2 { 30.0 } else { 0.0 })
            .collect();
        let m = half_masks(n);
        let base = snr_values(&values, n, 1, &m).unwrap();
        let shifted: Vec<f64> = values.iter().map(|v| v + 17.0).collect();
        let scaled: Vec<f64> = values.iter().map(|v| v * 3.5).collect();
        assert!((snr_values(&shifted, n, 1, &m).unwrap() - base).abs() < 1e-12 * base);
        assert!((snr_values(&scaled, n, 1, &m).unwrap() - base).abs() < 1e-12 * base);
    }

    #[test]
    fn sqrt_fit_exact_data() {
        let f = fit_sqrt_scaling(&[(1, 2.0), (4, 4.0), (9, 6.0)]).unwrap();
        assert!((f.a - 2.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(!f.degenerate);
    }

    #[test]
    fn sqrt_fit_single_point() {
        let f = fit_sqrt_scaling(&[(4, 3.0)]).unwrap();
        assert_eq!(f.a, 1.5);
        assert_eq!(f.r_squared, 1.0);
        assert!(f.degenerate);
    }

    #[test]
    fn sqrt_fit_noisy_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let pts: Vec<(u64, f64)> = (1..=100)
            .map(|x| (x, 2.0 * (x as f64).sqrt() + noise.sample(&mut rng)))
            .collect();
        let f = fit_sqrt_scaling(&pts).unwrap();
        assert!((f.a - 2.0).abs() < 0.1);
        assert!(f.r_squared > 0.95);
    }

    #[test]
    fn sqrt_fit_rejects_zero_data_and_zero_frames() {
        assert!(matches!(
            fit_sqrt_scaling(&[(1, 0.0), (2, 0.0)]),
            Err(Error::Degenerate(_))
        ));
        assert!(fit_sqrt_scaling(&[(0, 1.0), (2, 1.0)]).is_err());
        assert!(fit_sqrt_scaling(&[]).is_err());
    }

    #[test]
    fn snr_curve_uses_cumulative_sums() {
        let a = grid(2, 1, vec![4, 0]);
        let b = grid(2, 1, vec![0, 4]);
        let mut m = half_masks(2);
        m.width = 2;
        let curve = snr_curve(&[a, b], &m).unwrap();
        assert_eq!(curve[0], (1, f64::INFINITY));
        assert_eq!(curve[1], (2, 0.0));
    }

    #[test]
    fn pearson_basics() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!(pearson(&[1.0, 1.0], &[1.0, 2.0]).is_none());
    }
}
