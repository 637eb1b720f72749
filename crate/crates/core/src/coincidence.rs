//! Signal/idler cross-correlation, inter-arm delay estimation and
//! coincidence matching.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timetag::TagStream;

pub const DEFAULT_BIN_WIDTH_PS: i64 = 100;
pub const DEFAULT_WINDOW_PS: i64 = 1000;

/// Histogram of idler-minus-signal lags. Bin `k` covers
/// `[lag_min + k*bin_width, lag_min + (k+1)*bin_width)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrelationHistogram {
    pub bin_width: i64,
    pub lag_min: i64,
    pub lag_max: i64,
    pub counts: Vec<u64>,
}

impl CorrelationHistogram {
    pub fn new(bin_width: i64, lag_min: i64, lag_max: i64) -> Result<Self> {
        if bin_width <= 0 {
            return Err(Error::InvalidArgument("bin width must be positive".into()));
        }
        let span = lag_max
            .checked_sub(lag_min)
            .ok_or_else(|| Error::InvalidArgument("lag range overflows".into()))?;
        if span < bin_width {
            return Err(Error::InvalidArgument(format!(
                "lag range [{lag_min}, {lag_max}) spans less than one {bin_width} ps bin"
            )));
        }
        if span % bin_width != 0 {
            return Err(Error::InvalidArgument(format!(
                "lag range span {span} ps is not a multiple of the {bin_width} ps bin width"
            )));
        }
        Ok(CorrelationHistogram {
            bin_width,
            lag_min,
            lag_max,
            counts: vec![0; (span / bin_width) as usize],
        })
    }

    /// Left edge of bin `k`, the lag the bin is labelled with.
    pub fn bin_lag(&self, k: usize) -> i64 {
        self.lag_min + k as i64 * self.bin_width
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds another histogram over the same binning, e.g. from a disjoint
    /// chunk of the acquisition.
    pub fn merge(&mut self, other: &CorrelationHistogram) -> Result<()> {
        if (self.bin_width, self.lag_min, self.lag_max)
            != (other.bin_width, other.lag_min, other.lag_max)
        {
            return Err(Error::InvalidArgument("histogram binning differs".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "lag_ps,counts")?;
        for (k, c) in self.counts.iter().enumerate() {
            writeln!(out, "{},{}", self.bin_lag(k), c)?;
        }
        Ok(())
    }
}

/// Counts all (signal, idler) pairs by lag `idler.time - signal.time` within
/// `[lag_min, lag_max)`. Both streams must be time-ordered; the sweep keeps a
/// moving window into `idler`, so the cost is linear in the stream lengths
/// plus the number of in-range pairs.
pub fn cross_correlation_histogram(
    signal: &TagStream,
    idler: &TagStream,
    bin_width: i64,
    lag_min: i64,
    lag_max: i64,
) -> Result<CorrelationHistogram> {
    let mut hist = CorrelationHistogram::new(bin_width, lag_min, lag_max)?;
    let idler = &idler.tags;
    let mut lo = 0;
    for s in &signal.tags {
        let start = s.time + lag_min;
        let end = s.time + lag_max;
        while lo < idler.len() && idler[lo].time < start {
            lo += 1;
        }
        for i in &idler[lo..] {
            if i.time >= end {
                break;
            }
            let k = ((i.time - s.time - lag_min) / bin_width) as usize;
            hist.counts[k] += 1;
        }
    }
    Ok(hist)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayEstimate {
    /// Idler-minus-signal delay, ps.
    pub delay_ps: f64,
    /// Peak bin counts over the median of the remaining bins (median floored
    /// at one count).
    pub significance: f64,
    pub peak_bin: usize,
}

impl DelayEstimate {
    pub fn rounded_ps(&self) -> i64 {
        self.delay_ps.round() as i64
    }
}

/// Centroid of the tallest bin and its immediate neighbours.
pub fn estimate_delay(hist: &CorrelationHistogram) -> Result<DelayEstimate> {
    if hist.counts.is_empty() {
        return Err(Error::InvalidArgument("empty histogram".into()));
    }
    // first maximum on ties
    let (peak_bin, &peak) = hist
        .counts
        .iter()
        .enumerate()
        .rev()
        .max_by_key(|&(_, c)| c)
        .unwrap();
    if peak == 0 {
        return Err(Error::NoCorrelationPeak);
    }
    let lo = peak_bin.saturating_sub(1);
    let hi = (peak_bin + 1).min(hist.counts.len() - 1);
    let (mut weight, mut moment) = (0.0, 0.0);
    for k in lo..=hi {
        let c = hist.counts[k] as f64;
        weight += c;
        moment += c * hist.bin_lag(k) as f64;
    }

    let mut background: Vec<u64> = hist
        .counts
        .iter()
        .enumerate()
        .filter(|&(k, _)| k < lo || k > hi)
        .map(|(_, &c)| c)
        .collect();
    let median = median_u64(&mut background).unwrap_or(0.0);

    Ok(DelayEstimate {
        delay_ps: moment / weight,
        significance: peak as f64 / median.max(1.0),
        peak_bin,
    })
}

fn median_u64(values: &mut [u64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable();
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] + values[n / 2]) as f64 / 2.0
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CoincidenceSet {
    /// Original idler timestamps of the matched pairs, non-decreasing.
    pub times: Vec<i64>,
    pub delay_applied: i64,
    pub window: i64,
}

impl CoincidenceSet {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Greedy earliest-first one-to-one matching. Idler tags are taken in time
/// order, shifted by `-delay`, and each is paired with the earliest unused
/// signal tag within `±window/2` (inclusive). The coincidence keeps the
/// idler's original timestamp since that photon visited the sample.
pub fn match_coincidences(
    signal: &TagStream,
    idler: &TagStream,
    delay: i64,
    window: i64,
) -> Result<CoincidenceSet> {
    if window <= 0 {
        return Err(Error::InvalidArgument(
            "coincidence window must be positive".into(),
        ));
    }
    let signal = &signal.tags;
    let mut times = Vec::new();
    // Everything before `next` is either matched or too early for any later idler.
    let mut next = 0;
    for i in &idler.tags {
        let shifted = i.time - delay;
        while next < signal.len() && 2 * (shifted - signal[next].time) > window {
            next += 1;
        }
        if next < signal.len() && 2 * (signal[next].time - shifted) <= window {
            times.push(i.time);
            next += 1;
        }
    }
    Ok(CoincidenceSet {
        times,
        delay_applied: delay,
        window,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timetag::Channel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stream(times: impl IntoIterator<Item = i64>) -> TagStream {
        TagStream::from_times(Channel::SIGNAL, times)
    }

    fn random_stream(rng: &mut ChaCha8Rng, n: usize, span: i64) -> TagStream {
        let mut t: Vec<i64> = (0..n).map(|_| rng.random_range(0..span)).collect();
        t.sort_unstable();
        stream(t)
    }

    fn brute_histogram(s: &TagStream, i: &TagStream, w: i64, lo: i64, hi: i64) -> Vec<u64> {
        let mut counts = vec![0; ((hi - lo) / w) as usize];
        for a in s.times() {
            for b in i.times() {
                let lag = b - a;
                if lag >= lo && lag < hi {
                    counts[((lag - lo) / w) as usize] += 1;
                }
            }
        }
        counts
    }

    fn brute_match(s: &TagStream, i: &TagStream, delay: i64, window: i64) -> Vec<i64> {
        let mut used = vec![false; s.len()];
        let mut out = Vec::new();
        for b in i.times() {
            let shifted = b - delay;
            if let Some(k) =
                (0..s.len()).find(|&k| !used[k] && 2 * (s.tags[k].time - shifted).abs() <= window)
            {
                used[k] = true;
                out.push(b);
            }
        }
        out
    }

    #[test]
    fn self_correlation_peaks_at_zero_lag() {
        let s = stream((0..100).map(|k| 10_000 * k));
        let h = cross_correlation_histogram(&s, &s, 100, -1000, 1000).unwrap();
        assert_eq!(h.counts.len(), 20);
        assert_eq!(h.counts[10], 100);
        assert_eq!(h.bin_lag(10), 0);
        assert_eq!(h.total(), 100);
    }

    #[test]
    fn pure_shift_moves_peak() {
        let s = stream((0..100).map(|k| 100_000 * k));
        let i = stream(s.times().map(|t| t + 5000));
        let h = cross_correlation_histogram(&s, &i, 100, -10_000, 10_000).unwrap();
        let k = h.counts.iter().position(|&c| c == 100).unwrap();
        assert!(h.bin_lag(k) <= 5000 && 5000 < h.bin_lag(k) + 100);
        assert_eq!(h.total(), 100);
    }

    #[test]
    fn histogram_rejects_bad_range() {
        let s = stream([0]);
        assert!(cross_correlation_histogram(&s, &s, 100, -1000, 1050).is_err());
        assert!(cross_correlation_histogram(&s, &s, 100, 0, 50).is_err());
        assert!(cross_correlation_histogram(&s, &s, 0, 0, 100).is_err());
    }

    #[test]
    fn histogram_matches_all_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let s = random_stream(&mut rng, 500, 200_000);
            let i = random_stream(&mut rng, 500, 200_000);
            let h = cross_correlation_histogram(&s, &i, 100, -3000, 7000).unwrap();
            assert_eq!(h.counts, brute_histogram(&s, &i, 100, -3000, 7000));
        }
    }

    #[test]
    fn delay_of_single_zero_bin_is_zero() {
        let mut h = CorrelationHistogram::new(100, -1000, 1000).unwrap();
        h.counts[10] = 42;
        let d = estimate_delay(&h).unwrap();
        assert_eq!(d.delay_ps, 0.0);
        assert_eq!(d.significance, 42.0);
    }

    #[test]
    fn delay_centroid_uses_neighbours() {
        let mut h = CorrelationHistogram::new(100, 0, 1000).unwrap();
        h.counts[4] = 10;
        h.counts[5] = 30;
        h.counts[6] = 20;
        h.counts[0] = 2;
        let d = estimate_delay(&h).unwrap();
        assert!((d.delay_ps - (10.0 * 400.0 + 30.0 * 500.0 + 20.0 * 600.0) / 60.0).abs() < 1e-9);
        assert_eq!(d.peak_bin, 5);
    }

    #[test]
    fn flat_zero_histogram_has_no_peak() {
        let h = CorrelationHistogram::new(100, -1000, 1000).unwrap();
        assert!(matches!(estimate_delay(&h), Err(Error::NoCorrelationPeak)));
    }

    #[test]
    fn exact_shift_recovered_within_half_bin() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = random_stream(&mut rng, 2000, 2_000_000_000);
        let i = stream(s.times().map(|t| t + 5000));
        let h = cross_correlation_histogram(&s, &i, 100, -10_000, 10_000).unwrap();
        let d = estimate_delay(&h).unwrap();
        assert!((d.delay_ps - 5000.0).abs() <= 50.0, "{}", d.delay_ps);
    }

    #[test]
    fn empty_idler_gives_empty_set() {
        let s = stream([1, 2, 3]);
        let m = match_coincidences(&s, &TagStream::empty(), 0, 1000).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn perfect_pairing_matches_everything() {
        let s = stream((0..1000).map(|k| 37_000 * k));
        let i = stream(s.times().map(|t| t + 5000));
        let m = match_coincidences(&s, &i, 5000, 1000).unwrap();
        assert_eq!(m.len(), 1000);
        assert_eq!(m.times, i.times().collect::<Vec<_>>());
    }

    #[test]
    fn window_edges_are_inclusive() {
        let s = stream([1000]);
        assert_eq!(
            match_coincidences(&s, &stream([1500]), 0, 1000)
                .unwrap()
                .len(),
            1
        );
        assert_eq!(
            match_coincidences(&s, &stream([500]), 0, 1000)
                .unwrap()
                .len(),
            1
        );
        assert_eq!(
            match_coincidences(&s, &stream([1501]), 0, 1000)
                .unwrap()
                .len(),
            0
        );
    }

    #[test]
    fn each_signal_used_once() {
        let s = stream([1000]);
        let i = stream([1000, 1001]);
        assert_eq!(
            match_coincidences(&s, &i, 0, 1000).unwrap().times,
            vec![1000]
        );
    }

    #[test]
    fn greedy_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let s = random_stream(&mut rng, 1000, 1_000_000);
            let i = random_stream(&mut rng, 1000, 1_000_000);
            let delay = rng.random_range(-2000..2000);
            let m = match_coincidences(&s, &i, delay, 1000).unwrap();
            assert_eq!(m.times, brute_match(&s, &i, delay, 1000));
        }
    }
}
