//! Synthetic photon-pair and line-trigger streams for closed-loop tests.
//!
//! Pairs are emitted by a homogeneous Poisson process. The signal photon is
//! detected with `signal_efficiency`; the idler visits the sample at the
//! current beam position and survives with `idler_path_efficiency` times the
//! (blurred) reflectance there. Detector dark counts are independent Poisson
//! processes. Outside valid scan segments the beam sees reflectance 0.

mod sample;

pub use sample::{make_grating, SamplePattern};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scan::{build_timeline, Directions, ExpectedImage, ScanConfig, ScanTimeline};
use crate::timetag::{Channel, TagStream};

const PS_PER_S: f64 = 1e12;
const REFLECTANCE_SUBSAMPLES: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceModel {
    pub pair_rate_hz: f64,
    pub signal_efficiency: f64,
    pub idler_path_efficiency: f64,
    pub signal_dark_rate_hz: f64,
    pub idler_dark_rate_hz: f64,
    /// Idler arrives this much later than its signal partner.
    pub inter_arm_delay_ps: i64,
    pub jitter_sigma_ps: f64,
    pub rng_seed: u64,
}

impl Default for SourceModel {
    fn default() -> Self {
        SourceModel {
            pair_rate_hz: 1e5,
            signal_efficiency: 0.1,
            idler_path_efficiency: 0.1,
            signal_dark_rate_hz: 1e3,
            idler_dark_rate_hz: 1e3,
            inter_arm_delay_ps: 5000,
            jitter_sigma_ps: 50.0,
            rng_seed: 0,
        }
    }
}

impl SourceModel {
    pub fn validate(&self) -> Result<()> {
        let rates = [
            self.pair_rate_hz,
            self.signal_dark_rate_hz,
            self.idler_dark_rate_hz,
        ];
        if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::InvalidArgument(
                "source: rates must be finite and >= 0".into(),
            ));
        }
        for p in [self.signal_efficiency, self.idler_path_efficiency] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(
                    "source: efficiencies must lie in [0, 1]".into(),
                ));
            }
        }
        if !(self.jitter_sigma_ps.is_finite() && self.jitter_sigma_ps >= 0.0) {
            return Err(Error::InvalidArgument("source: jitter must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub signal: TagStream,
    pub idler: TagStream,
    pub triggers: TagStream,
    /// Noise-free expected coincidence image (accidentals excluded).
    pub ground_truth: ExpectedImage,
    pub timeline: Option<ScanTimeline>,
    pub pairs_emitted: u64,
}

impl Simulation {
    pub fn trigger_times(&self) -> Vec<i64> {
        self.triggers.times().collect()
    }
}

/// Runs the source and scanner for `duration_s` seconds. The first line
/// trigger fires one turnaround time after the start, once the mirror is
/// at plateau speed.
pub fn simulate(
    sample: &SamplePattern,
    source: &SourceModel,
    config: &ScanConfig,
    duration_s: f64,
) -> Result<Simulation> {
    config.validate()?;
    source.validate()?;
    if !(duration_s.is_finite() && duration_s >= 0.0) {
        return Err(Error::InvalidArgument("duration must be >= 0".into()));
    }
    let duration = (duration_s * PS_PER_S).round() as i64;
    let trigger_times = config.trigger_times(config.turnaround_ps(), duration);
    let timeline = if trigger_times.is_empty() {
        None
    } else {
        Some(build_timeline(&trigger_times, config)?)
    };
    let optics = sample.blurred();

    let mut pair_rng = ChaCha8Rng::seed_from_u64(source.rng_seed);
    pair_rng.set_stream(0);
    let mut signal_times = Vec::new();
    let mut idler_times = Vec::new();
    let mut pairs_emitted = 0u64;

    if let (Some(tl), true) = (&timeline, source.pair_rate_hz > 0.0) {
        let gap = Exp::new(source.pair_rate_hz / PS_PER_S).unwrap();
        let jitter = Normal::new(0.0, source.jitter_sigma_ps).unwrap();
        let segments = tl.segments();
        let pitch_y = config.pixel_pitch_y_um();
        let fov_x = config.field_of_view_x_um;
        let pass = config.pass_ps() as f64;
        let mut seg = 0;
        let mut t = gap.sample(&mut pair_rng);
        while t < duration as f64 {
            pairs_emitted += 1;
            let ti = t.round() as i64;
            while seg < segments.len() && segments[seg].span.end <= ti {
                seg += 1;
            }
            let reflectance = match segments.get(seg) {
                Some(s) if s.span.start <= ti => {
                    let frac = (t - s.span.start as f64) / pass;
                    let x = if s.reverse {
                        (1.0 - frac) * fov_x
                    } else {
                        frac * fov_x
                    };
                    optics.at(x, (s.row as f64 + 0.5) * pitch_y)
                }
                _ => 0.0,
            };
            if pair_rng.random::<f64>() < source.signal_efficiency {
                signal_times.push(ti);
            }
            if pair_rng.random::<f64>() < source.idler_path_efficiency * reflectance {
                let ti =
                    (t + source.inter_arm_delay_ps as f64 + jitter.sample(&mut pair_rng)).round();
                if ti >= 0.0 {
                    idler_times.push(ti as i64);
                }
            }
            t += gap.sample(&mut pair_rng);
        }
    }

    poisson_times(
        source.signal_dark_rate_hz,
        duration,
        source.rng_seed,
        1,
        &mut signal_times,
    );
    poisson_times(
        source.idler_dark_rate_hz,
        duration,
        source.rng_seed,
        2,
        &mut idler_times,
    );
    signal_times.sort_unstable();
    idler_times.sort_unstable();

    let ground_truth = expected_image(&optics, source, config, timeline.as_ref(), duration);
    Ok(Simulation {
        signal: TagStream::from_times(Channel::SIGNAL, signal_times),
        idler: TagStream::from_times(Channel::IDLER, idler_times),
        triggers: TagStream::from_times(Channel::TRIGGER, trigger_times),
        ground_truth,
        timeline,
        pairs_emitted,
    })
}

fn poisson_times(rate_hz: f64, duration: i64, seed: u64, stream: u64, out: &mut Vec<i64>) {
    if rate_hz <= 0.0 || duration <= 0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let gap = Exp::new(rate_hz / PS_PER_S).unwrap();
    let mut t = gap.sample(&mut rng);
    while t < duration as f64 {
        out.push(t.round() as i64);
        t += gap.sample(&mut rng);
    }
}

/// Expected true-coincidence counts per pixel: pair rate times both
/// detection efficiencies times beam exposure times the mean reflectance the
/// beam crosses in that pixel.
fn expected_image(
    optics: &SamplePattern,
    source: &SourceModel,
    config: &ScanConfig,
    timeline: Option<&ScanTimeline>,
    duration: i64,
) -> ExpectedImage {
    let (w, h) = (config.pixels_x as usize, config.pixels_y as usize);
    let pitch_x = config.pixel_pitch_x_um();
    let pitch_y = config.pixel_pitch_y_um();
    let mut image = ExpectedImage {
        width: w,
        height: h,
        values: vec![0.0; w * h],
        frames: timeline.map_or(0, |t| t.frames.len() as u64),
        pixel_pitch_um: pitch_x,
    };
    let Some(timeline) = timeline else {
        return image;
    };

    let dwell = config.dwell_ps();
    let mut full_passes = vec![0u64; h];
    let mut partial = vec![0i64; w * h];
    for seg in timeline.segments() {
        let wanted = match config.directions {
            Directions::Both => true,
            Directions::ForwardOnly => !seg.reverse,
            Directions::ReverseOnly => seg.reverse,
        };
        if !wanted || seg.span.start >= duration {
            continue;
        }
        let row = seg.row as usize;
        if seg.span.end <= duration {
            full_passes[row] += 1;
            continue;
        }
        for k in 0..w {
            let start = seg.span.start + k as i64 * dwell;
            let exposed = (duration.min(start + dwell) - start).max(0);
            let col = if seg.reverse { w - 1 - k } else { k };
            partial[row * w + col] += exposed;
        }
    }

    let rate =
        source.pair_rate_hz / PS_PER_S * source.signal_efficiency * source.idler_path_efficiency;
    for r in 0..h {
        let y = (r as f64 + 0.5) * pitch_y;
        for c in 0..w {
            let mean_r = (0..REFLECTANCE_SUBSAMPLES)
                .map(|s| {
                    optics.at(
                        (c as f64 + (s as f64 + 0.5) / REFLECTANCE_SUBSAMPLES as f64) * pitch_x,
                        y,
                    )
                })
                .sum::<f64>()
                / REFLECTANCE_SUBSAMPLES as f64;
            let exposure = full_passes[r] as f64 * dwell as f64 + partial[r * w + c] as f64;
            image.values[r * w + c] = rate * exposure * mean_r;
        }
    }
    image
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coincidence::match_coincidences;

    fn uniform(size: f64) -> SamplePattern {
        SamplePattern::new(1, 1, vec![1.0], size, size).unwrap()
    }

    fn tiny_scan() -> ScanConfig {
        ScanConfig {
            pixels_x: 16,
            pixels_y: 8,
            turnaround_time_us: 40.0,
            ..ScanConfig::default()
        }
    }

    #[test]
    fn zero_duration_is_empty() {
        let s = simulate(&uniform(100.0), &SourceModel::default(), &tiny_scan(), 0.0).unwrap();
        assert!(s.signal.is_empty() && s.idler.is_empty() && s.triggers.is_empty());
        assert!(s.ground_truth.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn seeded_runs_are_identical() {
        let src = SourceModel {
            rng_seed: 42,
            ..SourceModel::default()
        };
        let a = simulate(&uniform(100.0), &src, &tiny_scan(), 0.05).unwrap();
        let b = simulate(&uniform(100.0), &src, &tiny_scan(), 0.05).unwrap();
        assert_eq!(a.signal, b.signal);
        assert_eq!(a.idler, b.idler);
        assert_eq!(a.triggers, b.triggers);
        let c = simulate(
            &uniform(100.0),
            &SourceModel {
                rng_seed: 43,
                ..src
            },
            &tiny_scan(),
            0.05,
        )
        .unwrap();
        assert_ne!(a.signal, c.signal);
    }

    #[test]
    fn ideal_source_counts_match_poisson_mean() {
        // Reflectance 1 everywhere the beam can be is only true inside
        // segments, so check the signal arm, which never sees the sample.
        let rate = 2e5;
        let duration = 0.5;
        let src = SourceModel {
            pair_rate_hz: rate,
            signal_efficiency: 1.0,
            idler_path_efficiency: 1.0,
            signal_dark_rate_hz: 0.0,
            idler_dark_rate_hz: 0.0,
            jitter_sigma_ps: 0.0,
            ..SourceModel::default()
        };
        let s = simulate(&uniform(100.0), &src, &tiny_scan(), duration).unwrap();
        let mean = rate * duration;
        assert!((s.signal.len() as f64 - mean).abs() < 5.0 * mean.sqrt());
        let m = match_coincidences(&s.signal, &s.idler, src.inter_arm_delay_ps, 1000).unwrap();
        assert!(m.len() as f64 >= 0.99 * s.idler.len() as f64);
        assert!(
            s.signal.validate().is_ok()
                && s.idler.validate().is_ok()
                && s.triggers.validate().is_ok()
        );
    }

    #[test]
    fn idler_only_emitted_inside_segments_without_darks() {
        let src = SourceModel {
            idler_dark_rate_hz: 0.0,
            jitter_sigma_ps: 0.0,
            inter_arm_delay_ps: 0,
            idler_path_efficiency: 1.0,
            ..SourceModel::default()
        };
        let s = simulate(&uniform(100.0), &src, &tiny_scan(), 0.05).unwrap();
        let tl = s.timeline.as_ref().unwrap();
        assert!(!s.idler.is_empty());
        assert!(s.idler.times().all(|t| tl.locate(t).is_some()));
    }

    #[test]
    fn ground_truth_scales_with_exposure() {
        let src = SourceModel::default();
        let c = tiny_scan();
        let s = simulate(
            &uniform(100.0),
            &src,
            &c,
            3.0 * c.frame_period_ps() as f64 / 1e12,
        )
        .unwrap();
        let expected_px = src.pair_rate_hz * 1e-5 * 0.01 * 2.0 * 3.0;
        let v = s.ground_truth.values[0];
        assert!(
            (v - expected_px).abs() / expected_px < 1e-9,
            "{v} vs {expected_px}"
        );
    }
}
