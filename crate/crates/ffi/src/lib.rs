//! C ABI over `qscope`.
//!
//! Objects are opaque heap handles released with the matching `*_free`.
//! Every fallible call returns a [`QscopeStatus`]; on failure the message is
//! available from [`qscope_last_error`] on the same thread until the next
//! failing call. Outputs are written only on success.
//!
//! # Safety
//!
//! Handle arguments must be NULL or a live pointer returned by this library.
//! Array arguments must point to at least the stated number of elements and
//! paths must be NUL-terminated. NULL is reported as
//! `QSCOPE_STATUS_NULL_POINTER`; other contract violations are undefined
//! behaviour.
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use qscope::analysis::{self, threshold_mask};
use qscope::coincidence::{self, CorrelationHistogram};
use qscope::scan::{self, Directions, ImageGrid, ScanConfig};
use qscope::simulator::{self, SourceModel};
use qscope::timetag::{self, Channel, TagStream, TimeTag};
use qscope::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QscopeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Format = 3,
    Io = 4,
    Timeline = 5,
    Numerical = 6,
    Panic = 7,
}

impl From<&Error> for QscopeStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::Config(_) | Error::ResolutionMismatch { .. } => {
                QscopeStatus::InvalidArgument
            }
            Error::Format(_) | Error::DimensionMismatch { .. } => QscopeStatus::Format,
            Error::Io { .. } | Error::Stream(_) => QscopeStatus::Io,
            Error::Timeline(_) | Error::OverlappingSegments { .. } => QscopeStatus::Timeline,
            Error::NoCorrelationPeak
            | Error::EmptyRegion(_)
            | Error::Degenerate(_)
            | Error::FitDidNotConverge { .. } => QscopeStatus::Numerical,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn qscope_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

struct Fail(QscopeStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(QscopeStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(QscopeStatus::NullPointer, format!("{what} is NULL"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> QscopeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QscopeStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            QscopeStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn path_arg(p: *const c_char) -> Result<String, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Fail(QscopeStatus::InvalidArgument, "path is not UTF-8".into()))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Boxes `value` into `*out`; checks `out` first so nothing leaks.
unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    out.write(boxed(value));
    Ok(())
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

// ---------------------------------------------------------------------------
// Streams

/// Time-ordered tag list; times in picoseconds.
pub struct QscopeStream(TagStream);

/// Builds a stream from parallel arrays. Tags must be time-ordered.
#[no_mangle]
pub unsafe extern "C" fn qscope_stream_from_tags(
    channels: *const u16,
    times_ps: *const i64,
    len: usize,
    resolution_ps: u64,
    out: *mut *mut QscopeStream,
) -> QscopeStatus {
    guard(|| {
        let ch = slice_arg(channels, len, "channels")?;
        let t = slice_arg(times_ps, len, "times_ps")?;
        let tags = ch
            .iter()
            .zip(t)
            .map(|(&c, &t)| TimeTag::new(Channel(c), t))
            .collect();
        let stream = TagStream::new(tags, resolution_ps)?;
        if !stream.validate().is_ok() {
            return Err(Fail(
                QscopeStatus::InvalidArgument,
                "tags are not a valid stream".into(),
            ));
        }
        put(out, QscopeStream(stream))
    })
}

#[no_mangle]
pub unsafe extern "C" fn qscope_stream_read(
    path: *const c_char,
    out: *mut *mut QscopeStream,
) -> QscopeStatus {
    guard(|| {
        let s = timetag::read_stream_file(path_arg(path)?)?;
        put(out, QscopeStream(s))
    })
}

#[no_mangle]
pub unsafe extern "C" fn qscope_stream_write(
    stream: *const QscopeStream,
    path: *const c_char,
) -> QscopeStatus {
    guard(|| {
        let s = deref(stream, "stream")?;
        timetag::write_stream_file(&s.0, path_arg(path)?)?;
        Ok(())
    })
}

/// Number of tags; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn qscope_stream_len(stream: *const QscopeStream) -> usize {
    stream.as_ref().map_or(0, |s| s.0.len())
}

#[no_mangle]
pub unsafe extern "C" fn qscope_stream_resolution_ps(stream: *const QscopeStream) -> u64 {
    stream.as_ref().map_or(0, |s| s.0.resolution_ps)
}

#[no_mangle]
pub unsafe extern "C" fn qscope_stream_get(
    stream: *const QscopeStream,
    index: usize,
    channel: *mut u16,
    time_ps: *mut i64,
) -> QscopeStatus {
    guard(|| {
        let s = deref(stream, "stream")?;
        let tag = s.0.tags.get(index).ok_or_else(|| {
            Fail(
                QscopeStatus::InvalidArgument,
                format!("index {index} out of range for {} tags", s.0.len()),
            )
        })?;
        write_out(channel, tag.channel.0, "channel")?;
        write_out(time_ps, tag.time, "time_ps")
    })
}

/// Copies up to `capacity` times into `times_ps`; returns how many were copied.
#[no_mangle]
pub unsafe extern "C" fn qscope_stream_times(
    stream: *const QscopeStream,
    times_ps: *mut i64,
    capacity: usize,
) -> usize {
    let Some(s) = stream.as_ref() else { return 0 };
    if times_ps.is_null() {
        return 0;
    }
    let n = capacity.min(s.0.len());
    for (k, t) in s.0.tags[..n].iter().enumerate() {
        times_ps.add(k).write(t.time);
    }
    n
}

/// New stream holding only the tags of `channel`.
#[no_mangle]
pub unsafe extern "C" fn qscope_stream_channel(
    stream: *const QscopeStream,
    channel: u16,
    out: *mut *mut QscopeStream,
) -> QscopeStatus {
    guard(|| {
        let s = deref(stream, "stream")?;
        put(out, QscopeStream(s.0.channel(Channel(channel))))
    })
}

#[no_mangle]
pub unsafe extern "C" fn qscope_stream_merge(
    a: *const QscopeStream,
    b: *const QscopeStream,
    out: *mut *mut QscopeStream,
) -> QscopeStatus {
    guard(|| {
        let m = timetag::merge_streams(&deref(a, "a")?.0, &deref(b, "b")?.0)?;
        put(out, QscopeStream(m))
    })
}

/// Writes the number of ordering, sign and channel violations.
#[no_mangle]
pub unsafe extern "C" fn qscope_stream_validate(
    stream: *const QscopeStream,
    violations: *mut usize,
) -> QscopeStatus {
    guard(|| {
        let r = deref(stream, "stream")?.0.validate();
        write_out(violations, r.violations.len(), "violations")
    })
}

#[no_mangle]
pub unsafe extern "C" fn qscope_stream_free(stream: *mut QscopeStream) {
    free(stream)
}

// ---------------------------------------------------------------------------
// Correlation and matching

pub struct QscopeHistogram(CorrelationHistogram);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct QscopeDelay {
    pub delay_ps: f64,
    pub significance: f64,
    pub peak_bin: usize,
}

#[no_mangle]
pub unsafe extern "C" fn qscope_histogram(
    signal: *const QscopeStream,
    idler: *const QscopeStream,
    bin_width_ps: i64,
    lag_min_ps: i64,
    lag_max_ps: i64,
    out: *mut *mut QscopeHistogram,
) -> QscopeStatus {
    guard(|| {
        let h = coincidence::cross_correlation_histogram(
            &deref(signal, "signal")?.0,
            &deref(idler, "idler")?.0,
            bin_width_ps,
            lag_min_ps,
            lag_max_ps,
        )?;
        put(out, QscopeHistogram(h))
    })
}

#[no_mangle]
pub unsafe extern "C" fn qscope_histogram_len(hist: *const QscopeHistogram) -> usize {
    hist.as_ref().map_or(0, |h| h.0.counts.len())
}

/// Copies up to `capacity` bin counts; returns how many were copied. Bin `k`
/// starts at lag `lag_min + k * bin_width`.
#[no_mangle]
pub unsafe extern "C" fn qscope_histogram_counts(
    hist: *const QscopeHistogram,
    counts: *mut u64,
    capacity: usize,
) -> usize {
    let Some(h) = hist.as_ref() else { return 0 };
    if counts.is_null() {
        return 0;
    }
    let n = capacity.min(h.0.counts.len());
    ptr::copy_nonoverlapping(h.0.counts.as_ptr(), counts, n);
    n
}

#[no_mangle]
pub unsafe extern "C" fn qscope_estimate_delay(
    hist: *const QscopeHistogram,
    out: *mut QscopeDelay,
) -> QscopeStatus {
    guard(|| {
        let e = coincidence::estimate_delay(&deref(hist, "hist")?.0)?;
        write_out(
            out,
            QscopeDelay {
                delay_ps: e.delay_ps,
                significance: e.significance,
                peak_bin: e.peak_bin,
            },
            "out",
        )
    })
}

#[no_mangle]
pub unsafe extern "C" fn qscope_histogram_free(hist: *mut QscopeHistogram) {
    free(hist)
}

/// Greedy coincidence matching. The result is an idler-channel stream of
/// the matched idler times.
#[no_mangle]
pub unsafe extern "C" fn qscope_match_coincidences(
    signal: *const QscopeStream,
    idler: *const QscopeStream,
    delay_ps: i64,
    window_ps: i64,
    out: *mut *mut QscopeStream,
) -> QscopeStatus {
    guard(|| {
        let idler = &deref(idler, "idler")?.0;
        let set = coincidence::match_coincidences(
            &deref(signal, "signal")?.0,
            idler,
            delay_ps,
            window_ps,
        )?;
        let mut s = TagStream::from_times(Channel::IDLER, set.times);
        s.resolution_ps = idler.resolution_ps;
        put(out, QscopeStream(s))
    })
}

// ---------------------------------------------------------------------------
// Scan decoding

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QscopeDirections {
    Both = 0,
    ForwardOnly = 1,
    ReverseOnly = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct QscopeScanConfig {
    pub pixels_x: u32,
    pub pixels_y: u32,
    pub dwell_time_us: f64,
    pub turnaround_time_us: f64,
    pub field_of_view_x_um: f64,
    pub field_of_view_y_um: f64,
    pub bidirectional: bool,
    pub flyback_equals_frame: bool,
    pub directions: QscopeDirections,
}

impl From<&QscopeScanConfig> for ScanConfig {
    fn from(c: &QscopeScanConfig) -> Self {
        ScanConfig {
            pixels_x: c.pixels_x,
            pixels_y: c.pixels_y,
            dwell_time_us: c.dwell_time_us,
            turnaround_time_us: c.turnaround_time_us,
            field_of_view_x_um: c.field_of_view_x_um,
            field_of_view_y_um: c.field_of_view_y_um,
            bidirectional: c.bidirectional,
            flyback_equals_frame: c.flyback_equals_frame,
            directions: match c.directions {
                QscopeDirections::Both => Directions::Both,
                QscopeDirections::ForwardOnly => Directions::ForwardOnly,
                QscopeDirections::ReverseOnly => Directions::ReverseOnly,
            },
        }
    }
}

/// 96 x 96 px, 10 us dwell, 400 us turnaround, 100 um field, bidirectional.
#[no_mangle]
pub extern "C" fn qscope_scan_config_default() -> QscopeScanConfig {
    let d = ScanConfig::default();
    QscopeScanConfig {
        pixels_x: d.pixels_x,
        pixels_y: d.pixels_y,
        dwell_time_us: d.dwell_time_us,
        turnaround_time_us: d.turnaround_time_us,
        field_of_view_x_um: d.field_of_view_x_um,
        field_of_view_y_um: d.field_of_view_y_um,
        bidirectional: d.bidirectional,
        flyback_equals_frame: d.flyback_equals_frame,
        directions: QscopeDirections::Both,
    }
}

pub struct QscopeImage(ImageGrid);

/// Decodes the line triggers and bins every event of `events` into pixels.
#[no_mangle]
pub unsafe extern "C" fn qscope_assign_pixels(
    events: *const QscopeStream,
    triggers: *const QscopeStream,
    config: *const QscopeScanConfig,
    out: *mut *mut QscopeImage,
) -> QscopeStatus {
    guard(|| {
        let config = ScanConfig::from(deref(config, "config")?);
        let trigger_times: Vec<i64> = deref(triggers, "triggers")?.0.times().collect();
        let timeline = scan::build_timeline(&trigger_times, &config)?;
        let grid = scan::assign_pixels(deref(events, "events")?.0.times(), &timeline, &config);
        put(out, QscopeImage(grid))
    })
}

#[no_mangle]
pub unsafe extern "C" fn qscope_image_dims(
    image: *const QscopeImage,
    width: *mut usize,
    height: *mut usize,
) -> QscopeStatus {
    guard(|| {
        let g = &deref(image, "image")?.0;
        write_out(width, g.width, "width")?;
        write_out(height, g.height, "height")
    })
}

/// Copies up to `capacity` row-major counts; returns how many were copied.
#[no_mangle]
pub unsafe extern "C" fn qscope_image_counts(
    image: *const QscopeImage,
    counts: *mut u64,
    capacity: usize,
) -> usize {
    let Some(g) = image.as_ref() else { return 0 };
    if counts.is_null() {
        return 0;
    }
    let n = capacity.min(g.0.counts.len());
    ptr::copy_nonoverlapping(g.0.counts.as_ptr(), counts, n);
    n
}

#[no_mangle]
pub unsafe extern "C" fn qscope_image_discarded(image: *const QscopeImage) -> u64 {
    image.as_ref().map_or(0, |g| g.0.discarded_tags)
}

#[no_mangle]
pub unsafe extern "C" fn qscope_image_frames(image: *const QscopeImage) -> u64 {
    image.as_ref().map_or(0, |g| g.0.frames_accumulated)
}

#[no_mangle]
pub unsafe extern "C" fn qscope_image_free(image: *mut QscopeImage) {
    free(image)
}

// ---------------------------------------------------------------------------
// Simulation

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct QscopeSource {
    pub pair_rate_hz: f64,
    pub signal_efficiency: f64,
    pub idler_path_efficiency: f64,
    pub signal_dark_rate_hz: f64,
    pub idler_dark_rate_hz: f64,
    pub inter_arm_delay_ps: i64,
    pub jitter_sigma_ps: f64,
    pub rng_seed: u64,
}

impl From<&QscopeSource> for SourceModel {
    fn from(s: &QscopeSource) -> Self {
        SourceModel {
            pair_rate_hz: s.pair_rate_hz,
            signal_efficiency: s.signal_efficiency,
            idler_path_efficiency: s.idler_path_efficiency,
            signal_dark_rate_hz: s.signal_dark_rate_hz,
            idler_dark_rate_hz: s.idler_dark_rate_hz,
            inter_arm_delay_ps: s.inter_arm_delay_ps,
            jitter_sigma_ps: s.jitter_sigma_ps,
            rng_seed: s.rng_seed,
        }
    }
}

#[no_mangle]
pub extern "C" fn qscope_source_default() -> QscopeSource {
    let d = SourceModel::default();
    QscopeSource {
        pair_rate_hz: d.pair_rate_hz,
        signal_efficiency: d.signal_efficiency,
        idler_path_efficiency: d.idler_path_efficiency,
        signal_dark_rate_hz: d.signal_dark_rate_hz,
        idler_dark_rate_hz: d.idler_dark_rate_hz,
        inter_arm_delay_ps: d.inter_arm_delay_ps,
        jitter_sigma_ps: d.jitter_sigma_ps,
        rng_seed: d.rng_seed,
    }
}

/// Simulates a square grating (`square_um` squares, `gap_um` gaps, map
/// rasterised at `resolution` cells over the x field of view) blurred by
/// `blur_sigma_um`. Writes three new streams.
#[no_mangle]
pub unsafe extern "C" fn qscope_simulate_grating(
    square_um: f64,
    gap_um: f64,
    resolution: usize,
    blur_sigma_um: f64,
    source: *const QscopeSource,
    config: *const QscopeScanConfig,
    duration_s: f64,
    signal: *mut *mut QscopeStream,
    idler: *mut *mut QscopeStream,
    triggers: *mut *mut QscopeStream,
) -> QscopeStatus {
    guard(|| {
        if signal.is_null() || idler.is_null() || triggers.is_null() {
            return Err(null("output stream pointer"));
        }
        let config = ScanConfig::from(deref(config, "config")?);
        let source = SourceModel::from(deref(source, "source")?);
        let sample =
            simulator::make_grating(square_um, gap_um, config.field_of_view_x_um, resolution)?
                .with_blur(blur_sigma_um);
        let sim = simulator::simulate(&sample, &source, &config, duration_s)?;
        signal.write(boxed(QscopeStream(sim.signal)));
        idler.write(boxed(QscopeStream(sim.idler)));
        triggers.write(boxed(QscopeStream(sim.triggers)));
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Analysis

#[no_mangle]
pub unsafe extern "C" fn qscope_idler_wavelength(
    pump: f64,
    signal: f64,
    out: *mut f64,
) -> QscopeStatus {
    guard(|| write_out(out, analysis::idler_wavelength(pump, signal)?, "out"))
}

/// `0.33 * wavelength / na`, in the units of `wavelength`.
#[no_mangle]
pub extern "C" fn qscope_confocal_limit(wavelength: f64, na: f64) -> f64 {
    analysis::confocal_limit(wavelength, na)
}

/// Contrast-to-noise of `image` with bright/dark regions thresholded at the
/// mean of `reference`.
#[no_mangle]
pub unsafe extern "C" fn qscope_snr(
    image: *const QscopeImage,
    reference: *const QscopeImage,
    out: *mut f64,
) -> QscopeStatus {
    guard(|| {
        let masks = threshold_mask(&deref(reference, "reference")?.0);
        write_out(
            out,
            analysis::snr(&deref(image, "image")?.0, &masks)?,
            "out",
        )
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct QscopeEdgeFit {
    pub amplitude: f64,
    pub offset: f64,
    pub center_um: f64,
    pub sigma_um: f64,
    pub amplitude_err: f64,
    pub offset_err: f64,
    pub center_err_um: f64,
    pub sigma_err_um: f64,
    pub residual_norm: f64,
    pub reduced_chi_squared: f64,
    pub iterations: usize,
    pub sharper_than_sampling: bool,
}

/// Fits `A erf((x - c) / (sqrt(2) sigma)) + B` to `n` points.
#[no_mangle]
pub unsafe extern "C" fn qscope_fit_edge(
    positions_um: *const f64,
    counts: *const f64,
    n: usize,
    out: *mut QscopeEdgeFit,
) -> QscopeStatus {
    guard(|| {
        let x = slice_arg(positions_um, n, "positions_um")?;
        let y = slice_arg(counts, n, "counts")?;
        let points: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
        let f = analysis::fit_edge(&points)?;
        write_out(
            out,
            QscopeEdgeFit {
                amplitude: f.params.amplitude,
                offset: f.params.offset,
                center_um: f.params.center_um,
                sigma_um: f.params.sigma_um,
                amplitude_err: f.std_errors.amplitude,
                offset_err: f.std_errors.offset,
                center_err_um: f.std_errors.center_um,
                sigma_err_um: f.std_errors.sigma_um,
                residual_norm: f.residual_norm,
                reduced_chi_squared: f.reduced_chi_squared,
                iterations: f.iterations,
                sharper_than_sampling: f.sharper_than_sampling,
            },
            "out",
        )
    })
}
