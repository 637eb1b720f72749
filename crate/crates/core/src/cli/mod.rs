//! `qscope` command implementations. Each command validates its whole
//! configuration before writing anything, and every output file is written
//! to a temporary name and renamed into place.

mod config;

pub use config::{
    AnalysisConfig, ChannelConfig, CoincidenceConfig, InputConfig, RunConfig, SampleConfig,
    SimulationConfig, SourceConfig, SCHEMA_VERSION,
};

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::analysis::{
    confocal_limit, extract_linescans, fit_linescans, fit_sqrt_scaling, idler_wavelength,
    sigma_summary, snr_curve, threshold_mask, EdgeFitResult,
};
use crate::coincidence::{cross_correlation_histogram, estimate_delay, match_coincidences};
use crate::error::{Error, Result};
use crate::scan::{
    accumulate_frames, assign_frames, build_timeline, read_frame_stack, write_frame_stack,
    ImageGrid,
};
use crate::simulator::simulate;
use crate::timetag::{read_stream_file, write_stream, Channel, TagStream};

pub const SIGNAL_FILE: &str = "signal.qtt";
pub const IDLER_FILE: &str = "idler.qtt";
pub const TRIGGER_FILE: &str = "triggers.qtt";

/// Writes through a sibling temp file renamed over `path` on success.
pub fn write_atomic(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> Result<()>,
) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut out = BufWriter::new(file);
    let written = body(&mut out).and_then(|_| out.flush().map_err(|e| Error::io(&tmp, e)));
    if let Err(e) = written {
        let _ = fs::remove_file(&tmp);
        return Err(e);
    }
    drop(out);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(w)?;
        Ok(())
    })
}

fn prepare_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::Config(format!("out_dir {}: {e}", dir.display())))?;
    let probe = dir.join(".qscope-write-probe");
    File::create(&probe)
        .and_then(|_| fs::remove_file(&probe))
        .map_err(|e| Error::Config(format!("out_dir {} is not writable: {e}", dir.display())))
}

/// Writes an image as CSV and PGM; a `.warning` sidecar records clamping.
pub fn write_image(dir: &Path, stem: &str, image: &ImageGrid) -> Result<Vec<String>> {
    write_atomic(&dir.join(format!("{stem}.csv")), |w| image.write_csv(w))?;
    let pgm = dir.join(format!("{stem}.pgm"));
    let mut clamped = 0;
    write_atomic(&pgm, |w| {
        clamped = image.write_pgm(w)?;
        Ok(())
    })?;
    let mut warnings = Vec::new();
    if clamped > 0 {
        let msg = format!("{stem}.pgm: {clamped} pixels clamped at 65535");
        write_atomic(&dir.join(format!("{stem}.pgm.warning")), |w| {
            Ok(writeln!(w, "{msg}")?)
        })?;
        warnings.push(msg);
    }
    Ok(warnings)
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub pairs_emitted: u64,
    pub signal_tags: usize,
    pub idler_tags: usize,
    pub trigger_tags: usize,
    pub frames: usize,
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulateSummary> {
    cfg.validate()?;
    let sample = cfg.sample_pattern()?;
    prepare_out_dir(&cfg.out_dir)?;
    let sim = simulate(
        &sample,
        &cfg.source_model(),
        &cfg.scan,
        cfg.simulation.duration_s,
    )?;
    let dir = &cfg.out_dir;
    for (name, stream) in [
        (SIGNAL_FILE, &sim.signal),
        (IDLER_FILE, &sim.idler),
        (TRIGGER_FILE, &sim.triggers),
    ] {
        write_atomic(&dir.join(name), |w| write_stream(stream, w))?;
    }
    write_atomic(&dir.join("ground_truth.csv"), |w| {
        sim.ground_truth.write_csv(w)
    })?;
    write_image(dir, "ground_truth", &sim.ground_truth.to_grid())?;
    let summary = SimulateSummary {
        pairs_emitted: sim.pairs_emitted,
        signal_tags: sim.signal.len(),
        idler_tags: sim.idler.len(),
        trigger_tags: sim.triggers.len(),
        frames: sim.timeline.as_ref().map_or(0, |t| t.frames.len()),
    };
    write_json(
        &dir.join("manifest.json"),
        &json!({ "config": cfg, "summary": &summary, "files": [SIGNAL_FILE, IDLER_FILE, TRIGGER_FILE] }),
    )?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct ReconstructReport {
    pub delay_ps: i64,
    pub delay_estimated: bool,
    pub peak_significance: Option<f64>,
    pub coincidences: usize,
    pub coincidence_discarded: u64,
    pub idler_discarded: u64,
    pub frames: usize,
    pub complete_frames: usize,
    pub warnings: Vec<String>,
}

struct Inputs {
    signal: TagStream,
    idler: TagStream,
    triggers: TagStream,
}

fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let map = cfg.channels.remap();
    let load = |path: &Path| -> Result<TagStream> {
        let mut s = read_stream_file(path)?;
        s.remap_channels(&map);
        let report = s.validate();
        if let Some(v) = report.violations.first() {
            return Err(Error::Format(format!(
                "{}: {} violations, first at tag {}: {:?}",
                path.display(),
                report.violations.len(),
                v.index,
                v.kind
            )));
        }
        Ok(s)
    };
    let inp = &cfg.inputs;
    if let Some(merged) = &inp.merged {
        let all = load(merged)?;
        return Ok(Inputs {
            signal: all.channel(Channel::SIGNAL),
            idler: all.channel(Channel::IDLER),
            triggers: all.channel(Channel::TRIGGER),
        });
    }
    let path =
        |p: &Option<PathBuf>, default: &str| p.clone().unwrap_or_else(|| cfg.out_dir.join(default));
    Ok(Inputs {
        signal: load(&path(&inp.signal, SIGNAL_FILE))?.channel(Channel::SIGNAL),
        idler: load(&path(&inp.idler, IDLER_FILE))?.channel(Channel::IDLER),
        triggers: load(&path(&inp.triggers, TRIGGER_FILE))?.channel(Channel::TRIGGER),
    })
}

pub fn cmd_reconstruct(cfg: &RunConfig) -> Result<ReconstructReport> {
    cfg.validate()?;
    let input = load_inputs(cfg)?;
    if input.triggers.is_empty() {
        return Err(Error::Timeline("missing line trigger channel".into()));
    }
    let trigger_times: Vec<i64> = input.triggers.times().collect();
    let timeline = build_timeline(&trigger_times, &cfg.scan)?;
    prepare_out_dir(&cfg.out_dir)?;
    let mut warnings = Vec::new();

    let c = &cfg.coincidence;
    let hist = cross_correlation_histogram(
        &input.signal,
        &input.idler,
        c.bin_width_ps,
        c.lag_min_ps,
        c.lag_max_ps,
    )?;
    let (delay, significance) = match (c.delay_ps, estimate_delay(&hist)) {
        (Some(d), _) => (d, None),
        (None, Ok(est)) => {
            if est.significance < c.min_significance {
                warnings.push(format!(
                    "weak correlation peak (significance {:.2} < {}); delay {} ps is unreliable",
                    est.significance,
                    c.min_significance,
                    est.rounded_ps()
                ));
            }
            (est.rounded_ps(), Some(est.significance))
        }
        (None, Err(Error::NoCorrelationPeak)) => {
            warnings.push("no correlation peak; using zero delay".to_owned());
            (0, None)
        }
        (None, Err(e)) => return Err(e),
    };
    let coincidences = match_coincidences(&input.signal, &input.idler, delay, c.window_ps)?;
    if coincidences.is_empty() {
        warnings.push("no coincidences found; coincidence image is empty".to_owned());
    }

    let frames = assign_frames(&coincidences.times, &timeline, &cfg.scan);
    let image = accumulate_frames(&frames)?;
    let idler_times: Vec<i64> = input.idler.times().collect();
    let idler_image = accumulate_frames(&assign_frames(&idler_times, &timeline, &cfg.scan))?;

    let dir = &cfg.out_dir;
    write_atomic(&dir.join("histogram.csv"), |w| hist.write_csv(w))?;
    warnings.extend(write_image(dir, "coincidence", &image)?);
    warnings.extend(write_image(dir, "idler", &idler_image)?);
    write_atomic(&dir.join("coincidence_frames.csv"), |w| {
        write_frame_stack(&frames, w)
    })?;

    let report = ReconstructReport {
        delay_ps: delay,
        delay_estimated: c.delay_ps.is_none(),
        peak_significance: significance,
        coincidences: coincidences.len(),
        coincidence_discarded: image.discarded_tags,
        idler_discarded: idler_image.discarded_tags,
        frames: timeline.frames.len(),
        complete_frames: timeline.complete_frames(),
        warnings,
    };
    write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct EdgeFitEntry {
    pub region: usize,
    pub line: usize,
    pub fit: Option<EdgeFitResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisBundle {
    pub snr_points: usize,
    pub sqrt_fit: serde_json::Value,
    pub edge_fits: Vec<EdgeFitEntry>,
    pub sigma_mean_um: Option<f64>,
    pub sigma_std_um: Option<f64>,
    pub idler_wavelength_nm: f64,
    pub confocal_limits_um: Vec<(f64, f64)>,
}

fn read_image(path: &Path) -> Result<ImageGrid> {
    let file = File::open(path).map_err(|e| {
        Error::Config(format!(
            "{}: {e}; set analysis.images_dir to a reconstruct output directory",
            path.display()
        ))
    })?;
    ImageGrid::read_csv(BufReader::new(file))
}

pub fn cmd_analyze(cfg: &RunConfig) -> Result<AnalysisBundle> {
    cfg.validate()?;
    if cfg.analysis.edge_regions.is_empty() {
        return Err(Error::Config(
            "analysis.edge_regions is empty; required keys: axis, rows, cols, count".into(),
        ));
    }
    let dir = cfg.images_dir();
    let reference = read_image(&dir.join("idler.csv"))?;
    let image = read_image(&dir.join("coincidence.csv"))?;
    let frames_path = dir.join("coincidence_frames.csv");
    let frames = read_frame_stack(BufReader::new(
        File::open(&frames_path)
            .map_err(|e| Error::Config(format!("{}: {e}", frames_path.display())))?,
    ))?;
    let scans: Vec<_> = cfg
        .analysis
        .edge_regions
        .iter()
        .map(|r| extract_linescans(&image, r))
        .collect::<Result<_>>()
        .map_err(|e| Error::Config(format!("analysis.edge_regions: {e}")))?;
    prepare_out_dir(&cfg.out_dir)?;
    let out = &cfg.out_dir;

    let masks = threshold_mask(&reference);
    let curve = snr_curve(&frames, &masks)?;
    write_atomic(&out.join("snr_curve.csv"), |w| {
        writeln!(w, "frames,snr")?;
        for (k, s) in &curve {
            writeln!(w, "{k},{s}")?;
        }
        Ok(())
    })?;
    let sqrt_fit = match fit_sqrt_scaling(&curve) {
        Ok(f) => serde_json::to_value(f).unwrap(),
        Err(e @ Error::Degenerate(_)) => json!({ "degenerate": true, "error": e.to_string() }),
        Err(e) => return Err(e),
    };
    write_json(&out.join("sqrt_fit.json"), &sqrt_fit)?;

    let mut entries = Vec::new();
    for (region, lines) in scans.iter().enumerate() {
        for (scan, fit) in lines.iter().zip(fit_linescans(lines)) {
            let (fit, error) = match fit {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e.to_string())),
            };
            entries.push(EdgeFitEntry {
                region,
                line: scan.line,
                fit,
                error,
            });
        }
    }
    let good: Vec<EdgeFitResult> = entries.iter().filter_map(|e| e.fit.clone()).collect();
    let summary = sigma_summary(&good);
    write_json(
        &out.join("edge_fits.json"),
        &json!({
            "fits": &entries,
            "sigma_mean_um": summary.map(|s| s.0),
            "sigma_std_um": summary.map(|s| s.1),
        }),
    )?;
    write_atomic(&out.join("edge_profiles.csv"), |w| {
        writeln!(w, "region,line,position_um,counts,fit")?;
        for ((region, lines), fits) in scans
            .iter()
            .enumerate()
            .zip(entries.chunk_by(|a, b| a.region == b.region))
        {
            for (scan, entry) in lines.iter().zip(fits) {
                for &(x, y) in &scan.points {
                    let model = entry
                        .fit
                        .as_ref()
                        .map(|f| f.params.eval(x).to_string())
                        .unwrap_or_default();
                    writeln!(w, "{region},{},{x},{y},{model}", scan.line)?;
                }
            }
        }
        Ok(())
    })?;

    let a = &cfg.analysis;
    let idler_nm = idler_wavelength(a.pump_nm, a.signal_nm)?;
    let lambda_um = a.wavelength_um.unwrap_or(idler_nm / 1000.0);
    let limits: Vec<(f64, f64)> = a
        .numerical_apertures
        .iter()
        .map(|&na| (na, confocal_limit(lambda_um, na)))
        .collect();
    write_json(
        &out.join("confocal.json"),
        &json!({
            "idler_wavelength_nm": idler_nm,
            "wavelength_um": lambda_um,
            "limits": limits.iter().map(|(na, r)| json!({"na": na, "resolution_um": r})).collect::<Vec<_>>(),
        }),
    )?;

    let bundle = AnalysisBundle {
        snr_points: curve.len(),
        sqrt_fit,
        edge_fits: entries,
        sigma_mean_um: summary.map(|s| s.0),
        sigma_std_um: summary.map(|s| s.1),
        idler_wavelength_nm: idler_nm,
        confocal_limits_um: limits,
    };
    write_json(&out.join("analysis.json"), &bundle)?;
    Ok(bundle)
}
