use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qscope::scan::{read_frame_stack, ImageGrid};
use qscope::timetag::read_stream_file;
use qscope::Channel;
use serde_json::{json, Value};
use tempfile::TempDir;

fn qscope(args: &[&str], config: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qscope"))
        .args(args)
        .arg("--config")
        .arg(config)
        .env("QSCOPE_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn small_run(out: &Path, duration_s: f64) -> Value {
    json!({
        "schema_version": 1,
        "seed": 11,
        "out_dir": out,
        "source": { "pair_rate_hz": 1e6, "signal_efficiency": 0.3, "idler_path_efficiency": 0.3 },
        "simulation": { "duration_s": duration_s }
    })
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn simulate_reconstruct_analyze() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let cfg = write_config(tmp.path(), "run.json", &small_run(&out, 3.0));

    let o = qscope(&["simulate"], &cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    for (file, ch) in [
        ("signal.qtt", Channel::SIGNAL),
        ("idler.qtt", Channel::IDLER),
        ("triggers.qtt", Channel::TRIGGER),
    ] {
        let s = read_stream_file(out.join(file)).unwrap();
        assert!(s.validate().is_ok(), "{file}");
        assert!(!s.is_empty());
        assert!(s.tags.iter().all(|t| t.channel == ch));
    }
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seed"], 11);

    let o = qscope(&["reconstruct"], &cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    let delay = report["delay_ps"].as_i64().unwrap();
    assert!((delay - 5000).abs() <= 100, "delay {delay}");
    let image =
        ImageGrid::read_csv(fs::read(out.join("coincidence.csv")).unwrap().as_slice()).unwrap();
    assert_eq!(image.dims(), (96, 96));
    assert_eq!(
        image.total() as i64,
        report["coincidences"].as_i64().unwrap()
            - report["coincidence_discarded"].as_i64().unwrap()
    );
    let frames = read_frame_stack(
        fs::read(out.join("coincidence_frames.csv"))
            .unwrap()
            .as_slice(),
    )
    .unwrap();
    assert_eq!(frames.len() as u64, report["frames"].as_u64().unwrap());
    let pgm = fs::read(out.join("coincidence.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n96 96\n"));
    for f in ["histogram.csv", "idler.csv", "idler.pgm", "report.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }

    let o = qscope(&["analyze"], &cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    let curve = fs::read_to_string(out.join("snr_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), frames.len() + 1);
    let fits: Value =
        serde_json::from_str(&fs::read_to_string(out.join("edge_fits.json")).unwrap()).unwrap();
    assert_eq!(fits["fits"].as_array().unwrap().len(), 20);
    let confocal: Value =
        serde_json::from_str(&fs::read_to_string(out.join("confocal.json")).unwrap()).unwrap();
    let na03 = confocal["limits"][0]["resolution_um"].as_f64().unwrap();
    assert!((na03 - 1.84).abs() < 0.01, "{na03}");
    for f in ["sqrt_fit.json", "edge_profiles.csv", "analysis.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
}

#[test]
fn same_seed_gives_identical_outputs() {
    let tmp = TempDir::new().unwrap();
    let dirs = [tmp.path().join("a"), tmp.path().join("b")];
    for (k, d) in dirs.iter().enumerate() {
        let cfg = write_config(tmp.path(), &format!("{k}.json"), &small_run(d, 1.5));
        for cmd in ["simulate", "reconstruct", "analyze"] {
            let o = qscope(&[cmd], &cfg);
            assert!(o.status.success(), "{cmd}: {}", stderr(&o));
        }
    }
    let mut names: Vec<_> = fs::read_dir(&dirs[0])
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() >= 15);
    for name in names {
        let a = fs::read(dirs[0].join(&name)).unwrap();
        let b = fs::read(dirs[1].join(&name)).unwrap();
        if name == "manifest.json" {
            // Records its own out_dir.
            continue;
        }
        assert!(a == b, "{name:?} differs");
    }
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let cfg = write_config(tmp.path(), "run.json", &small_run(&out, 0.2));
    let run = |seed: &str| {
        let o = qscope(&["simulate", "--seed", seed], &cfg);
        assert!(o.status.success());
        fs::read(out.join("signal.qtt")).unwrap()
    };
    let a = run("1");
    let b = run("2");
    let c = run("1");
    assert_ne!(a, b);
    assert_eq!(a, c);
}

#[test]
fn zero_duration_gives_empty_streams() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let cfg = write_config(tmp.path(), "run.json", &small_run(&out, 0.0));
    let o = qscope(&["simulate"], &cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["signal.qtt", "idler.qtt", "triggers.qtt"] {
        assert!(read_stream_file(out.join(f)).unwrap().is_empty());
    }

    let o = qscope(&["reconstruct"], &cfg);
    assert_eq!(o.status.code(), Some(3));
    assert!(
        stderr(&o).contains("cannot build timeline"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn zero_coincidences_give_empty_image_and_warning() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let mut v = small_run(&out, 0.6);
    v["source"]["idler_path_efficiency"] = json!(0.0);
    v["source"]["idler_dark_rate_hz"] = json!(0.0);
    let cfg = write_config(tmp.path(), "run.json", &v);
    assert!(qscope(&["simulate"], &cfg).status.success());
    let o = qscope(&["reconstruct"], &cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("no coincidences"), "{}", stderr(&o));
    let image =
        ImageGrid::read_csv(fs::read(out.join("coincidence.csv")).unwrap().as_slice()).unwrap();
    assert_eq!(image.total(), 0);
}

#[test]
fn flat_histogram_warns() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let mut v = small_run(&out, 0.6);
    v["source"]["idler_path_efficiency"] = json!(0.0);
    let cfg = write_config(tmp.path(), "run.json", &v);
    assert!(qscope(&["simulate"], &cfg).status.success());
    let o = qscope(&["reconstruct"], &cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(
        stderr(&o).contains("weak correlation peak"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn single_frame_analysis_is_degenerate() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    // One frame plus a little of the turnaround after it.
    let cfg = write_config(tmp.path(), "run.json", &small_run(&out, 0.3));
    for cmd in ["simulate", "reconstruct", "analyze"] {
        let o = qscope(&[cmd], &cfg);
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
    }
    let curve = fs::read_to_string(out.join("snr_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 2);
    let fit: Value =
        serde_json::from_str(&fs::read_to_string(out.join("sqrt_fit.json")).unwrap()).unwrap();
    assert_eq!(fit["degenerate"], true);
}

#[test]
fn config_errors_exit_2_without_writing() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("never");
    let cases = [
        json!({ "out_dir": out, "bogus_key": 1 }),
        json!({ "out_dir": out, "scan": { "pixels_x": 0 } }),
        json!({ "out_dir": out, "source": { "signal_efficiency": 1.5 } }),
        json!({ "out_dir": out, "schema_version": 99 }),
        json!({ "out_dir": out, "simulation": { "duration_s": -1.0 } }),
    ];
    for (k, case) in cases.iter().enumerate() {
        let cfg = write_config(tmp.path(), &format!("bad{k}.json"), case);
        for cmd in ["simulate", "reconstruct", "analyze"] {
            let o = qscope(&[cmd], &cfg);
            assert_eq!(o.status.code(), Some(2), "case {k} {cmd}: {}", stderr(&o));
            assert!(!out.exists(), "case {k} {cmd} wrote output");
        }
    }
    let o = qscope(&["simulate"], &tmp.path().join("missing.json"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn empty_edge_regions_name_required_keys() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let mut v = small_run(&out, 0.6);
    v["analysis"] = json!({ "edge_regions": [] });
    let cfg = write_config(tmp.path(), "run.json", &v);
    let o = qscope(&["analyze"], &cfg);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    for key in ["edge_regions", "axis", "rows", "cols", "count"] {
        assert!(msg.contains(key), "{msg}");
    }
}

#[test]
fn corrupt_stream_is_a_format_error() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let cfg = write_config(tmp.path(), "run.json", &small_run(&out, 0.6));
    assert!(qscope(&["simulate"], &cfg).status.success());
    let path = out.join("idler.qtt");
    let mut bytes = fs::read(&path).unwrap();
    bytes[0] = b'X';
    fs::write(&path, bytes).unwrap();
    let o = qscope(&["reconstruct"], &cfg);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}
