//! Compiles `tests/c/roundtrip.c` against the generated header and the
//! static library, then runs it.

use std::path::{Path, PathBuf};
use std::process::Command;

fn target_dir() -> PathBuf {
    // tests run from <target>/<profile>/deps
    std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf()
}

#[test]
fn header_declares_the_api() {
    let header =
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/qscope.h"))
            .unwrap();
    for name in [
        "qscope_stream_read",
        "qscope_histogram",
        "qscope_estimate_delay",
        "qscope_match_coincidences",
        "qscope_assign_pixels",
        "qscope_fit_edge",
        "qscope_simulate_grating",
        "qscope_last_error",
        "QSCOPE_STATUS_OK",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

#[test]
fn c_program_links_and_runs() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler ({cc}); skipping");
        return;
    }
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir().join("libqscope_ffi.a");
    assert!(lib.is_file(), "{} not built", lib.display());
    let tmp = tempfile::TempDir::new().unwrap();
    let exe = tmp.path().join("roundtrip");
    let status = Command::new(&cc)
        .arg(manifest.join("tests/c/roundtrip.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&exe)
        .arg(tmp.path().join("idler.qtt"))
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("96x96 "), "{stdout}");
}
