use std::path::Path;
use std::process::{Command, Output};

use rect_core::generators::plane;
use rect_core::io::{read_measure, write_measure, write_signed};
use rect_core::measure::SignedMeasure;

fn rect(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rect"))
        .args(args)
        .current_dir(dir)
        .env("RECT_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn cantor_depth_eight_has_65536_points() {
    let dir = tempfile::tempdir().unwrap();
    let o = rect(dir.path(), &["generate", "--kind", "cantor4", "--depth", "8"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let g = read_measure(&dir.path().join("measure.csv")).unwrap();
    assert_eq!(g.measure.len(), 65536);
    assert_eq!(g.meta.rectifiable, Some(false));
}

#[test]
fn circle_file_carries_its_length() {
    let dir = tempfile::tempdir().unwrap();
    let o = rect(
        dir.path(),
        &["generate", "--kind", "circle", "--R", "1", "--samples", "100000", "--out", "c.csv"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let g = read_measure(&dir.path().join("c.csv")).unwrap();
    assert!((g.measure.total_mass() - 2.0 * std::f64::consts::PI).abs() <= 1e-9);
}

#[test]
fn params_and_config_feed_the_generator() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("gen.conf"), "kind = graph\nside = 2\nstep = 0.01\nout = g.csv\n").unwrap();
    let o = rect(
        dir.path(),
        &["generate", "--config", "gen.conf", "--params", "profile=sawtooth,amplitude=0.05", "--step", "0.02"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let g = read_measure(&dir.path().join("g.csv")).unwrap();
    assert_eq!(g.measure.len(), 101);
    assert_eq!(g.meta.params["profile"], "sawtooth");
    assert_eq!(g.meta.params["step"], 0.02);
}

#[test]
fn invalid_kind_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = rect(dir.path(), &["generate", "--kind", "sphere"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("unknown kind"));
    let o = rect(dir.path(), &["generate", "--kind", "cantor4", "--depth", "9", "--budget", "1000"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = rect(dir.path(), &["analyze", "--measure", "nowhere.csv"]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn coarse_measure_reports_the_resolution_conflict() {
    let dir = tempfile::tempdir().unwrap();
    let g = plane(1, 2, 1.0, 0.1).unwrap();
    write_measure(&dir.path().join("coarse.csv"), &g).unwrap();
    let o = rect(dir.path(), &["analyze", "--measure", "coarse.csv"]);
    assert_eq!(code(&o), 4);
    let msg = stderr(&o);
    assert!(msg.contains("insufficient resolution"), "{msg}");
    assert!(msg.contains("h = 1.000000e-1"), "{msg}");
}

#[test]
fn analyze_writes_every_artifact_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let g = plane(1, 2, 4.0, 1e-3).unwrap();
    write_measure(&dir.path().join("p.csv"), &g).unwrap();
    std::fs::write(
        dir.path().join("run.conf"),
        "measure = p.csv\noctaves = 3\nr_max = 0.75\npoints = 40\nout = a\n",
    )
    .unwrap();
    let o = rect(dir.path(), &["analyze", "--config", "run.conf", "--octaves", "4", "--smoothed"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = dir.path().join("a");
    for f in ["profile.csv", "squarefn.csv", "verdicts.csv", "report.json", "run.conf"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["grid"]["octaves"], 4);
    assert_eq!(report["config"]["points"], "40");
    let total: f64 = report["fractions"].as_object().unwrap().values().map(|v| v.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert_eq!(report["fractions"]["divergent"], 0.0);

    let verdicts = std::fs::read_to_string(out.join("verdicts.csv")).unwrap();
    assert_eq!(verdicts.lines().count(), 41);
    let profile = std::fs::read_to_string(out.join("profile.csv")).unwrap();
    assert_eq!(profile.lines().count(), 1 + 40 * 17);
    assert!(profile.lines().skip(1).all(|l| !l.ends_with(',')), "smoothed column filled");

    // The emitted run.conf reproduces the run.
    let before = std::fs::read(out.join("verdicts.csv")).unwrap();
    let o = rect(dir.path(), &["analyze", "--config", "a/run.conf", "--out", "b"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(before, std::fs::read(dir.path().join("b/verdicts.csv")).unwrap());

    let o = rect(dir.path(), &["report", "a", "b"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.matches("rectifiable-consistent").count(), 2);
}

#[test]
fn r_max_beyond_quarter_diameter_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_measure(&dir.path().join("p.csv"), &plane(1, 2, 4.0, 1e-2).unwrap()).unwrap();
    let o = rect(dir.path(), &["analyze", "--measure", "p.csv", "--r-max", "1.5"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let o = rect(dir.path(), &["analyze", "--measure", "p.csv", "--points", "zero"]);
    assert_eq!(code(&o), 2);
}

fn cz_fixture(dir: &Path) {
    let g = plane(1, 2, 1.0, 0.01).unwrap();
    write_measure(&dir.join("mu.csv"), &g).unwrap();
    let pts: Vec<Vec<f64>> = [10usize, 50, 51, 90].iter().map(|&i| g.measure.point(i).to_vec()).collect();
    let nu = SignedMeasure::from_atoms(&pts, &[0.05, 0.1, -0.04, 0.02], 1, 2, g.measure.resolution()).unwrap();
    write_signed(&dir.join("nu.csv"), &nu).unwrap();
}

#[test]
fn czdemo_passes_and_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    cz_fixture(dir.path());
    let o = rect(
        dir.path(),
        &["czdemo", "--nu", "nu.csv", "--mu", "mu.csv", "--lambda", "3", "--out", "cz"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let audit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("cz/audit.json")).unwrap()).unwrap();
    assert_eq!(audit["pass"], true);
    let dec: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("cz/decomposition.json")).unwrap()).unwrap();
    assert!(!dec["cubes"].as_array().unwrap().is_empty());
}

#[test]
fn czdemo_audit_failure_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    cz_fixture(dir.path());
    let o = rect(
        dir.path(),
        &["czdemo", "--nu", "nu.csv", "--mu", "mu.csv", "--lambda", "3", "--c-max", "1e-6"],
    );
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("audit failed"));
    let o = rect(dir.path(), &["czdemo", "--nu", "nu.csv", "--mu", "mu.csv", "--lambda", "0.1"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn blowup_writes_trace_and_sparkline() {
    let dir = tempfile::tempdir().unwrap();
    let o = rect(dir.path(), &["generate", "--kind", "circle", "--samples", "20000", "--out", "c.csv"]);
    assert_eq!(code(&o), 0);
    let o = rect(
        dir.path(),
        &["blowup", "--measure", "c.csv", "--x", "1,0", "--radii", "0.2,0.1,0.05", "--out", "t"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("t/trace.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let svg = std::fs::read_to_string(dir.path().join("t/trace.svg")).unwrap();
    assert!(svg.contains("<polyline"));
    let o = rect(dir.path(), &["blowup", "--measure", "c.csv"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn bad_thread_setting_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_rect"))
        .args(["generate", "--kind", "circle"])
        .current_dir(dir.path())
        .env("RECT_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}
