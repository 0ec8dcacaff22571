use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;

use nlres_cli::formats::{self, FileKind};

fn nlres(dir: &Path, args: &[&str], config: &str) -> (i32, String) {
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, config).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_nlres"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn report_value<'a>(report: &'a str, key: &str) -> &'a str {
    report.lines().find_map(|l| l.strip_prefix(&format!("{key}: "))).unwrap_or_else(|| panic!("no {key} in report"))
}

#[test]
fn natfreq_small_amplitude_is_linear() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = nlres(dir.path(), &["natfreq"], "[natfreq]\nx_max = 1e-6 1.0\n");
    assert_eq!(code, 0, "{err}");
    let text = std::fs::read_to_string(dir.path().join("out/natfreq.csv")).unwrap();
    let row: Vec<f64> = text.lines().nth(2).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!((row[1] - 2.0 * PI).abs() < 1e-6, "{row:?}");
    let stiff: Vec<f64> = text.lines().nth(3).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!(stiff[1] < row[1]);
}

#[test]
fn orbit_report_for_subharmonic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[orbit]\ngamma = 0.01\namplitude = 3\nomega = 0.82\nn = 3\ntransient = 1000\n";
    let (code, err) = nlres(dir.path(), &["orbit"], cfg);
    assert_eq!(code, 0, "{err}");
    let report = std::fs::read_to_string(dir.path().join("out/orbit.txt")).unwrap();
    assert_eq!(report_value(&report, "stability"), "Stable");
    assert_eq!(report_value(&report, "symmetric"), "true");
    assert_eq!(report_value(&report, "n"), "3");
    let period: f64 = report_value(&report, "period").parse().unwrap();
    assert!((period - 3.0 * 2.0 * PI / 0.82).abs() < 1e-9);
    let traj = std::fs::read_to_string(dir.path().join("out/trajectory.csv")).unwrap();
    assert!(traj.starts_with("# nlres trajectory v1\nt,x,v\n"));
}

#[test]
fn curve_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[curve]\ngamma = 0.01\namplitude = 0.05\nomega = 3.0\nrange = 0.8 3.0\n";
    let (code, err) = nlres(dir.path(), &["curve"], cfg);
    assert_eq!(code, 0, "{err}");
    let path = dir.path().join("out/branch_000.csv");
    let file = formats::read_curve(&path, FileKind::Branch).unwrap();
    assert_eq!(file.rows.iter().filter(|r| r.has_flag("SN")).count(), 2);
    let again = formats::parse_curve(&path, &formats::curve_to_string(&file), FileKind::Branch).unwrap();
    assert_eq!(again, file);
    assert!(formats::read_curve(&path, FileKind::Tongue).is_err());
    assert!(dir.path().join("out/curve.svg").exists());
}

#[test]
fn main_tongue_has_one_cusp() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[tongue]\nkind = fold\ngamma = 0.01\namplitude = 0.05\nomega = 3.0\nrange = 0.8 3.0\nomega_range = 0.5 3.0\na_range = 0 0.2\n";
    let (code, err) = nlres(dir.path(), &["tongue"], cfg);
    assert_eq!(code, 0, "{err}");
    let tongue = formats::read_curve(&dir.path().join("out/tongue_000.csv"), FileKind::Tongue).unwrap();
    assert!(!dir.path().join("out/tongue_001.csv").exists());
    let cusps: Vec<_> = tongue.rows.iter().filter(|r| r.has_flag("cusp")).collect();
    assert_eq!(cusps.len(), 1);
    assert!(cusps[0].a > 0.0 && cusps[0].a < 0.01);
}

#[test]
fn small_sweep_writes_raster() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[sweep]\ngamma = 0.01\nomega = 0.8 0.84 3\namplitude = 3 3 1\ntransient_periods = 300\n";
    let (code, err) = nlres(dir.path(), &["sweep", "--threads", "2"], cfg);
    assert_eq!(code, 0, "{err}");
    let raster = formats::read_raster(&dir.path().join("out/raster.csv")).unwrap();
    assert_eq!(raster.rows.len(), 3);
    assert!(dir.path().join("out/xmax.svg").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = nlres(dir.path(), &["orbit"], "[orbit]\nnot a pair\n");
    assert_eq!(code, 2);
    assert!(err.starts_with("nlres-error code=2 kind=config"), "{err}");

    let (code, _) = nlres(dir.path(), &["orbit"], "[orbit]\ngamma = -1\n");
    assert_eq!(code, 2);

    let (code, err) = nlres(dir.path(), &["tongue"], "[tongue]\nkind = sync\nmodel = duffing\n");
    assert_eq!(code, 3, "{err}");

    let out = Command::new(env!("CARGO_BIN_EXE_nlres")).args(["natfreq", "--config", "/nonexistent/run.cfg"]).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
}
