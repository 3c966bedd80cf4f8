use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn qubit() -> PathBuf {
    configs().join("qubit.json")
}

fn qutrit() -> PathBuf {
    configs().join("qutrit.json")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drachma"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_in(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out-dir", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "status {:?}\nstdout {}\nstderr {}",
        o.status,
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// The manifest lists every other file in the directory, and nothing else
/// is a manifest.
fn check_manifest(dir: &Path, command: &str) -> Value {
    let m = json(dir.join("manifest.json"));
    assert_eq!(m["command"], command);
    assert_eq!(m["config"]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    let mut listed: Vec<String> = m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    let mut present: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    listed.sort();
    present.sort();
    assert_eq!(listed, present);
    m
}

#[test]
fn synth_linear_and_kerr() {
    let tmp = tempfile::tempdir().unwrap();
    let lin = tmp.path().join("lin");
    ok(&run_in("synth", &qubit(), &lin, &[]));
    check_manifest(&lin, "synth");
    let s = json(lin.join("synth.json"));
    assert_eq!(s["kerr"], false);
    assert_eq!(s["samples"], 501);

    let kerr = tmp.path().join("kerr");
    ok(&run_in("synth", &qubit(), &kerr, &["--kerr", "--order", "ascending"]));
    let a = std::fs::read(lin.join("pulse.csv")).unwrap();
    let b = std::fs::read(kerr.join("pulse.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn synth_qutrit_uses_fourth_power() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&run_in("synth", &qutrit(), tmp.path(), &[]));
    let s = json(tmp.path().join("synth.json"));
    assert_eq!(s["exponent_m"], 4);
    assert!((s["duration_s"].as_f64().unwrap() - 750e-9).abs() < 1e-15);
}

#[test]
fn simulate_sources() {
    let tmp = tempfile::tempdir().unwrap();
    let conv = tmp.path().join("conv");
    ok(&run_in(
        "simulate",
        &qubit(),
        &conv,
        &["--conventional", "--tp-ns", "1000", "--peak-photons", "100"],
    ));
    check_manifest(&conv, "simulate");
    let r = json(conv.join("report.json"));
    assert_eq!(r["source"], "conventional");
    let t = r["branches"][0]["time_to_noise_floor_kappa"].as_f64().unwrap();
    assert!((8.0..=10.0).contains(&t), "{t}");

    let auto = tmp.path().join("auto");
    ok(&run_in("simulate", &qubit(), &auto, &["--auto"]));
    let r = json(auto.join("report.json"));
    assert!(r["worst_contrast_db"].as_f64().unwrap() >= 30.0);
    assert!(auto.join("field_1.csv").exists() && auto.join("output_0.csv").exists());

    let synth = tmp.path().join("synth");
    ok(&run_in("synth", &qubit(), &synth, &["--kerr"]));
    let file = tmp.path().join("file");
    let pulse = synth.join("pulse.csv");
    ok(&run_in("simulate", &qubit(), &file, &["--pulse", pulse.to_str().unwrap()]));
    let r2 = json(file.join("report.json"));
    assert_eq!(r2["source"], "file");
    // the time step is rebuilt from the printed time stamps
    let (x, y) = (r2["worst_contrast_db"].as_f64().unwrap(), r["worst_contrast_db"].as_f64().unwrap());
    assert!((x - y).abs() < 1e-9 * y, "{x} {y}");
}

#[test]
fn simulate_needs_a_source() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in("simulate", &qubit(), tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    let o = run_in("simulate", &qubit(), tmp.path(), &["--auto", "--conventional"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn shots_rerun_is_bitwise_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["--n", "2000", "--seed", "11", "--tp-ns", "760", "--peak-photons", "200"];
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&run_in("shots", &qubit(), &a, &args));
    ok(&run_in("shots", &qubit(), &b, &args));
    let m = check_manifest(&a, "shots");
    assert_eq!(m["seed"], 11);
    for f in ["assignment.json", "histogram.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let r = json(a.join("assignment.json"));
    let e = r["error"].as_f64().unwrap();
    assert!(e > 0.0 && e < 0.1, "{e}");

    let c = tmp.path().join("c");
    ok(&run_in("shots", &qubit(), &c, &["--n", "2000", "--seed", "12", "--tp-ns", "760", "--peak-photons", "200"]));
    assert_ne!(
        std::fs::read(a.join("assignment.json")).unwrap(),
        std::fs::read(c.join("assignment.json")).unwrap()
    );
}

#[test]
fn shots_flags() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&run_in("shots", &qubit(), tmp.path(), &["--n", "1000", "--no-t1", "--tp-ns", "500"]));
    let r = json(tmp.path().join("assignment.json"));
    assert_eq!(r["relaxation"], false);
    assert_eq!(r["jumped"][1], 0);

    let o = run_in("shots", &qubit(), tmp.path(), &["--n", "1000", "--t1-us", "5", "--no-t1"]);
    assert_eq!(o.status.code(), Some(2));

    let d = tmp.path().join("t1");
    ok(&run_in("shots", &qubit(), &d, &["--n", "1000", "--t1-us", "5", "--no-noise"]));
    let r = json(d.join("assignment.json"));
    assert!((r["t1_s"].as_f64().unwrap() - 5e-6).abs() < 1e-18);
    assert!(r["jumped"][1].as_u64().unwrap() > 0);
    assert!(r["predicted_snr"].is_null());
}

#[test]
fn sweep_writes_table() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&run_in("sweep", &qubit(), tmp.path(), &["--tp-list", "250,500,1000"]));
    check_manifest(tmp.path(), "sweep");
    let text = std::fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "duration_ns,peak_signal,snr,error,contrast_db");
    assert_eq!(lines.len(), 4);

    let e = tmp.path().join("err");
    ok(&run_in("sweep", &qubit(), &e, &["--tp-list", "500", "--mode", "error", "--n", "1000"]));
    let text = std::fs::read_to_string(e.join("sweep.csv")).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert!(!row[3].is_empty());

    let o = run_in("sweep", &qubit(), &e, &["--tp-list", "500", "--mode", "fastest"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn scan_zeta_finds_plant_values() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&run_in("scan-zeta", &qubit(), tmp.path(), &["--grid=-200:-150:25,-81:-31:25"]));
    check_manifest(tmp.path(), "scan-zeta");
    let best = json(tmp.path().join("best.json"));
    assert_eq!(best["points"], 9);
    let z = best["zetas_hz"].as_array().unwrap();
    assert!((z[0].as_f64().unwrap() + 175.0).abs() < 1e-9);
    assert!((z[1].as_f64().unwrap() + 56.0).abs() < 1e-9);
    let text = std::fs::read_to_string(tmp.path().join("scan.csv")).unwrap();
    assert!(text.starts_with("zeta0_hz,zeta1_hz,contrast_db"));

    let o = run_in("scan-zeta", &qubit(), tmp.path(), &["--grid", "0:1:1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn calibrate_chain_round_trip_through_files() {
    let tmp = tempfile::tempdir().unwrap();
    let syn = tmp.path().join("syn");
    ok(&run_in("calibrate", &qubit(), &syn, &["--mode", "chain"]));
    check_manifest(&syn, "calibrate");
    let r = json(syn.join("calibration.json"));
    assert!((r["beta_over_sqrt_kappa"].as_f64().unwrap() - 1.0).abs() < 1e-9);

    let file = tmp.path().join("file");
    let drive = syn.join("drive.csv");
    let output = syn.join("output.csv");
    ok(&run_in(
        "calibrate",
        &qubit(),
        &file,
        &["--mode", "chain", "--input", drive.to_str().unwrap(), "--output", output.to_str().unwrap()],
    ));
    let r = json(file.join("calibration.json"));
    assert_eq!(r["synthetic"], false);
    assert!((r["beta_over_sqrt_kappa"].as_f64().unwrap() - 1.0).abs() < 1e-6);

    let noisy = tmp.path().join("noisy");
    ok(&run_in("calibrate", &qubit(), &noisy, &["--mode", "chain", "--snr-db", "40", "--seed", "2"]));
    let r = json(noisy.join("calibration.json"));
    assert!((r["beta_over_sqrt_kappa"].as_f64().unwrap() - 1.0).abs() < 1e-3);
}

#[test]
fn calibrate_acstark() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&run_in("calibrate", &qubit(), tmp.path(), &["--mode", "acstark", "--amplitudes", "0,500,1000,1500"]));
    let r = json(tmp.path().join("calibration.json"));
    let ppp = r["photons_per_pw"].as_f64().unwrap();
    assert!((ppp - 12.4).abs() < 0.01 * 12.4, "{ppp}");
    assert_eq!(r["nonlinear"], false);
    let text = std::fs::read_to_string(tmp.path().join("stark.csv")).unwrap();
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.json");
    assert_eq!(run_in("synth", &missing, tmp.path(), &[]).status.code(), Some(4));

    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, "{\"resonator\": {}}").unwrap();
    assert_eq!(run_in("synth", &bad, tmp.path(), &[]).status.code(), Some(2));

    assert_eq!(run_in("synth", &qubit(), tmp.path(), &["--tp-ns", "-5"]).status.code(), Some(2));

    // a silent drive cannot be fitted
    let zeros = tmp.path().join("zeros.csv");
    std::fs::write(&zeros, "t_ns,re,im\n0,0,0\n1,0,0\n2,0,0\n").unwrap();
    let z = zeros.to_str().unwrap();
    let o = run_in("calibrate", &qubit(), &tmp.path().join("z"), &["--mode", "chain", "--input", z, "--output", z]);
    assert_eq!(o.status.code(), Some(3));

    // output directory below a regular file
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    assert_eq!(run_in("synth", &qubit(), &blocker.join("out"), &[]).status.code(), Some(4));
}

#[test]
fn unknown_flags_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in("synth", &qubit(), tmp.path(), &["--colour", "blue"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--colour"));
    assert!(!tmp.path().join("manifest.json").exists());
}

#[test]
fn help_lists_every_flag() {
    let cases: &[(&str, &[&str])] = &[
        ("synth", &["--config", "--out-dir", "--kerr", "--iterations", "--order", "--tp-ns", "--peak-photons", "--dt-ns"]),
        (
            "simulate",
            &["--pulse", "--auto", "--conventional", "--exponent", "--tail-kappa", "--tp-ns", "--peak-photons", "--iterations"],
        ),
        ("shots", &["--n", "--seed", "--t1-us", "--no-t1", "--no-noise", "--tp-ns", "--peak-photons"]),
        ("sweep", &["--tp-list", "--mode", "--peak-photons", "--n", "--seed", "--dt-ns"]),
        ("scan-zeta", &["--grid", "--iterations", "--order", "--tp-ns", "--peak-photons"]),
        ("calibrate", &["--mode", "--input", "--output", "--snr-db", "--seed", "--branch", "--amplitudes"]),
    ];
    for (cmd, flags) in cases {
        let o = run(&[cmd, "--help"]);
        ok(&o);
        let text = String::from_utf8_lossy(&o.stdout);
        for f in *flags {
            assert!(text.contains(f), "{cmd} --help is missing {f}");
        }
    }
    let o = run(&["--version"]);
    ok(&o);
    assert!(String::from_utf8_lossy(&o.stdout).contains(env!("CARGO_PKG_VERSION")));
}
