//! End-to-end checks of the command-line interface: file outputs, exit
//! codes, manifest replay, plotting.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_starkecho"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn");
    assert!(
        out.status.success(),
        "command {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(args: &[&str]) -> i32 {
    bin().args(args).output().expect("spawn").status.code().unwrap_or(-1)
}

#[test]
fn run_preset_writes_trace_manifest_echoes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    run_ok(&["run", "--preset", "fig4a", "--out", out.to_str().unwrap()]);

    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 2502); // header + 2501 samples
    assert!(trace.starts_with("time_us,re12,im12,re13,im13,re23,im23,p11,p22,p33"));

    let echoes = fs::read_to_string(out.join("echoes.json")).unwrap();
    assert!(echoes.contains("\"emissive\""));
    assert!(out.join("manifest.json").exists());
    assert!(!out.join("groups.csv").exists());
}

#[test]
fn run_reports_expected_echo_classification() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s1");
    let output = run_ok(&["run", "--preset", "figS1a", "--out", out.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("e1: emissive at 13.01 us"), "stdout: {stdout}");
    assert!(stdout.contains("e2: absorptive at 21.00 us"), "stdout: {stdout}");
}

#[test]
fn per_group_flag_emits_groups_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    run_ok(&["run", "--preset", "figS2_resonant", "--out", out.to_str().unwrap(), "--per-group"]);
    let groups = fs::read_to_string(out.join("groups.csv")).unwrap();
    let header = groups.lines().next().unwrap();
    assert!(header.starts_with("time_us,"));
    assert_eq!(header.split(',').count(), 1 + 2 * 201);
}

#[test]
fn missing_sequence_file_exits_2_and_names_file() {
    let out = bin().args(["run", "missing.seq"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.seq"));
}

#[test]
fn bad_sequence_text_exits_2_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.seq");
    fs::write(
        &path,
        "dt 0.01us\nend 3us\nensemble fwhm=850kHz spacing=10kHz groups=1\n\
         pulse name=D channel=sideways at=1us dur=0.1us rabi=1MHz detune=0MHz\n",
    )
    .unwrap();
    let out = bin().args(["run", path.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4"), "stderr: {err}");
}

#[test]
fn manifest_replay_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a");
    let second = dir.path().join("b");
    run_ok(&["run", "--preset", "fig3a", "--out", first.to_str().unwrap()]);
    run_ok(&[
        "run",
        "--from-manifest",
        first.join("manifest.json").to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    let a = fs::read(first.join("trace.csv")).unwrap();
    let b = fs::read(second.join("trace.csv")).unwrap();
    assert_eq!(a, b, "replayed trace.csv differs");
}

#[test]
fn serial_and_parallel_traces_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let par = dir.path().join("par");
    let ser = dir.path().join("ser");
    run_ok(&["run", "--preset", "fig1b", "--out", par.to_str().unwrap()]);
    run_ok(&["run", "--preset", "fig1b", "--out", ser.to_str().unwrap(), "--serial"]);
    let a = fs::read(par.join("trace.csv")).unwrap();
    let b = fs::read(ser.join("trace.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn preset_prints_canonical_text_and_round_trips() {
    let out = run_ok(&["preset", "fig4a"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("dt 0.01us\nend 25us\n"));
    assert!(text.contains("pulse name=C channel=control at=17.1us dur=0.2us rabi=2.5MHz"));

    // feed it back through a file
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fig4a.seq");
    fs::write(&path, &text).unwrap();
    let outdir = dir.path().join("run");
    run_ok(&["run", path.to_str().unwrap(), "--out", outdir.to_str().unwrap()]);
}

#[test]
fn oracle_text_and_json() {
    let out = run_ok(&["oracle", "--preset", "fig3a"]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("e2: absorptive at 21 us"), "stdout: {stdout}");
    assert!(stdout.contains("phase ledger"));

    let out = run_ok(&["oracle", "--preset", "fig4a", "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let e2 = &v["echoes"][1];
    assert_eq!(e2["character"], "emissive");
    assert_eq!(e2["time"], 21.0);
}

#[test]
fn oracle_rejects_unclassifiable_pulse() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("odd.seq");
    // 0.7 pi probe pulse: not a data, rephasing, or identity area
    fs::write(
        &path,
        "dt 0.01us\nend 25us\nensemble fwhm=850kHz spacing=10kHz groups=201\n\
         pulse name=D channel=probe at=1us dur=0.01us rabi=17.5MHz detune=0MHz\n\
         pulse name=R1 channel=probe at=7us dur=0.01us rabi=25MHz detune=0MHz\n",
    )
    .unwrap();
    let out = bin().args(["oracle", path.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unclassifiable"));
}

#[test]
fn compare_passes_on_all_presets() {
    for name in ["figS1a", "fig1b", "fig3a", "fig3b", "fig4a", "figS2_resonant", "figS2_detuned"] {
        assert_eq!(exit_code(&["compare", "--preset", name]), 0, "compare failed for {name}");
    }
}

#[test]
fn compare_balanced_preset_notes_bare_match() {
    let out = run_ok(&["compare", "--preset", "fig3b"]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("balanced: matches bare"), "stdout: {stdout}");
}

#[test]
fn compare_detects_mismatch_with_exit_1() {
    // a pi-area control pulse is not a valid flop: classification error, exit 2
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tricky.seq");
    fs::write(
        &path,
        "dt 0.01us\nend 25us\nensemble fwhm=850kHz spacing=10kHz groups=201\n\
         pulse name=D channel=probe at=1us dur=0.01us rabi=12.5MHz detune=0MHz\n\
         pulse name=R1 channel=probe at=7us dur=0.01us rabi=25MHz detune=0MHz\n\
         pulse name=R2 channel=probe at=17us dur=0.01us rabi=25MHz detune=0MHz\n\
         pulse name=C channel=control at=17.1us dur=0.2us rabi=1.25MHz detune=0MHz\n",
    )
    .unwrap();
    let out = bin().args(["compare", path.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // an honest oracle/simulation mismatch: the group-delta control
    // convention pauses the probe coherence clock during C and delays e2 by
    // half the control duration, which the phase ledger does not model
    let out = bin()
        .args(["compare", "--preset", "fig4a", "--control-group-delta"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "expected time mismatch under group-delta control");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("FAIL e2"), "stdout: {stdout}");
}

#[test]
fn sweep_writes_expected_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sw");
    // small ensemble via a sequence file to keep this test quick
    let path = dir.path().join("base.seq");
    let preset_text = String::from_utf8(run_ok(&["preset", "fig1b"]).stdout).unwrap();
    let small = preset_text.replace("groups=201", "groups=21").replace("spacing=10kHz", "spacing=100kHz");
    fs::write(&path, small).unwrap();
    run_ok(&[
        "sweep",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--phi",
        "0:pi:33",
    ]);
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 34); // header + 33 rows
    assert!(text.starts_with("phi_rad,amplitude,intensity,amplitude_homogeneous"));

    // phi = pi/2 row sits below its own bare reference scale
    let rows: Vec<&str> = text.lines().skip(1).collect();
    let cols: Vec<f64> = rows[16].split(',').map(|v| v.parse().unwrap()).collect();
    assert!((cols[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
    let first: Vec<f64> = rows[0].split(',').map(|v| v.parse().unwrap()).collect();
    assert!(cols[1].abs() < 0.05 * first[1].abs(), "pi/2 amplitude not silenced");
}

#[test]
fn plot_is_deterministic_and_checks_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    run_ok(&["run", "--preset", "fig1b", "--out", out.to_str().unwrap()]);
    let trace = out.join("trace.csv");
    let svg1 = dir.path().join("a.svg");
    let svg2 = dir.path().join("b.svg");
    let manifest = out.join("manifest.json");
    for target in [&svg1, &svg2] {
        run_ok(&[
            "plot",
            trace.to_str().unwrap(),
            "--columns",
            "im12,re12",
            "--manifest",
            manifest.to_str().unwrap(),
            "--out",
            target.to_str().unwrap(),
        ]);
    }
    let a = fs::read(&svg1).unwrap();
    let b = fs::read(&svg2).unwrap();
    assert_eq!(a, b, "plot output not deterministic");
    let svg = String::from_utf8(a).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(svg.contains("fill-opacity")); // pulse shading

    // schema errors
    let csv = dir.path().join("nox.csv");
    fs::write(&csv, "a,b\n1,2\n").unwrap();
    let out = bin().args(["plot", csv.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema"));
    let out = bin()
        .args(["plot", trace.to_str().unwrap(), "--columns", "nonexistent"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gamma_file_switches_to_rk4_and_damps_echo() {
    let dir = tempfile::tempdir().unwrap();
    let gpath = dir.path().join("gamma.csv");
    // excited-state decay at 0.1/us: rho12 damps at 0.05/us, so the 12 us
    // storage to e1 costs a factor e^{-0.6} ~ 0.55
    fs::write(&gpath, "0,0,0\n0,0.1,0\n0,0,0\n").unwrap();
    let out = dir.path().join("damped");
    run_ok(&[
        "run",
        "--preset",
        "figS1a",
        "--out",
        out.to_str().unwrap(),
        "--gamma",
        gpath.to_str().unwrap(),
    ]);
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"rk4\""));
    assert!(manifest.contains("\"gamma\""));
    let echoes: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("echoes.json")).unwrap()).unwrap();
    let amp = echoes[0]["amplitude"].as_f64().unwrap();
    assert!(
        (0.15..0.35).contains(&amp),
        "expected a visibly damped echo near 0.5 * e^-0.6, got {amp}"
    );

    // exact method with decay must be rejected
    let out2 = bin()
        .args([
            "run",
            "--preset",
            "figS1a",
            "--out",
            dir.path().join("x").to_str().unwrap(),
            "--gamma",
            gpath.to_str().unwrap(),
            "--method",
            "exact",
        ])
        .output()
        .unwrap();
    assert_eq!(out2.status.code(), Some(2));
}
