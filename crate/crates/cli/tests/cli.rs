use std::path::Path;
use std::process::{Command as Process, Output};

use orbital_raman_cli::{apply_overrides, calfile, parse_config, run, CliError, Command, RunSpec};

fn bin() -> Process {
    Process::new(env!("CARGO_BIN_EXE_orbital-raman"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("run.json");
    std::fs::write(&path, body).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn empty_config_gives_defaults() {
    let spec = parse_config("{}").unwrap();
    let m = spec.model().unwrap();
    assert_eq!(m.energies.delta12, 4.31);
    assert_eq!(m.energies.big_delta, 0.57);
    assert_eq!(m.energies.small_delta, 0.05);
    let p = spec.pulse(&m).unwrap();
    assert_eq!(p.pump.fwhm, 8.49);
    assert!((p.pump.area - 1.93 * std::f64::consts::PI).abs() < 1e-12);
}

#[test]
fn hot_trion_needs_its_detuning() {
    let spec = parse_config(r#"{"system": {"kind": "four_level_hot"}}"#).unwrap();
    let err = spec.model().unwrap_err().to_string();
    assert!(err.contains("delta_hot_mev"), "{err}");
    let spec = parse_config(r#"{"system": {"kind": "four_level_hot", "delta_hot_mev": 1.5}}"#).unwrap();
    assert!(spec.model().is_ok());
}

#[test]
fn duplicate_and_unknown_keys_rejected() {
    let dup = parse_config(r#"{"seed": 1, "seed": 2}"#).unwrap_err().to_string();
    assert!(dup.contains("duplicate"), "{dup}");
    let unknown = parse_config(r#"{"pulse": {"colour": 1}}"#).unwrap_err().to_string();
    assert!(unknown.contains("colour"), "{unknown}");
}

#[test]
fn unit_suffix_mismatch_names_expected_key() {
    let e = parse_config(r#"{"system": {"delta12_ps": 4.31}}"#).unwrap_err().to_string();
    assert!(e.contains("unit-suffix") && e.contains("delta12_mev"), "{e}");
    let e = parse_config(r#"{"pulse": {"fwhm": 8.0}}"#).unwrap_err().to_string();
    assert!(e.contains("fwhm_ps"), "{e}");
}

#[test]
fn parse_errors_carry_position() {
    let e = parse_config("{\n  \"seed\": ,\n}").unwrap_err().to_string();
    assert!(e.contains("line 2"), "{e}");
}

#[test]
fn spec_round_trips() {
    let mut spec = parse_config(
        r#"{"command": "phase-area", "seed": 9, "system": {"kind": "four_level_high", "delta13_mev": 8.62, "mu5": 0.1},
            "axes": {"theta_pi": {"start": 0, "end": 1.5, "count": 7}, "phase_rad": {"values": [0, 1, 2]}},
            "noise": {}}"#,
    )
    .unwrap();
    spec.phase_area.interval_periods = 12;
    let text = serde_json::to_string(&spec).unwrap();
    assert_eq!(parse_config(&text).unwrap(), spec);
}

#[test]
fn overrides_take_precedence() {
    let spec = parse_config(r#"{"system": {"small_delta_mev": 0.1}}"#).unwrap();
    let o = apply_overrides(&spec, &["system.small_delta_mev=0.25".into(), "command=rabi".into()]).unwrap();
    assert_eq!(o.system.small_delta_mev, 0.25);
    assert_eq!(o.command, Some(Command::Rabi));
    let e = apply_overrides(&spec, &["system.delta12_thz=1".into()]).unwrap_err().to_string();
    assert!(e.contains("delta12_mev"), "{e}");
    assert!(apply_overrides(&spec, &["novalue".into()]).is_err());
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"command": "ramsey", "axes": {"interval_ps": {"start": 30, "end": 40, "count": 0}}}"#,
    );
    let o = bin().arg("--config").arg(&cfg).arg("--output-dir").arg(dir.path().join("out")).output().unwrap();
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("axes.interval_ps"), "{}", stderr(&o));

    let o = bin().arg("teleport").output().unwrap();
    assert_eq!(o.status.code(), Some(2));

    let cfg = write_config(dir.path(), r#"{"command": "map", "system": {"kind": "four_level_hot"}}"#);
    let o = bin().arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("delta_hot_mev"));
}

#[test]
fn validate_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = bin().arg("validate").arg("--output-dir").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(!out.exists());
}

fn rabi_run(dir: &Path) -> (Vec<u8>, serde_json::Value) {
    let o = bin()
        .arg("rabi")
        .arg("--output-dir")
        .arg(dir)
        .args(["--set", r#"axes.stokes_area_pi={"start": 0, "end": 3, "count": 7}"#])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read(dir.join("rabi.csv")).unwrap();
    let summary = serde_json::from_slice(&std::fs::read(dir.join("rabi_summary.json")).unwrap()).unwrap();
    (csv, summary)
}

#[test]
fn rabi_outputs_are_deterministic_and_well_formed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (csv_a, sum_a) = rabi_run(a.path());
    let (csv_b, sum_b) = rabi_run(b.path());
    assert_eq!(csv_a, csv_b);
    assert_eq!(sum_a["config_hash"], sum_b["config_hash"]);
    assert_eq!(sum_a["results"], sum_b["results"]);

    let mut reader = csv::Reader::from_reader(csv_a.as_slice());
    let headers = reader.headers().unwrap().clone();
    assert_eq!(headers.iter().collect::<Vec<_>>(), ["stokes_area_rad", "stokes_amplitude_sqrt_nw", "P_h2"]);
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 7);
    // fixed nine-decimal formatting
    assert!(rows.iter().all(|r| r.iter().all(|f| f.split('.').nth(1).map_or(false, |d| d.len() == 9))));
    let p: f64 = rows[0][2].parse().unwrap();
    assert!(p <= 0.02);
    assert!(sum_a["wall_time_s"].is_number());
    assert_eq!(sum_a["seed"], 0);
}

#[test]
fn map_rows_match_axis_product() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = RunSpec { command: Some(Command::Map), output_dir: dir.path().to_path_buf(), ..RunSpec::default() };
    spec = apply_overrides(
        &spec,
        &[
            r#"axes.delta_mev={"values": [0.2, 0.25]}"#.into(),
            r#"axes.stokes_area_pi={"start": 1.8, "end": 2.2, "count": 3}"#.into(),
        ],
    )
    .unwrap();
    let out = run(&spec).unwrap();
    assert_eq!(out.files.len(), 2);
    let mut reader = csv::Reader::from_path(dir.path().join("map.csv")).unwrap();
    assert_eq!(reader.headers().unwrap().len(), 3);
    assert_eq!(reader.records().count(), 6);
    assert!(out.summary["results"]["extrema"]["max"]["P_h2"].as_f64().unwrap() > 0.9);
}

#[test]
fn calibrate_finds_three_level_pi_condition_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let spec = RunSpec { command: Some(Command::Calibrate), output_dir: dir.path().to_path_buf(), ..RunSpec::default() };
    let out = run(&spec).unwrap();
    let d = out.summary["results"]["delta_star_mev"].as_f64().unwrap();
    assert!((d - 0.25).abs() <= 0.03, "{d}");

    let text = std::fs::read_to_string(dir.path().join("calibration.txt")).unwrap();
    let cal = calfile::from_text(&text).unwrap();
    assert_eq!(calfile::to_text(&cal), text);

    // a written calibration drives synthesis without a new search
    let mut spec = spec;
    spec.command = Some(Command::Synthesize);
    spec.calibration.file = Some(dir.path().join("calibration.txt"));
    let synth = run(&spec).unwrap();
    assert_eq!(synth.summary["results"]["warning"], false);
    assert!((synth.summary["results"]["transfer"].as_f64().unwrap() - 0.5).abs() < 0.03);

    // and is refused for a different system
    spec.system.delta12_mev = 4.0;
    assert!(matches!(run(&spec), Err(CliError::Config(_))));
}

#[test]
fn calibration_text_rejects_garbage() {
    assert!(calfile::from_text("kind = three_level\n").is_err());
    assert!(calfile::from_text("kind = nine_level\n").is_err());
    assert!(calfile::from_text("delta_star_mev = 1\ndelta_star_mev = 2\n").is_err());
}
