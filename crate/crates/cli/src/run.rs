//! Command execution and artifact writing.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

use orbital_raman::analysis::{fft_spectrum, fit_auto, fringe_amplitude, FitModel, FitResult};
use orbital_raman::experiments::{area_to_amplitude, commensurate_interval, fingerprint};
use orbital_raman::optimizer::{system_hash, ROTATION_TOLERANCE};
use orbital_raman::*;

use crate::calfile;
use crate::config::{AxisSpec, Command, Format, InnerKind, RunSpec};
use crate::CliError;

/// Files written by a run.
#[derive(Debug, Default)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub summary: Value,
}

struct Data {
    headers: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Data {
    fn from_table(t: &SweepTable) -> Self {
        let mut headers: Vec<String> = t.axes.iter().map(|a| a.name.clone()).collect();
        headers.push(t.observable.clone());
        let rows = (0..t.values.len())
            .map(|k| {
                let mut row = t.coordinates(&t.unflatten(k));
                row.push(t.values[k]);
                row
            })
            .collect();
        Self { headers, rows }
    }
}

fn numerical(e: Error) -> CliError {
    match e {
        Error::InvalidParameter { .. } | Error::MissingConfig(_) | Error::Unsupported(_) | Error::UnknownLabel(_) => {
            CliError::Config(e.to_string())
        }
        other => CliError::Numerical(other.to_string()),
    }
}

fn extrema(t: &SweepTable) -> Value {
    let (imax, vmax) = t.argmax();
    let (imin, vmin) = t.argmin();
    let names: Vec<&str> = t.axes.iter().map(|a| a.name.as_str()).collect();
    let point = |idx: &[usize], v: f64| {
        let mut m = serde_json::Map::new();
        for (n, c) in names.iter().zip(t.coordinates(idx)) {
            m.insert(n.to_string(), json!(c));
        }
        m.insert(t.observable.clone(), json!(v));
        Value::Object(m)
    };
    json!({ "max": point(&imax, vmax), "min": point(&imin, vmin) })
}

fn fit_json(f: &FitResult) -> Value {
    let mut m = serde_json::Map::new();
    m.insert("model".into(), json!(f.model));
    for (k, n) in f.names.iter().enumerate() {
        m.insert(n.clone(), json!(f.params[k]));
        m.insert(format!("{n}_uncertainty"), json!(f.param_uncertainties[k]));
    }
    m.insert("residual_norm".into(), json!(f.residual_norm));
    m.insert("converged".into(), json!(f.converged));
    Value::Object(m)
}

fn diagnostics(t: &SweepTable) -> Value {
    json!(t.diagnostics)
}

fn write_data(dir: &Path, stem: &str, format: Format, data: &Data) -> Result<PathBuf, CliError> {
    let path = match format {
        Format::Csv => {
            let path = dir.join(format!("{stem}.csv"));
            let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let io = |e: csv::Error| CliError::Config(format!("writing {stem}.csv: {e}"));
            w.write_record(&data.headers).map_err(io)?;
            for row in &data.rows {
                w.write_record(row.iter().map(|v| format!("{v:.9}"))).map_err(io)?;
            }
            w.flush().map_err(|e| CliError::Config(format!("writing {stem}.csv: {e}")))?;
            path
        }
        Format::Json => {
            let path = dir.join(format!("{stem}.json"));
            let doc = json!({ "columns": data.headers, "rows": data.rows });
            write_text(&path, &serde_json::to_string_pretty(&doc).unwrap())?;
            path
        }
    };
    Ok(path)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn base_config(spec: &RunSpec, command: Command) -> Result<ExperimentConfig, CliError> {
    let model = spec.model()?;
    let cfg = ExperimentConfig {
        pulse: spec.pulse(&model)?,
        model,
        integrator: spec.integrator(),
        dissipation: spec.dissipation(command),
        noise: spec.noise(),
    };
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

fn calibration(spec: &RunSpec, cfg: &ExperimentConfig) -> Result<CalibrationTable, CliError> {
    if let Some(path) = &spec.calibration.file {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let cal = calfile::from_text(&text)?;
        if cal.system_hash != system_hash(&cfg.model) {
            return Err(CliError::Config(format!("{}: calibration was built for another system", path.display())));
        }
        return Ok(cal);
    }
    // the π condition is a property of the coherent dynamics
    let closed = ExperimentConfig { dissipation: Dissipation::closed(), ..cfg.clone() };
    let deltas = spec.calibration.delta_mev.resolve("calibration.delta_mev", "delta_mev", 1.0)?;
    let areas = spec.calibration.stokes_area_pi.resolve("calibration.stokes_area_pi", "stokes_area_rad", PI)?;
    find_pi_condition(&closed, &deltas, &areas).map_err(numerical)
}

fn calibration_json(cal: &CalibrationTable) -> Value {
    json!({
        "delta_star_mev": cal.delta_star,
        "stokes_area_pi_rad": cal.stokes_area_pi,
        "stokes_area_pi_units_of_pi": cal.stokes_area_pi / PI,
        "pump_area_rad": cal.pump_area,
        "transfer_at_pi": cal.transfer_at_pi,
        "system_hash": cal.system_hash,
    })
}

fn ramsey_fits(t: &SweepTable) -> Value {
    let intervals = &t.axes[1].values;
    let mut fits = Vec::new();
    for (k, phi) in t.axes[0].values.iter().enumerate() {
        let row = t.row(&[k]);
        let fringe = fringe_amplitude(intervals, row).ok();
        let peak = fft_spectrum(intervals, row).ok().map(|s| s.peak_frequency);
        fits.push(json!({
            "phase_rad": phi,
            "fringe_frequency_thz": fringe.as_ref().map(|f| f.frequency),
            "fringe_amplitude": fringe.as_ref().map(|f| f.amplitude),
            "fringe_phase_rad": fringe.as_ref().map(|f| f.phase),
            "fft_peak_thz": peak,
        }));
    }
    Value::Array(fits)
}

/// First local maximum of a 1-D table.
fn first_maximum(t: &SweepTable) -> Value {
    let v = &t.values;
    let k = (1..v.len().saturating_sub(1)).find(|&k| v[k] >= v[k - 1] && v[k] > v[k + 1]);
    match k {
        Some(k) => json!({ t.axes[0].name.as_str(): t.axes[0].values[k], t.observable.as_str(): v[k] }),
        None => Value::Null,
    }
}

/// Executes `spec`, writing artifacts into `spec.output_dir`.
pub fn run(spec: &RunSpec) -> Result<RunOutcome, CliError> {
    let started = Instant::now();
    let command = spec.command.ok_or_else(|| CliError::Config("no command given".into()))?;
    let cfg = base_config(spec, command)?;
    if command == Command::Validate {
        return Ok(RunOutcome { files: Vec::new(), summary: json!({ "command": "validate", "config": spec, "valid": true }) });
    }
    let dir = &spec.output_dir;
    fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("output_dir {}: {e}", dir.display())))?;

    let mut files = Vec::new();
    let mut results = serde_json::Map::new();
    let stem = command.name().replace('-', "_");
    let put_table = |t: &SweepTable, files: &mut Vec<PathBuf>| -> Result<(), CliError> {
        files.push(write_data(dir, &stem, spec.format, &Data::from_table(t))?);
        Ok(())
    };

    match command {
        Command::Validate => unreachable!(),
        Command::Rabi => {
            let axis = spec.axis("stokes_area_pi", AxisSpec::range(0.0, 4.0, 81))?;
            let t = rabi_sweep(&cfg, &axis).map_err(numerical)?;
            let mut data = Data::from_table(&t);
            data.headers.insert(1, "stokes_amplitude_sqrt_nw".into());
            for row in &mut data.rows {
                row.insert(1, area_to_amplitude(row[0]));
            }
            files.push(write_data(dir, &stem, spec.format, &data)?);
            results.insert("extrema".into(), extrema(&t));
            results.insert("first_maximum".into(), first_maximum(&t));
            results.insert("diagnostics".into(), diagnostics(&t));
            results.insert("table_hash".into(), json!(t.metadata.config_hash));
        }
        Command::Map | Command::HighOrbital => {
            let deltas = spec.axis("delta_mev", AxisSpec::range(0.0, 0.5, 41))?;
            let areas = spec.axis("stokes_area_pi", AxisSpec::range(1.0, 3.2, 45))?;
            let t = if command == Command::Map {
                detuning_area_map(&cfg, &deltas, &areas)
            } else {
                high_orbital_map(&cfg, &deltas, &areas)
            }
            .map_err(numerical)?;
            put_table(&t, &mut files)?;
            results.insert("extrema".into(), extrema(&t));
            results.insert("diagnostics".into(), diagnostics(&t));
            results.insert("table_hash".into(), json!(t.metadata.config_hash));
        }
        Command::Delay => {
            let delays = spec.axis("delay_ps", AxisSpec::range(-30.0, 30.0, 61))?;
            let t = delay_scan(&cfg, &delays).map_err(numerical)?;
            put_table(&t, &mut files)?;
            results.insert("extrema".into(), extrema(&t));
            results.insert("gaussian_fit".into(), fit_auto(FitModel::Gaussian, &delays.values, &t.values).ok().as_ref().map_or(Value::Null, fit_json));
            results.insert("diagnostics".into(), diagnostics(&t));
            results.insert("table_hash".into(), json!(t.metadata.config_hash));
        }
        Command::Ramsey => {
            let intervals = spec.axis("interval_ps", AxisSpec::range(30.0, 80.0, 501))?;
            let phases = spec.axis("phase_rad", AxisSpec::list(vec![0.0]))?;
            let cal = calibration(spec, &cfg)?;
            let t = ramsey_scan(&cfg, &cal, &intervals, &phases).map_err(numerical)?;
            put_table(&t, &mut files)?;
            results.insert("calibration".into(), calibration_json(&cal));
            results.insert("extrema".into(), extrema(&t));
            results.insert("fringes".into(), ramsey_fits(&t));
            results.insert("diagnostics".into(), diagnostics(&t));
            results.insert("table_hash".into(), json!(t.metadata.config_hash));
        }
        Command::Decay => {
            let cal = calibration(spec, &cfg)?;
            let d = &spec.decay;
            let scan = coherence_decay_scan(&cfg, &cal, &d.coarse_intervals_ps, d.fine_span_ps, d.fine_step_ps)
                .map_err(numerical)?;
            let data = Data {
                headers: vec!["interval_ps".into(), "fringe_amplitude".into()],
                rows: scan.points.iter().map(|p| vec![p.interval, p.amplitude.unwrap_or(f64::NAN)]).collect(),
            };
            files.push(write_data(dir, &stem, spec.format, &data)?);
            let failures: Vec<Value> = scan
                .points
                .iter()
                .filter(|p| p.error.is_some())
                .map(|p| json!({ "interval_ps": p.interval, "error": p.error }))
                .collect();
            results.insert("calibration".into(), calibration_json(&cal));
            results.insert("t2_ps".into(), json!(scan.t2));
            results.insert("exp_fit".into(), scan.fit.as_ref().map_or(Value::Null, fit_json));
            results.insert("failed_intervals".into(), Value::Array(failures));
        }
        Command::PhaseArea => {
            let thetas = spec.axis("theta_pi", AxisSpec::range(0.0, 1.875, 16))?;
            let phases = spec.axis("phase_rad", AxisSpec::range(0.0, 2.0 * PI, 17))?;
            let cal = calibration(spec, &cfg)?;
            let interval = commensurate_interval(&cfg.model, spec.phase_area.interval_periods);
            let t = phase_area_map(&cfg, &cal, &thetas, &phases, interval).map_err(numerical)?;
            put_table(&t, &mut files)?;
            results.insert("calibration".into(), calibration_json(&cal));
            results.insert("interval_ps".into(), json!(interval));
            results.insert("extrema".into(), extrema(&t));
            results.insert("diagnostics".into(), diagnostics(&t));
            results.insert("table_hash".into(), json!(t.metadata.config_hash));
        }
        Command::T1 => {
            let delays = spec.axis("delay_ps", AxisSpec::range(40.0, 800.0, 77))?;
            let cal = calibration(spec, &cfg)?;
            let scan = t1_probe(&cfg, &cal, &delays).map_err(numerical)?;
            put_table(&scan.table, &mut files)?;
            results.insert("calibration".into(), calibration_json(&cal));
            results.insert("t1_ps".into(), json!(scan.t1));
            results.insert("exp_fit".into(), scan.fit.as_ref().map_or(Value::Null, fit_json));
            results.insert("diagnostics".into(), diagnostics(&scan.table));
        }
        Command::NoiseMc => {
            let mut cfg = cfg;
            if cfg.noise.is_none() {
                cfg.noise = Some(orbital_raman::drive::NoiseSpec { seed: spec.seed, ..Default::default() });
            }
            let inner = match spec.noise_mc.inner {
                InnerKind::Rabi => InnerExperiment::Rabi { stokes_areas: spec.axis("stokes_area_pi", AxisSpec::range(0.0, 4.0, 81))? },
                InnerKind::Map => InnerExperiment::DetuningArea {
                    deltas: spec.axis("delta_mev", AxisSpec::range(0.0, 0.5, 41))?,
                    stokes_areas: spec.axis("stokes_area_pi", AxisSpec::range(1.0, 3.2, 45))?,
                },
                InnerKind::Delay => InnerExperiment::Delay { delays: spec.axis("delay_ps", AxisSpec::range(-30.0, 30.0, 61))? },
                InnerKind::Ramsey => {
                    let intervals = spec.axis("interval_ps", AxisSpec::range(30.0, 40.0, 201))?;
                    let phases = spec.axis("phase_rad", AxisSpec::list(vec![0.0]))?;
                    InnerExperiment::Ramsey { cal: calibration(spec, &cfg)?, intervals, phases }
                }
                InnerKind::PhaseArea => {
                    let thetas = spec.axis("theta_pi", AxisSpec::range(0.0, 1.875, 16))?;
                    let phases = spec.axis("phase_rad", AxisSpec::range(0.0, 2.0 * PI, 17))?;
                    let interval = commensurate_interval(&cfg.model, spec.phase_area.interval_periods);
                    InnerExperiment::PhaseArea { cal: calibration(spec, &cfg)?, thetas, phases, interval }
                }
            };
            let t = noise_monte_carlo(&cfg, &inner, spec.noise_mc.samples).map_err(numerical)?;
            put_table(&t, &mut files)?;
            if let InnerExperiment::Ramsey { .. } = inner {
                results.insert("fringes".into(), ramsey_fits(&t));
            }
            results.insert("samples".into(), json!(spec.noise_mc.samples));
            results.insert("extrema".into(), extrema(&t));
            results.insert("diagnostics".into(), diagnostics(&t));
            results.insert("table_hash".into(), json!(t.metadata.config_hash));
        }
        Command::Calibrate => {
            let cal = calibration(spec, &cfg)?;
            let path = dir.join("calibration.txt");
            write_text(&path, &calfile::to_text(&cal))?;
            files.push(path);
            let data = Data {
                headers: vec!["stokes_area_rad".into(), "transfer".into(), "azimuth_offset_rad".into()],
                rows: cal.rotation_curve.iter().map(|p| vec![p.stokes_area, p.transfer, p.azimuth_offset]).collect(),
            };
            files.push(write_data(dir, "rotation_curve", spec.format, &data)?);
            results.insert("calibration".into(), calibration_json(&cal));
            results.insert("delta_star_mev".into(), json!(cal.delta_star));
            results.insert("refinement_iterations".into(), json!(cal.refinement_iterations));
        }
        Command::Synthesize => {
            let cal = calibration(spec, &cfg)?;
            let theta = spec.rotation.theta_pi * PI;
            let check = verify_rotation(&cfg, &cal, theta, spec.rotation.phi_rad).map_err(numerical)?;
            let p = &check.pulse;
            let data = Data {
                headers: vec![
                    "theta_rad".into(),
                    "phi_rad".into(),
                    "pump_area_rad".into(),
                    "stokes_envelope_area_rad".into(),
                    "stokes_phase_rad".into(),
                    "transfer".into(),
                    "expected".into(),
                ],
                rows: vec![vec![theta, check.phi, p.pump.area, p.stokes.area, p.relative_phase(), check.transfer, check.expected]],
            };
            files.push(write_data(dir, &stem, spec.format, &data)?);
            results.insert("calibration".into(), calibration_json(&cal));
            results.insert("transfer".into(), json!(check.transfer));
            results.insert("expected".into(), json!(check.expected));
            results.insert("azimuth_rad".into(), json!(check.azimuth));
            results.insert("warning".into(), json!(check.warning));
            results.insert("tolerance".into(), json!(ROTATION_TOLERANCE));
            if check.warning {
                eprintln!(
                    "warning: rotation transfer {:.4} differs from sin²(θ/2) = {:.4} by more than {ROTATION_TOLERANCE}",
                    check.transfer, check.expected
                );
            }
        }
    }

    // the output location does not change the run
    let hashed = RunSpec { output_dir: PathBuf::new(), ..spec.clone() };
    let summary = json!({
        "command": command.name(),
        "config": spec,
        "config_hash": fingerprint(&hashed),
        "seed": spec.seed,
        "results": Value::Object(results),
        "wall_time_s": started.elapsed().as_secs_f64(),
    });
    let path = dir.join(format!("{stem}_summary.json"));
    write_text(&path, &serde_json::to_string_pretty(&summary).unwrap())?;
    files.push(path);
    Ok(RunOutcome { files, summary })
}
