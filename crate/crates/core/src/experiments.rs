//! Parameter sweeps reproducing the Rabi, detuning, delay, Ramsey,
//! phase–area, lifetime and noise experiments.
//!
//! Every sweep starts from |h1⟩ and records the final population of the
//! Raman target level (C_h2, or the h3 population for the high-orbital
//! system). Grid points are evaluated in parallel and merged by index, so a
//! table depends only on its inputs.

use std::f64::consts::PI;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algebra::DensityMatrix;
use crate::analysis::{fit_auto, fringe_amplitude, harmonic_fit, FitModel, FitResult};
use crate::drive::{perturb, NoiseSpec, PulseSequence, RamanPulse, DEFAULT_FWHM_PS};
use crate::engine::{simulate, IntegratorConfig, SimDiagnostics};
use crate::error::{Error, Result};
use crate::optimizer::{synthesize_rotation, CalibrationTable};
use crate::system::{Dissipation, SystemModel};
use crate::units::{mev_to_rad_per_ps, H_MEV_PS};

/// Default pump area, rad.
pub const DEFAULT_PUMP_AREA: f64 = 1.93 * PI;

/// Stokes amplitude (√nW) corresponding to an area of 1.94π.
pub const AMPLITUDE_PER_AREA: f64 = 30.0 / (1.94 * PI);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: SystemModel,
    /// Pulse pair used where a sweep does not override it. Its Stokes area is
    /// the envelope area; the transition area is `stokes_dipole × area`.
    pub pulse: RamanPulse,
    pub integrator: IntegratorConfig,
    pub dissipation: Dissipation,
    pub noise: Option<NoiseSpec>,
}

impl ExperimentConfig {
    /// Pulses of the default width and pump area, Stokes area 2.29π on its
    /// transition, closed system.
    pub fn new(model: SystemModel) -> Result<Self> {
        model.validate()?;
        let mut cfg = Self {
            model,
            pulse: RamanPulse::new(0.0, DEFAULT_FWHM_PS, DEFAULT_PUMP_AREA, 0.0, 0.0)?,
            integrator: IntegratorConfig::default(),
            dissipation: Dissipation::closed(),
            noise: None,
        };
        cfg.pulse.stokes.area = cfg.stokes_envelope_area(2.29 * PI)?;
        Ok(cfg)
    }

    /// Envelope area that gives transition area `theta_s` on the Stokes leg.
    pub fn stokes_envelope_area(&self, theta_s: f64) -> Result<f64> {
        let mu = self.model.stokes_dipole();
        if mu <= 0.0 {
            return Err(Error::InvalidParameter { name: "stokes_dipole", reason: "the Stokes transition is dark".into() });
        }
        Ok(theta_s / mu)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.pulse.validate()?;
        self.integrator.validate()?;
        if let Some(n) = &self.noise {
            n.validate()?;
        }
        for (name, g) in [("gamma1", self.dissipation.gamma1), ("gamma2", self.dissipation.gamma2)] {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(Error::InvalidParameter { name, reason: format!("{g} must be >= 0") });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub values: Vec<f64>,
}

impl Axis {
    pub fn new(name: &str, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter { name: "axis", reason: format!("axis `{name}` is empty") });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter { name: "axis", reason: format!("axis `{name}` has non-finite values") });
        }
        Ok(Self { name: name.to_string(), values })
    }

    /// `count` evenly spaced values from `start` to `end` inclusive.
    pub fn linspace(name: &str, start: f64, end: f64, count: usize) -> Result<Self> {
        let values = match count {
            0 => Vec::new(),
            1 => vec![start],
            n => (0..n).map(|k| start + (end - start) * k as f64 / (n - 1) as f64).collect(),
        };
        Self::new(name, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepMetadata {
    /// SHA-256 of the sweep's inputs.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub samples: usize,
    pub runtime_s: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepDiagnostics {
    pub max_trace_defect: f64,
    pub min_eigenvalue: f64,
    pub max_purity_change: f64,
}

impl SweepDiagnostics {
    fn absorb(&mut self, d: &SimDiagnostics) {
        self.max_trace_defect = self.max_trace_defect.max(d.max_trace_defect).max(d.final_trace_defect);
        self.min_eigenvalue = self.min_eigenvalue.min(d.min_eigenvalue);
        self.max_purity_change = self.max_purity_change.max(d.max_purity_change);
    }
}

/// Observable on a rectangular grid; the last axis varies fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axes: Vec<Axis>,
    pub observable: String,
    pub values: Vec<f64>,
    pub metadata: SweepMetadata,
    pub diagnostics: SweepDiagnostics,
}

impl SweepTable {
    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Axis::len).collect()
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.axes).fold(0, |acc, (i, a)| acc * a.len() + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.values[self.flat_index(idx)]
    }

    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        for (k, a) in self.axes.iter().enumerate().rev() {
            idx[k] = flat % a.len();
            flat /= a.len();
        }
        idx
    }

    /// First strict maximum in storage order.
    pub fn argmax(&self) -> (Vec<usize>, f64) {
        let mut best = 0;
        for (k, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = k;
            }
        }
        (self.unflatten(best), self.values[best])
    }

    pub fn argmin(&self) -> (Vec<usize>, f64) {
        let mut best = 0;
        for (k, v) in self.values.iter().enumerate() {
            if *v < self.values[best] {
                best = k;
            }
        }
        (self.unflatten(best), self.values[best])
    }

    /// Coordinates of a grid point.
    pub fn coordinates(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().zip(&self.axes).map(|(i, a)| a.values[*i]).collect()
    }

    /// Values along the last axis at fixed leading indices.
    pub fn row(&self, leading: &[usize]) -> &[f64] {
        let n = self.axes.last().map_or(0, Axis::len);
        let mut idx = leading.to_vec();
        idx.push(0);
        let start = self.flat_index(&idx);
        &self.values[start..start + n]
    }
}

/// Hex SHA-256 of a value's JSON form.
pub fn fingerprint<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("configuration types always serialize");
    hex::encode(Sha256::digest(bytes))
}

/// Pulse sequences of one sweep, one per grid point.
struct Plan {
    name: &'static str,
    model: SystemModel,
    axes: Vec<Axis>,
    sequences: Vec<PulseSequence>,
}

fn run_point(
    model: &SystemModel,
    seq: &PulseSequence,
    dissipation: &Dissipation,
    integrator: &IntegratorConfig,
) -> Result<(f64, SimDiagnostics)> {
    let rho0 = DensityMatrix::basis_state(model.dim(), 0);
    let cfg = IntegratorConfig { sample_times: Vec::new(), ..integrator.clone() };
    let res = simulate(model, seq, dissipation, &rho0, &cfg)?;
    let q = model.kind.target_index();
    Ok((res.final_state()[(q, q)].re, res.diagnostics))
}

fn execute(cfg: &ExperimentConfig, plan: Plan, noise: Option<(&NoiseSpec, usize)>) -> Result<SweepTable> {
    let started = Instant::now();
    let n_points = plan.sequences.len();
    let n_samples = noise.map_or(1, |(_, n)| n.max(1));
    let outcomes: Vec<Result<(f64, SimDiagnostics)>> = (0..n_points * n_samples)
        .into_par_iter()
        .map(|job| {
            let (point, sample) = (job / n_samples, job % n_samples);
            match noise {
                Some((spec, _)) => {
                    let seq = perturb(&plan.sequences[point], spec, sample as u64);
                    run_point(&plan.model, &seq, &cfg.dissipation, &cfg.integrator)
                }
                None => run_point(&plan.model, &plan.sequences[point], &cfg.dissipation, &cfg.integrator),
            }
        })
        .collect();
    let mut values = Vec::with_capacity(n_points);
    let mut diagnostics = SweepDiagnostics::default();
    let mut outcomes = outcomes.into_iter();
    for _ in 0..n_points {
        let mut acc = 0.0;
        for _ in 0..n_samples {
            let (v, d) = outcomes.next().unwrap()?;
            diagnostics.absorb(&d);
            acc += v;
        }
        values.push(acc / n_samples as f64);
    }
    let hash_input = (plan.name, cfg, &plan.model, &plan.axes, noise.map(|(s, n)| (*s, n)));
    Ok(SweepTable {
        observable: format!("P_{}", plan.model.kind.target_label()),
        metadata: SweepMetadata {
            config_hash: fingerprint(&hash_input),
            seed: noise.map(|(s, _)| s.seed),
            samples: n_samples,
            runtime_s: started.elapsed().as_secs_f64(),
        },
        axes: plan.axes,
        values,
        diagnostics,
    })
}

fn grid2<F>(a: &Axis, b: &Axis, mut f: F) -> Result<Vec<PulseSequence>>
where
    F: FnMut(f64, f64) -> Result<PulseSequence>,
{
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in &a.values {
        for &y in &b.values {
            out.push(f(x, y)?);
        }
    }
    Ok(out)
}

fn plan_rabi(cfg: &ExperimentConfig, stokes_areas: &Axis) -> Result<Plan> {
    cfg.validate()?;
    let sequences = stokes_areas
        .values
        .iter()
        .map(|&theta_s| PulseSequence::single(cfg.pulse.with_stokes_area(cfg.stokes_envelope_area(theta_s)?)))
        .collect::<Result<_>>()?;
    Ok(Plan { name: "rabi", model: cfg.model, axes: vec![stokes_areas.clone()], sequences })
}

/// C_h2 versus the Stokes transition area, pump and δ fixed by `cfg`.
pub fn rabi_sweep(cfg: &ExperimentConfig, stokes_areas: &Axis) -> Result<SweepTable> {
    execute(cfg, plan_rabi(cfg, stokes_areas)?, None)
}

/// Optional amplitude column of a Rabi table, √nW.
pub fn area_to_amplitude(area: f64) -> f64 {
    area * AMPLITUDE_PER_AREA
}

fn plan_map(cfg: &ExperimentConfig, name: &'static str, deltas: &Axis, stokes_areas: &Axis) -> Result<Plan> {
    cfg.validate()?;
    for &d in &deltas.values {
        cfg.model.with_small_delta(d).validate()?;
    }
    // the Raman phase reference depends on δ only through the pulse centre,
    // which is 0 here, so one sequence per area serves every δ
    let sequences = grid2(deltas, stokes_areas, |_, theta_s| {
        PulseSequence::single(cfg.pulse.with_stokes_area(cfg.stokes_envelope_area(theta_s)?))
    })?;
    Ok(Plan { name, model: cfg.model, axes: vec![deltas.clone(), stokes_areas.clone()], sequences })
}

fn execute_map(cfg: &ExperimentConfig, plan: Plan, noise: Option<(&NoiseSpec, usize)>) -> Result<SweepTable> {
    // δ changes the model, so split the plan per δ row and merge
    let deltas = plan.axes[0].clone();
    let columns = plan.axes[1].len();
    let started = Instant::now();
    let mut values = Vec::with_capacity(plan.sequences.len());
    let mut diagnostics = SweepDiagnostics::default();
    let mut samples = 1;
    for (row, &d) in deltas.values.iter().enumerate() {
        let sub = Plan {
            name: plan.name,
            model: plan.model.with_small_delta(d),
            axes: vec![plan.axes[1].clone()],
            sequences: plan.sequences[row * columns..(row + 1) * columns].to_vec(),
        };
        let t = execute(cfg, sub, noise)?;
        values.extend(t.values);
        samples = t.metadata.samples;
        diagnostics.max_trace_defect = diagnostics.max_trace_defect.max(t.diagnostics.max_trace_defect);
        diagnostics.min_eigenvalue = diagnostics.min_eigenvalue.min(t.diagnostics.min_eigenvalue);
        diagnostics.max_purity_change = diagnostics.max_purity_change.max(t.diagnostics.max_purity_change);
    }
    let hash_input = (plan.name, cfg, &plan.axes, noise.map(|(s, n)| (*s, n)));
    Ok(SweepTable {
        observable: format!("P_{}", plan.model.kind.target_label()),
        metadata: SweepMetadata {
            config_hash: fingerprint(&hash_input),
            seed: noise.map(|(s, _)| s.seed),
            samples,
            runtime_s: started.elapsed().as_secs_f64(),
        },
        axes: plan.axes,
        values,
        diagnostics,
    })
}

/// Final C_h2 over two-photon detuning δ (meV) × Stokes transition area (rad).
pub fn detuning_area_map(cfg: &ExperimentConfig, deltas: &Axis, stokes_areas: &Axis) -> Result<SweepTable> {
    execute_map(cfg, plan_map(cfg, "detuning_area", deltas, stokes_areas)?, None)
}

/// Final h3 population of the h1–h3 system over δ × Stokes area (on the
/// T+–h3 transition).
pub fn high_orbital_map(cfg: &ExperimentConfig, deltas: &Axis, stokes_areas: &Axis) -> Result<SweepTable> {
    if cfg.model.kind != crate::system::LevelKind::FourLevelHigh {
        return Err(Error::Unsupported(format!("high-orbital map of {:?}", cfg.model.kind)));
    }
    execute_map(cfg, plan_map(cfg, "high_orbital", deltas, stokes_areas)?, None)
}

fn plan_delay(cfg: &ExperimentConfig, delays: &Axis) -> Result<Plan> {
    cfg.validate()?;
    let sequences = delays
        .values
        .iter()
        .map(|&d| PulseSequence::single(cfg.pulse.with_stokes_delay(d)))
        .collect::<Result<_>>()?;
    Ok(Plan { name: "delay", model: cfg.model, axes: vec![delays.clone()], sequences })
}

/// C_h2 versus the Stokes delay relative to the pump (ps), areas from `cfg`.
pub fn delay_scan(cfg: &ExperimentConfig, delays: &Axis) -> Result<SweepTable> {
    execute(cfg, plan_delay(cfg, delays)?, None)
}

/// Model at the calibration's two-photon detuning.
fn calibrated_model(cfg: &ExperimentConfig, cal: &CalibrationTable) -> Result<SystemModel> {
    if cal.kind != cfg.model.kind {
        return Err(Error::InvalidParameter {
            name: "calibration",
            reason: format!("calibrated for {:?}, experiment uses {:?}", cal.kind, cfg.model.kind),
        });
    }
    let m = cfg.model.with_small_delta(cal.delta_star);
    m.validate()?;
    Ok(m)
}

fn two_pulse(control: RamanPulse, probe: RamanPulse, interval: f64) -> Result<PulseSequence> {
    PulseSequence::new(vec![control, probe.shifted(interval)])
}

fn plan_ramsey(cfg: &ExperimentConfig, cal: &CalibrationTable, phases: &Axis, intervals: &Axis) -> Result<Plan> {
    cfg.validate()?;
    let model = calibrated_model(cfg, cal)?;
    let probe = synthesize_rotation(PI / 2.0, 0.0, cal)?;
    let controls: Vec<RamanPulse> =
        phases.values.iter().map(|&phi| synthesize_rotation(PI / 2.0, phi, cal)).collect::<Result<_>>()?;
    let mut sequences = Vec::with_capacity(phases.len() * intervals.len());
    for control in &controls {
        for &dt in &intervals.values {
            sequences.push(two_pulse(*control, probe, dt)?);
        }
    }
    Ok(Plan { name: "ramsey", model, axes: vec![phases.clone(), intervals.clone()], sequences })
}

/// Two calibrated π/2 pulses: C_h2 over control azimuth Φ (rad) × pulse
/// interval Δt (ps).
pub fn ramsey_scan(cfg: &ExperimentConfig, cal: &CalibrationTable, intervals: &Axis, phases: &Axis) -> Result<SweepTable> {
    execute(cfg, plan_ramsey(cfg, cal, phases, intervals)?, None)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    pub interval: f64,
    pub amplitude: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayScan {
    pub points: Vec<DecayPoint>,
    pub fit: Option<FitResult>,
    /// Fitted fringe-amplitude decay time, ps.
    pub t2: Option<f64>,
}

/// Fringe amplitude at each coarse interval from a local fine scan
/// `[T, T + fine_span]` with step `fine_step`, then an exponential fit.
pub fn coherence_decay_scan(
    cfg: &ExperimentConfig,
    cal: &CalibrationTable,
    coarse_intervals: &[f64],
    fine_span: f64,
    fine_step: f64,
) -> Result<DecayScan> {
    if coarse_intervals.is_empty() {
        return Err(Error::InvalidParameter { name: "coarse_intervals", reason: "no intervals".into() });
    }
    if !(fine_span > 0.0 && fine_step > 0.0 && fine_step < fine_span) {
        return Err(Error::InvalidParameter { name: "fine_scan", reason: format!("span {fine_span}, step {fine_step}") });
    }
    let count = (fine_span / fine_step).round() as usize + 1;
    let phases = Axis::new("phase_rad", vec![0.0])?;
    let mut points = Vec::with_capacity(coarse_intervals.len());
    for &t in coarse_intervals {
        let fine = Axis::linspace("interval_ps", t, t + fine_step * (count - 1) as f64, count)?;
        let table = ramsey_scan(cfg, cal, &fine, &phases)?;
        match fringe_amplitude(&fine.values, &table.values) {
            Ok(f) => points.push(DecayPoint { interval: t, amplitude: Some(f.amplitude), error: None }),
            Err(e) => points.push(DecayPoint { interval: t, amplitude: None, error: Some(e.to_string()) }),
        }
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().filter_map(|p| p.amplitude.map(|a| (p.interval, a))).unzip();
    let fit = if xs.len() >= 6 { fit_auto(FitModel::ExpDecay, &xs, &ys).ok() } else { None };
    let t2 = fit.as_ref().and_then(|f| f.param("tau"));
    Ok(DecayScan { points, fit, t2 })
}

/// Azimuth of the state prepared by a calibrated (θ, φ) rotation, read from
/// the Ramsey fringe it produces with a (π/2, 0) probe, relative to the
/// fringe of a (π/2, 0) control.
pub fn ramsey_azimuth(cfg: &ExperimentConfig, cal: &CalibrationTable, theta: f64, phi: f64, intervals: &Axis) -> Result<f64> {
    let model = calibrated_model(cfg, cal)?;
    let probe = synthesize_rotation(PI / 2.0, 0.0, cal)?;
    let f = qubit_frequency(&model);
    let x0 = intervals.values[0];
    let xs: Vec<f64> = intervals.values.iter().map(|x| x - x0).collect();
    let mut phases = [0.0; 2];
    for (k, (th, ph)) in [(PI / 2.0, 0.0), (theta, phi)].into_iter().enumerate() {
        let control = synthesize_rotation(th.rem_euclid(2.0 * PI), ph, cal)?;
        let sequences = intervals.values.iter().map(|&dt| two_pulse(control, probe, dt)).collect::<Result<_>>()?;
        let table = execute(cfg, Plan { name: "ramsey_azimuth", model, axes: vec![intervals.clone()], sequences }, None)?;
        phases[k] = harmonic_fit(&xs, &table.values, f)?.phase;
    }
    Ok(crate::units::wrap_angle(RAMSEY_PHASE_SIGN * (phases[1] - phases[0])))
}

/// Fringe phase shift per unit of control azimuth.
const RAMSEY_PHASE_SIGN: f64 = 1.0;

/// Pulse interval that is an integer number of qubit periods h/Δq, ps.
pub fn commensurate_interval(model: &SystemModel, periods: u32) -> f64 {
    periods as f64 * H_MEV_PS / model.qubit_splitting()
}

fn plan_phase_area(
    cfg: &ExperimentConfig,
    cal: &CalibrationTable,
    thetas: &Axis,
    phases: &Axis,
    interval: f64,
) -> Result<Plan> {
    cfg.validate()?;
    let model = calibrated_model(cfg, cal)?;
    let probe = synthesize_rotation(PI / 2.0, 0.0, cal)?;
    let sequences = grid2(thetas, phases, |theta, phi| {
        let theta = theta.rem_euclid(2.0 * PI);
        two_pulse(synthesize_rotation(theta, phi, cal)?, probe, interval)
    })?;
    Ok(Plan { name: "phase_area", model, axes: vec![thetas.clone(), phases.clone()], sequences })
}

/// Control rotation θ × azimuth Φ, followed by a π/2 probe after `interval`.
pub fn phase_area_map(
    cfg: &ExperimentConfig,
    cal: &CalibrationTable,
    thetas: &Axis,
    phases: &Axis,
    interval: f64,
) -> Result<SweepTable> {
    execute(cfg, plan_phase_area(cfg, cal, thetas, phases, interval)?, None)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifetimeScan {
    pub table: SweepTable,
    pub fit: Option<FitResult>,
    /// Fitted |h2⟩ lifetime, ps.
    pub t1: Option<f64>,
}

/// Population of the target after a calibrated π pulse, read out at the
/// given delays after the pulse centre (ps).
pub fn t1_probe(cfg: &ExperimentConfig, cal: &CalibrationTable, delays: &Axis) -> Result<LifetimeScan> {
    cfg.validate()?;
    let started = Instant::now();
    let model = calibrated_model(cfg, cal)?;
    let mut sorted = delays.values.clone();
    sorted.sort_by(f64::total_cmp);
    if sorted != delays.values {
        return Err(Error::InvalidParameter { name: "delays", reason: "delays must be increasing".into() });
    }
    let seq = PulseSequence::single(synthesize_rotation(PI, 0.0, cal)?)?;
    let t_end = seq.t_end.max(*sorted.last().unwrap());
    let t_start = seq.t_start.min(sorted[0]);
    let seq = seq.with_window(t_start, t_end)?;
    let integrator = IntegratorConfig { sample_times: sorted.clone(), ..cfg.integrator.clone() };
    let rho0 = DensityMatrix::basis_state(model.dim(), 0);
    let res = simulate(&model, &seq, &cfg.dissipation, &rho0, &integrator)?;
    let q = model.kind.target_index();
    let values = res.population_series(q);
    let mut diagnostics = SweepDiagnostics::default();
    diagnostics.absorb(&res.diagnostics);

    // fit only where the pulse has finished
    let after = seq.pulses[0].pump.center + crate::drive::WINDOW_SIGMAS * seq.pulses[0].pump.sigma();
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        sorted.iter().zip(&values).filter(|(t, _)| **t >= after).map(|(t, v)| (*t, *v)).unzip();
    let fit = if xs.len() >= 6 { fit_auto(FitModel::ExpDecay, &xs, &ys).ok() } else { None };
    let t1 = fit.as_ref().and_then(|f| f.param("tau"));
    let table = SweepTable {
        axes: vec![delays.clone()],
        observable: format!("P_{}", model.kind.target_label()),
        values,
        metadata: SweepMetadata {
            config_hash: fingerprint(&("t1", cfg, cal, delays)),
            seed: None,
            samples: 1,
            runtime_s: started.elapsed().as_secs_f64(),
        },
        diagnostics,
    };
    Ok(LifetimeScan { table, fit, t1 })
}

/// Sweeps that can be repeated under pulse noise.
#[derive(Clone, Debug, PartialEq)]
pub enum InnerExperiment {
    Rabi { stokes_areas: Axis },
    DetuningArea { deltas: Axis, stokes_areas: Axis },
    Delay { delays: Axis },
    Ramsey { cal: CalibrationTable, intervals: Axis, phases: Axis },
    PhaseArea { cal: CalibrationTable, thetas: Axis, phases: Axis, interval: f64 },
}

/// Mean of `n_samples` sweeps under perturbed pulses. Sample `k` draws one
/// noise realization from stream `k` of `cfg.noise.seed` and applies it to
/// every grid point of its sweep.
pub fn noise_monte_carlo(cfg: &ExperimentConfig, inner: &InnerExperiment, n_samples: usize) -> Result<SweepTable> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter { name: "n_samples", reason: "must be >= 1".into() });
    }
    let noise = cfg.noise.ok_or(Error::MissingConfig("noise"))?;
    noise.validate()?;
    let n = Some((&noise, n_samples));
    match inner {
        InnerExperiment::Rabi { stokes_areas } => execute(cfg, plan_rabi(cfg, stokes_areas)?, n),
        InnerExperiment::DetuningArea { deltas, stokes_areas } => {
            execute_map(cfg, plan_map(cfg, "detuning_area", deltas, stokes_areas)?, n)
        }
        InnerExperiment::Delay { delays } => execute(cfg, plan_delay(cfg, delays)?, n),
        InnerExperiment::Ramsey { cal, intervals, phases } => execute(cfg, plan_ramsey(cfg, cal, phases, intervals)?, n),
        InnerExperiment::PhaseArea { cal, thetas, phases, interval } => {
            execute(cfg, plan_phase_area(cfg, cal, thetas, phases, *interval)?, n)
        }
    }
}

/// Readout probability of the target population under a CW laser of power
/// `p_cw`: the driven transition saturates at half population.
pub fn readout_signal(c_h2: f64, p_cw: f64, p0: f64) -> Result<f64> {
    if !(p_cw >= 0.0 && p0 >= 0.0) || p_cw + p0 == 0.0 {
        return Err(Error::InvalidParameter { name: "power", reason: format!("p_cw = {p_cw}, p0 = {p0}") });
    }
    Ok(0.5 * c_h2 * p_cw / (p0 + p_cw))
}

/// Qubit frequency Δq/h, THz.
pub fn qubit_frequency(model: &SystemModel) -> f64 {
    mev_to_rad_per_ps(model.qubit_splitting()) / (2.0 * PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{DipoleSet, EnergySpec, LevelKind};

    fn three_level(delta: f64) -> ExperimentConfig {
        let m = SystemModel::new(LevelKind::ThreeLevel, EnergySpec::default().with_small_delta(delta), DipoleSet::default()).unwrap();
        ExperimentConfig::new(m).unwrap()
    }

    #[test]
    fn readout_scaling() {
        assert_eq!(readout_signal(0.8, 0.0, 396.0).unwrap(), 0.0);
        assert!((readout_signal(0.8, 396.0, 396.0).unwrap() - 0.2).abs() < 1e-15);
        assert!((readout_signal(1.0, 400.0, 396.0).unwrap() - 0.2513).abs() < 1e-4);
        assert!(readout_signal(1.0, -1.0, 396.0).is_err());
    }

    #[test]
    fn axis_validation() {
        assert!(Axis::linspace("x", 0.0, 1.0, 0).is_err());
        assert!(Axis::new("x", vec![f64::NAN]).is_err());
        assert_eq!(Axis::linspace("x", 0.0, 1.0, 5).unwrap().values, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn table_indexing() {
        let t = SweepTable {
            axes: vec![Axis::new("a", vec![0.0, 1.0]).unwrap(), Axis::new("b", vec![0.0, 1.0, 2.0]).unwrap()],
            observable: "P".into(),
            values: vec![0.1, 0.5, 0.2, 0.9, 0.9, 0.0],
            metadata: SweepMetadata { config_hash: String::new(), seed: None, samples: 1, runtime_s: 0.0 },
            diagnostics: SweepDiagnostics::default(),
        };
        assert_eq!(t.argmax(), (vec![1, 0], 0.9));
        assert_eq!(t.get(&[0, 2]), 0.2);
        assert_eq!(t.row(&[1]), &[0.9, 0.9, 0.0]);
        assert_eq!(t.argmin(), (vec![1, 2], 0.0));
    }

    #[test]
    fn rabi_without_stokes_is_dark() {
        let cfg = three_level(0.25);
        let t = rabi_sweep(&cfg, &Axis::new("stokes_area_rad", vec![0.0]).unwrap()).unwrap();
        assert!(t.values[0] <= 0.02, "{}", t.values[0]);
    }

    #[test]
    fn far_detuned_map_is_dark() {
        let mut cfg = three_level(0.0);
        cfg.model.energies.big_delta = 50.0;
        let t = detuning_area_map(
            &cfg,
            &Axis::new("delta_mev", vec![40.0]).unwrap(),
            &Axis::linspace("stokes_area_rad", 1.0 * PI, 3.0 * PI, 3).unwrap(),
        )
        .unwrap();
        assert!(t.values.iter().all(|v| *v < 0.02), "{:?}", t.values);
    }

    #[test]
    fn delay_scan_peaks_at_overlap() {
        let mut cfg = three_level(0.25);
        cfg.pulse.stokes.area = cfg.stokes_envelope_area(2.0 * PI).unwrap();
        let t = delay_scan(&cfg, &Axis::new("delay_ps", vec![-30.0, -5.0, 0.0, 5.0, 30.0]).unwrap()).unwrap();
        assert_eq!(t.argmax().0, vec![2]);
        assert!(t.values[0] <= 0.02 && t.values[4] <= 0.02);
    }

    #[test]
    fn sweeps_are_deterministic() {
        let cfg = three_level(0.25);
        let axis = Axis::linspace("stokes_area_rad", 0.0, 3.0 * PI, 6).unwrap();
        let a = rabi_sweep(&cfg, &axis).unwrap();
        let b = rabi_sweep(&cfg, &axis).unwrap();
        assert_eq!(a.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(a.metadata.config_hash, b.metadata.config_hash);
        assert!(a.values.iter().all(|v| (-1e-6..=1.0 + 1e-6).contains(v)));
    }

    #[test]
    fn ramsey_azimuth_follows_phase() {
        let cfg = three_level(0.25);
        let cal = crate::optimizer::calibrate_rotation(&cfg, 0.25, 2.0 * PI).unwrap();
        let axis = Axis::linspace("interval_ps", 30.0, 32.0, 41).unwrap();
        for phi in [0.0, 1.0, 2.5] {
            let a = ramsey_azimuth(&cfg, &cal, PI / 2.0, phi, &axis).unwrap();
            assert!(crate::units::wrap_angle(a - phi).abs() < 0.05, "{phi} -> {a}");
        }
    }

    #[test]
    fn commensurate_interval_matches_qubit_period() {
        let cfg = three_level(0.05);
        let one = commensurate_interval(&cfg.model, 1);
        assert!((one * qubit_frequency(&cfg.model) - 1.0).abs() < 1e-9);
        assert!((qubit_frequency(&cfg.model) - 1.0422).abs() < 1e-4);
    }
}
