//! π-condition search, rotation calibration and pulse synthesis.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{ComplexMatrix, DensityMatrix};
use crate::drive::{PulseSequence, RamanPulse};
use crate::engine::{simulate, IntegratorConfig};
use crate::error::{Error, Result};
use crate::experiments::{detuning_area_map, fingerprint, Axis, ExperimentConfig};
use crate::system::{LevelKind, SystemModel};
use crate::units::{mev_to_rad_per_ps, wrap_angle};

/// Simplex refinement stops once all vertices agree to within these spans.
pub const DELTA_TOLERANCE_MEV: f64 = 1e-4;
pub const AREA_TOLERANCE_RAD: f64 = 1e-3;
/// Smallest coarse grid accepted per axis.
pub const MIN_GRID: usize = 21;
/// Points of the transfer-versus-area curve.
pub const ROTATION_CURVE_POINTS: usize = 41;
/// Allowed |C_h2 − sin²(θ/2)| of a verified rotation.
pub const ROTATION_TOLERANCE: f64 = 0.03;

const MAX_SIMPLEX_ITERATIONS: usize = 400;

/// One point of the calibrated rotation curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationPoint {
    /// Stokes transition area, rad.
    pub stokes_area: f64,
    /// Final target population from |h1⟩.
    pub transfer: f64,
    /// Bloch azimuth reached with zero commanded phase, rad.
    pub azimuth_offset: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub kind: LevelKind,
    /// Two-photon detuning of the π condition, meV.
    pub delta_star: f64,
    /// Stokes transition area of the π pulse, rad.
    pub stokes_area_pi: f64,
    pub pump_area: f64,
    pub transfer_at_pi: f64,
    pub fwhm: f64,
    pub stokes_dipole: f64,
    /// SHA-256 of the system model the table was built for.
    pub system_hash: String,
    /// Transfer and azimuth from zero to the π area at `delta_star`.
    pub rotation_curve: Vec<RotationPoint>,
    pub refinement_iterations: usize,
}

impl CalibrationTable {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0 + 1e-6).contains(&self.transfer_at_pi) {
            return Err(Error::InvalidParameter { name: "transfer_at_pi", reason: format!("{} outside [0, 1]", self.transfer_at_pi) });
        }
        if !(self.stokes_area_pi > 0.0) {
            return Err(Error::InvalidParameter { name: "stokes_area_pi", reason: format!("{} must be > 0", self.stokes_area_pi) });
        }
        if !(self.stokes_dipole > 0.0 && self.fwhm > 0.0 && self.pump_area >= 0.0) {
            return Err(Error::InvalidParameter { name: "calibration", reason: "non-physical pulse parameters".into() });
        }
        if self.rotation_curve.len() < 2 {
            return Err(Error::InvalidParameter { name: "rotation_curve", reason: "needs at least two points".into() });
        }
        if self.rotation_curve.windows(2).any(|w| w[1].stokes_area <= w[0].stokes_area) {
            return Err(Error::InvalidParameter { name: "rotation_curve", reason: "areas must increase".into() });
        }
        Ok(())
    }

    /// Whether the table was built for `model` (δ excluded).
    pub fn matches(&self, model: &SystemModel) -> bool {
        self.system_hash == system_hash(model)
    }

    /// Stokes area that gives transfer sin²(θ/2), θ ∈ [0, π], and the
    /// azimuth offset at that area.
    pub fn area_for_angle(&self, theta: f64) -> (f64, f64) {
        let target = (theta / 2.0).sin().powi(2);
        let curve = &self.rotation_curve;
        let last = curve[curve.len() - 1];
        if target <= curve[0].transfer {
            return (curve[0].stokes_area, curve[0].azimuth_offset);
        }
        for w in curve.windows(2) {
            if w[1].transfer >= target {
                let s = (target - w[0].transfer) / (w[1].transfer - w[0].transfer);
                let area = w[0].stokes_area + s * (w[1].stokes_area - w[0].stokes_area);
                let chi = w[0].azimuth_offset + s * (w[1].azimuth_offset - w[0].azimuth_offset);
                return (area, chi);
            }
        }
        (last.stokes_area, last.azimuth_offset)
    }
}

/// Hash of the model with δ zeroed, so that tables can be matched across
/// detuning changes.
pub fn system_hash(model: &SystemModel) -> String {
    fingerprint(&model.with_small_delta(0.0))
}

/// Bloch azimuth of the qubit coherence in `rho` at time `t`, in the frame
/// rotating at the qubit frequency with phases referenced to `t_ref`.
pub fn bloch_azimuth(model: &SystemModel, rho: &ComplexMatrix, t: f64, t_ref: f64) -> f64 {
    let q = model.kind.target_index();
    let c = rho[(q, 0)];
    let delta = mev_to_rad_per_ps(model.energies.small_delta);
    let split = mev_to_rad_per_ps(model.qubit_splitting());
    wrap_angle(c.arg() - delta * t - split * t_ref + PI / 2.0)
}

fn final_state(model: &SystemModel, seq: &PulseSequence, cfg: &ExperimentConfig) -> Result<(ComplexMatrix, f64)> {
    let rho0 = DensityMatrix::basis_state(model.dim(), 0);
    let integrator = IntegratorConfig { sample_times: Vec::new(), ..cfg.integrator.clone() };
    let res = simulate(model, seq, &cfg.dissipation, &rho0, &integrator)?;
    Ok((*res.final_state(), seq.t_end))
}

fn transfer(cfg: &ExperimentConfig, delta: f64, theta_s: f64) -> Result<f64> {
    let model = cfg.model.with_small_delta(delta);
    let pulse = RamanPulse { stokes: cfg.pulse.stokes, ..cfg.pulse }.with_stokes_area(cfg.stokes_envelope_area(theta_s)?);
    let (rho, _) = final_state(&model, &PulseSequence::single(pulse)?, cfg)?;
    let q = model.kind.target_index();
    Ok(rho[(q, q)].re)
}

/// Coarse grid search over δ (meV) × Stokes area (rad) followed by simplex
/// refinement, then calibration of the rotation curve at the optimum.
pub fn find_pi_condition(cfg: &ExperimentConfig, deltas: &Axis, stokes_areas: &Axis) -> Result<CalibrationTable> {
    for axis in [deltas, stokes_areas] {
        if axis.len() < MIN_GRID {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: format!("axis `{}` has {} points, need at least {MIN_GRID}", axis.name, axis.len()),
            });
        }
    }
    let table = detuning_area_map(cfg, deltas, stokes_areas)?;
    let (idx, grid_best) = table.argmax();
    let (i, j) = (idx[0], idx[1]);
    if i == 0 || i + 1 == deltas.len() || j == 0 || j + 1 == stokes_areas.len() {
        return Err(Error::Unbracketed { delta_mev: deltas.values[i], stokes_area: stokes_areas.values[j] });
    }
    let (d0, a0) = (deltas.values[i], stokes_areas.values[j]);
    let cell_d = (deltas.values[i + 1] - deltas.values[i - 1]).abs() / 2.0;
    let cell_a = (stokes_areas.values[j + 1] - stokes_areas.values[j - 1]).abs() / 2.0;
    let bounds = (
        (deltas.values[0].min(deltas.values[deltas.len() - 1]), deltas.values[0].max(deltas.values[deltas.len() - 1])),
        (
            stokes_areas.values[0].min(stokes_areas.values[stokes_areas.len() - 1]),
            stokes_areas.values[0].max(stokes_areas.values[stokes_areas.len() - 1]),
        ),
    );
    let (refined, value, iterations) = nelder_mead(
        |p| transfer(cfg, p[0], p[1]),
        [d0, a0],
        grid_best,
        [cell_d / 2.0, cell_a / 2.0],
        bounds,
    )?;
    let (delta_star, area_pi) = if value >= grid_best { (refined[0], refined[1]) } else { (d0, a0) };
    let best = value.max(grid_best);
    if best < 0.5 {
        return Err(Error::NoPiCondition { transfer: best });
    }
    let mut cal = calibrate_rotation(cfg, delta_star, area_pi)?;
    cal.refinement_iterations = iterations;
    Ok(cal)
}

type Vertex = ([f64; 2], f64);

/// Maximizes `f` from `start`, which has known value `start_value`.
fn nelder_mead<F>(
    f: F,
    start: [f64; 2],
    start_value: f64,
    step: [f64; 2],
    bounds: ((f64, f64), (f64, f64)),
) -> Result<([f64; 2], f64, usize)>
where
    F: Fn([f64; 2]) -> Result<f64> + Sync,
{
    let clamp = |p: [f64; 2]| [p[0].clamp(bounds.0 .0, bounds.0 .1), p[1].clamp(bounds.1 .0, bounds.1 .1)];
    let eval = |p: [f64; 2]| -> Result<Vertex> {
        let p = clamp(p);
        Ok((p, f(p)?))
    };
    let pts = [[start[0] + step[0], start[1]], [start[0], start[1] + step[1]]];
    let evaluated: Vec<Result<Vertex>> = pts.par_iter().map(|p| eval(*p)).collect();
    let mut simplex: Vec<Vertex> = vec![(start, start_value)];
    for v in evaluated {
        simplex.push(v?);
    }
    let mut iterations = 0;
    while iterations < MAX_SIMPLEX_ITERATIONS {
        // best first; stable sort keeps earlier vertices ahead on ties
        simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
        let span = |k: usize| {
            let lo = simplex.iter().map(|v| v.0[k]).fold(f64::INFINITY, f64::min);
            let hi = simplex.iter().map(|v| v.0[k]).fold(f64::NEG_INFINITY, f64::max);
            hi - lo
        };
        if span(0) < DELTA_TOLERANCE_MEV && span(1) < AREA_TOLERANCE_RAD {
            break;
        }
        iterations += 1;
        let centroid = [(simplex[0].0[0] + simplex[1].0[0]) / 2.0, (simplex[0].0[1] + simplex[1].0[1]) / 2.0];
        let worst = simplex[2];
        let along = |t: f64| [centroid[0] + t * (worst.0[0] - centroid[0]), centroid[1] + t * (worst.0[1] - centroid[1])];
        let reflected = eval(along(-1.0))?;
        if reflected.1 > simplex[0].1 {
            let expanded = eval(along(-2.0))?;
            simplex[2] = if expanded.1 > reflected.1 { expanded } else { reflected };
        } else if reflected.1 > simplex[1].1 {
            simplex[2] = reflected;
        } else {
            let (contracted, threshold) =
                if reflected.1 > worst.1 { (eval(along(-0.5))?, reflected.1) } else { (eval(along(0.5))?, worst.1) };
            if contracted.1 >= threshold {
                simplex[2] = contracted;
            } else {
                let best = simplex[0].0;
                let shrink: Vec<Result<Vertex>> = simplex[1..]
                    .par_iter()
                    .map(|v| eval([(best[0] + v.0[0]) / 2.0, (best[1] + v.0[1]) / 2.0]))
                    .collect();
                for (k, v) in shrink.into_iter().enumerate() {
                    simplex[k + 1] = v?;
                }
            }
        }
    }
    simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok((simplex[0].0, simplex[0].1, iterations))
}

/// Builds the rotation curve at a known π condition.
pub fn calibrate_rotation(cfg: &ExperimentConfig, delta_star: f64, stokes_area_pi: f64) -> Result<CalibrationTable> {
    cfg.validate()?;
    if !(stokes_area_pi > 0.0 && stokes_area_pi.is_finite()) {
        return Err(Error::InvalidParameter { name: "stokes_area_pi", reason: format!("{stokes_area_pi} must be > 0") });
    }
    let model = cfg.model.with_small_delta(delta_star);
    model.validate()?;
    let mu = model.stokes_dipole();
    let areas = Axis::linspace("stokes_area_rad", 0.0, stokes_area_pi, ROTATION_CURVE_POINTS)?;
    let base = cfg.pulse.with_relative_phase(0.0).with_stokes_delay(0.0).shifted(-cfg.pulse.center());
    let points: Vec<Result<RotationPoint>> = areas
        .values
        .par_iter()
        .map(|&a| {
            let pulse = base.with_stokes_area(cfg.stokes_envelope_area(a)?);
            let (rho, t) = final_state(&model, &PulseSequence::single(pulse)?, cfg)?;
            let q = model.kind.target_index();
            Ok(RotationPoint { stokes_area: a, transfer: rho[(q, q)].re, azimuth_offset: bloch_azimuth(&model, &rho, t, 0.0) })
        })
        .collect();
    let mut curve = points.into_iter().collect::<Result<Vec<_>>>()?;
    // no coherence at zero area; continue the offset from the next point
    curve[0].azimuth_offset = curve[1].azimuth_offset;
    for k in 1..curve.len() {
        let prev = curve[k - 1].azimuth_offset;
        curve[k].azimuth_offset = prev + wrap_angle(curve[k].azimuth_offset - prev);
    }
    let transfer_at_pi = curve[curve.len() - 1].transfer;
    if transfer_at_pi < 0.5 {
        return Err(Error::NoPiCondition { transfer: transfer_at_pi });
    }
    let cal = CalibrationTable {
        kind: model.kind,
        delta_star,
        stokes_area_pi,
        pump_area: cfg.pulse.pump.area,
        transfer_at_pi,
        fwhm: cfg.pulse.pump.fwhm,
        stokes_dipole: mu,
        system_hash: system_hash(&model),
        rotation_curve: curve,
        refinement_iterations: 0,
    };
    cal.validate()?;
    Ok(cal)
}

/// Pulse pair centred at t = 0 that rotates |h1⟩ by polar angle `theta`
/// about azimuth `phi`. Angles above π use the equivalent (2π − θ, φ + π).
pub fn synthesize_rotation(theta: f64, phi: f64, cal: &CalibrationTable) -> Result<RamanPulse> {
    cal.validate()?;
    if !(0.0..2.0 * PI).contains(&theta) || !phi.is_finite() {
        return Err(Error::InvalidParameter { name: "theta", reason: format!("θ = {theta} outside [0, 2π)") });
    }
    let (theta, phi) = if theta > PI { (2.0 * PI - theta, phi + PI) } else { (theta, phi) };
    let (area, chi) = cal.area_for_angle(theta);
    RamanPulse::new(0.0, cal.fwhm, cal.pump_area, area / cal.stokes_dipole, wrap_angle(phi - chi))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationCheck {
    pub theta: f64,
    pub phi: f64,
    pub pulse: RamanPulse,
    pub transfer: f64,
    pub expected: f64,
    /// Bloch azimuth of the final state, rad; undefined at the poles.
    pub azimuth: f64,
    /// Set when |transfer − expected| exceeds the rotation tolerance.
    pub warning: bool,
}

/// Runs a synthesized rotation from |h1⟩ through the full model.
pub fn verify_rotation(cfg: &ExperimentConfig, cal: &CalibrationTable, theta: f64, phi: f64) -> Result<RotationCheck> {
    let pulse = synthesize_rotation(theta, phi, cal)?;
    let model = cfg.model.with_small_delta(cal.delta_star);
    if !cal.matches(&model) {
        return Err(Error::InvalidParameter { name: "calibration", reason: "table was built for another system".into() });
    }
    let (rho, t) = final_state(&model, &PulseSequence::single(pulse)?, cfg)?;
    let q = model.kind.target_index();
    let transfer = rho[(q, q)].re;
    let expected = (theta / 2.0).sin().powi(2);
    Ok(RotationCheck {
        theta,
        phi,
        pulse,
        transfer,
        expected,
        azimuth: bloch_azimuth(&model, &rho, t, 0.0),
        warning: (transfer - expected).abs() > ROTATION_TOLERANCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{DipoleSet, EnergySpec};

    fn three_level_cfg() -> ExperimentConfig {
        let m = SystemModel::new(LevelKind::ThreeLevel, EnergySpec::default(), DipoleSet::default()).unwrap();
        ExperimentConfig::new(m).unwrap()
    }

    #[test]
    fn simplex_finds_quadratic_peak() {
        let f = |p: [f64; 2]| Ok(1.0 - (p[0] - 0.1234).powi(2) * 40.0 - (p[1] - 6.5).powi(2));
        let (p, v, _) = nelder_mead(f, [0.1, 6.3], f([0.1, 6.3]).unwrap(), [0.01, 0.1], ((0.0, 0.4), (3.0, 9.0))).unwrap();
        assert!((p[0] - 0.1234).abs() < DELTA_TOLERANCE_MEV, "{p:?}");
        assert!((p[1] - 6.5).abs() < AREA_TOLERANCE_RAD, "{p:?}");
        assert!(v > 1.0 - 1e-6);
    }

    #[test]
    fn simplex_respects_bounds() {
        let f = |p: [f64; 2]| Ok(p[0] + p[1]);
        let (p, _, _) = nelder_mead(f, [0.5, 0.5], 1.0, [0.1, 0.1], ((0.0, 1.0), (0.0, 1.0))).unwrap();
        assert!(p[0] <= 1.0 && p[1] <= 1.0);
    }

    #[test]
    fn small_grid_rejected() {
        let cfg = three_level_cfg();
        let d = Axis::linspace("delta_mev", 0.0, 0.5, 5).unwrap();
        let a = Axis::linspace("stokes_area_rad", PI, 3.0 * PI, 21).unwrap();
        assert!(matches!(find_pi_condition(&cfg, &d, &a), Err(Error::InvalidParameter { .. })));
    }

    #[test]
    fn unbracketed_maximum_reported() {
        // transfer still grows at the largest area of the grid
        let cfg = three_level_cfg();
        let d = Axis::linspace("delta_mev", 0.15, 0.35, 21).unwrap();
        let a = Axis::linspace("stokes_area_rad", 0.2 * PI, 1.0 * PI, 21).unwrap();
        assert!(matches!(find_pi_condition(&cfg, &d, &a), Err(Error::Unbracketed { .. })));
    }

    #[test]
    fn synthesis_angle_validation() {
        let cfg = three_level_cfg();
        let cal = calibrate_rotation(&cfg, 0.25, 2.0 * PI).unwrap();
        assert!(synthesize_rotation(2.0 * PI, 0.0, &cal).is_err());
        assert!(synthesize_rotation(-0.1, 0.0, &cal).is_err());
        let zero = synthesize_rotation(0.0, 0.3, &cal).unwrap();
        assert_eq!(zero.stokes.area, 0.0);
        let pi = synthesize_rotation(PI, 0.0, &cal).unwrap();
        assert!((pi.stokes.area * cal.stokes_dipole - 2.0 * PI).abs() < 1e-12);
        let wrapped = synthesize_rotation(1.5 * PI, 0.2, &cal).unwrap();
        let direct = synthesize_rotation(0.5 * PI, 0.2 + PI, &cal).unwrap();
        assert_eq!(wrapped, direct);
    }

    #[test]
    fn calibrated_rotations_verify() {
        let cfg = three_level_cfg();
        let cal = calibrate_rotation(&cfg, 0.25, 2.0 * PI).unwrap();
        assert!(cal.transfer_at_pi > 0.95);
        for (theta, phi) in [(0.5 * PI, 0.0), (0.5 * PI, 2.0), (0.25 * PI, -1.0), (0.75 * PI, 4.0)] {
            let check = verify_rotation(&cfg, &cal, theta, phi).unwrap();
            assert!(!check.warning, "{check:?}");
            assert!(wrap_angle(check.azimuth - phi).abs() < 0.05, "{check:?}");
        }
    }

    #[test]
    fn curve_is_monotone_near_origin() {
        let cfg = three_level_cfg();
        let cal = calibrate_rotation(&cfg, 0.25, 2.0 * PI).unwrap();
        let n = (0.9 * (cal.rotation_curve.len() - 1) as f64) as usize;
        for w in cal.rotation_curve[..=n].windows(2) {
            assert!(w[1].transfer > w[0].transfer, "{w:?}");
        }
    }
}
