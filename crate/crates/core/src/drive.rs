//! Gaussian drive pulses, pump/Stokes pairs and timed sequences.
//!
//! A pulse area is always quoted for a reference transition with unit
//! dipole: the Rabi frequency a pulse induces on transition `i` is
//! `μ_i · envelope(t)`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{fwhm_to_sigma, FWHM_PER_SIGMA};

/// Default effective pulse duration (FWHM of the Rabi envelope), ps.
pub const DEFAULT_FWHM_PS: f64 = 8.49;

/// Half-width of the default integration window, in units of σ.
pub const WINDOW_SIGMAS: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseRole {
    Pump,
    Stokes,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    /// ps
    pub center: f64,
    /// ps
    pub fwhm: f64,
    /// rad, for a unit-dipole transition
    pub area: f64,
    /// rad
    pub phase: f64,
    pub role: PulseRole,
}

impl PulseSpec {
    pub fn new(role: PulseRole, center: f64, fwhm: f64, area: f64, phase: f64) -> Result<Self> {
        let p = Self { center, fwhm, area, phase, role };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fwhm > 0.0 && self.fwhm.is_finite()) {
            return Err(Error::InvalidParameter { name: "fwhm", reason: format!("{} must be > 0", self.fwhm) });
        }
        if !(self.area >= 0.0 && self.area.is_finite()) {
            return Err(Error::InvalidParameter { name: "area", reason: format!("{} must be >= 0", self.area) });
        }
        if !self.phase.is_finite() || !self.center.is_finite() {
            return Err(Error::InvalidParameter { name: "phase", reason: "phase and center must be finite".into() });
        }
        Ok(())
    }

    #[inline]
    pub fn sigma(&self) -> f64 {
        fwhm_to_sigma(self.fwhm)
    }

    pub fn peak(&self) -> f64 {
        self.area / (self.sigma() * (2.0 * PI).sqrt())
    }

    pub fn shifted(mut self, dt: f64) -> Self {
        self.center += dt;
        self
    }
}

/// Instantaneous Rabi frequency (rad/ps) of a unit-dipole transition.
#[inline]
pub fn envelope(p: &PulseSpec, t: f64) -> f64 {
    let sigma = p.sigma();
    let x = (t - p.center) / sigma;
    p.area / (sigma * (2.0 * PI).sqrt()) * (-0.5 * x * x).exp()
}

/// A phase-locked pump/Stokes pair.
///
/// The pair's carriers are referenced to the pump center: delaying the
/// whole pair delays the optical phases with it, as a delay line does.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RamanPulse {
    pub pump: PulseSpec,
    pub stokes: PulseSpec,
}

impl RamanPulse {
    /// Overlapping pair with relative phase `phase` on the Stokes field.
    pub fn new(center: f64, fwhm: f64, pump_area: f64, stokes_area: f64, phase: f64) -> Result<Self> {
        Ok(Self {
            pump: PulseSpec::new(PulseRole::Pump, center, fwhm, pump_area, 0.0)?,
            stokes: PulseSpec::new(PulseRole::Stokes, center, fwhm, stokes_area, phase)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.pump.validate()?;
        self.stokes.validate()?;
        if self.pump.role != PulseRole::Pump || self.stokes.role != PulseRole::Stokes {
            return Err(Error::InvalidParameter { name: "role", reason: "pair must be {pump, stokes}".into() });
        }
        Ok(())
    }

    /// Phase reference time of the pair.
    pub fn center(&self) -> f64 {
        self.pump.center
    }

    pub fn relative_phase(&self) -> f64 {
        self.stokes.phase - self.pump.phase
    }

    pub fn with_relative_phase(mut self, phase: f64) -> Self {
        self.stokes.phase = self.pump.phase + phase;
        self
    }

    /// Moves the Stokes pulse by `delay` relative to the pump.
    pub fn with_stokes_delay(mut self, delay: f64) -> Self {
        self.stokes.center = self.pump.center + delay;
        self
    }

    pub fn with_stokes_area(mut self, area: f64) -> Self {
        self.stokes.area = area;
        self
    }

    pub fn shifted(self, dt: f64) -> Self {
        Self { pump: self.pump.shifted(dt), stokes: self.stokes.shifted(dt) }
    }

    fn span(&self) -> (f64, f64) {
        let lo = |p: &PulseSpec| p.center - WINDOW_SIGMAS * p.sigma();
        let hi = |p: &PulseSpec| p.center + WINDOW_SIGMAS * p.sigma();
        (lo(&self.pump).min(lo(&self.stokes)), hi(&self.pump).max(hi(&self.stokes)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub pulses: Vec<RamanPulse>,
    pub t_start: f64,
    pub t_end: f64,
}

impl PulseSequence {
    /// Sequence with the default window of ±4σ around the outermost pulses.
    pub fn new(pulses: Vec<RamanPulse>) -> Result<Self> {
        if pulses.is_empty() {
            return Err(Error::InvalidParameter { name: "pulses", reason: "sequence is empty".into() });
        }
        for p in &pulses {
            p.validate()?;
        }
        let (t_start, t_end) = Self::pulse_span(&pulses);
        Ok(Self { pulses, t_start, t_end })
    }

    pub fn single(pulse: RamanPulse) -> Result<Self> {
        Self::new(vec![pulse])
    }

    /// Overrides the integration window; it must still cover every pulse.
    pub fn with_window(mut self, t_start: f64, t_end: f64) -> Result<Self> {
        let (lo, hi) = Self::pulse_span(&self.pulses);
        if t_start > lo || t_end < hi {
            return Err(Error::InvalidParameter {
                name: "window",
                reason: format!("[{t_start}, {t_end}] does not cover pulses spanning [{lo}, {hi}]"),
            });
        }
        self.t_start = t_start;
        self.t_end = t_end;
        Ok(self)
    }

    fn pulse_span(pulses: &[RamanPulse]) -> (f64, f64) {
        pulses.iter().map(RamanPulse::span).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (c, d)| (a.min(c), b.max(d)))
    }

    /// Time intervals during which at least one pulse is within its ±4σ window,
    /// merged and clipped to the sequence window.
    pub fn active_intervals(&self) -> Vec<(f64, f64)> {
        let mut spans: Vec<(f64, f64)> = self.pulses.iter().map(RamanPulse::span).collect();
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (lo, hi) in spans {
            match merged.last_mut() {
                Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                _ => merged.push((lo, hi)),
            }
        }
        merged
            .into_iter()
            .map(|(lo, hi)| (lo.max(self.t_start), hi.min(self.t_end)))
            .filter(|(lo, hi)| hi > lo)
            .collect()
    }
}

/// Shot-to-shot fluctuations of the optical setup.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// FWHM of the additive phase jitter, rad.
    pub phase_fwhm: f64,
    /// FWHM of the relative error of a commanded phase value.
    pub span_fraction_fwhm: f64,
    /// FWHM of the relative pulse-area error.
    pub area_fraction_fwhm: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { phase_fwhm: 0.037 * PI, span_fraction_fwhm: 0.018, area_fraction_fwhm: 0.0054, seed: 0 }
    }
}

impl NoiseSpec {
    pub fn none(seed: u64) -> Self {
        Self { phase_fwhm: 0.0, span_fraction_fwhm: 0.0, area_fraction_fwhm: 0.0, seed }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("phase_fwhm", self.phase_fwhm),
            ("span_fraction_fwhm", self.span_fraction_fwhm),
            ("area_fraction_fwhm", self.area_fraction_fwhm),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter { name, reason: format!("{v} must be >= 0") });
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.phase_fwhm == 0.0 && self.span_fraction_fwhm == 0.0 && self.area_fraction_fwhm == 0.0
    }
}

/// Standard normal draws by Box–Muller from a counter-based ChaCha stream.
///
/// The stream for `(seed, index)` is independent of every other index, so
/// Monte-Carlo samples can be generated in any order or in parallel.
pub struct GaussianStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        Self { rng, spare: None }
    }

    pub fn next_standard(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the logarithm finite.
        let u1 = 1.0 - self.rng.gen::<f64>();
        let u2 = self.rng.gen::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }

    /// Gaussian draw with the given FWHM.
    pub fn next_fwhm(&mut self, fwhm: f64) -> f64 {
        self.next_standard() * fwhm / FWHM_PER_SIGMA
    }
}

/// Applies one Monte-Carlo realization of `noise` to every pulse of `seq`.
///
/// Per pair, in this order: additive phase jitter, relative error of the
/// commanded phase, then independent area errors for pump and Stokes.
pub fn perturb(seq: &PulseSequence, noise: &NoiseSpec, sample_index: u64) -> PulseSequence {
    if noise.is_zero() {
        return seq.clone();
    }
    let mut stream = GaussianStream::new(noise.seed, sample_index);
    let mut out = seq.clone();
    for pulse in &mut out.pulses {
        let jitter = stream.next_fwhm(noise.phase_fwhm);
        let span = stream.next_fwhm(noise.span_fraction_fwhm);
        let pump_scale = 1.0 + stream.next_fwhm(noise.area_fraction_fwhm);
        let stokes_scale = 1.0 + stream.next_fwhm(noise.area_fraction_fwhm);
        let commanded = pulse.relative_phase();
        *pulse = pulse.with_relative_phase(commanded * (1.0 + span) + jitter);
        pulse.pump.area = (pulse.pump.area * pump_scale).max(0.0);
        pulse.stokes.area = (pulse.stokes.area * stokes_scale).max(0.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pulse(area: f64) -> PulseSpec {
        PulseSpec::new(PulseRole::Pump, 1.5, DEFAULT_FWHM_PS, area, 0.0).unwrap()
    }

    #[test]
    fn envelope_integrates_to_area() {
        let p = pulse(1.93 * PI);
        let s = p.sigma();
        // composite Simpson over ±6σ
        let n = 4000;
        let (a, b) = (p.center - 6.0 * s, p.center + 6.0 * s);
        let h = (b - a) / n as f64;
        let mut sum = envelope(&p, a) + envelope(&p, b);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            sum += w * envelope(&p, a + k as f64 * h);
        }
        let integral = sum * h / 3.0;
        assert!(((integral - p.area) / p.area).abs() < 1e-6, "{integral}");
    }

    #[test]
    fn envelope_peak_and_width() {
        let p = pulse(2.0);
        assert!((envelope(&p, p.center) - 2.0 / (p.sigma() * (2.0 * PI).sqrt())).abs() < 1e-15);
        assert!((p.sigma() - 3.6053).abs() < 1e-4);
        let half = envelope(&p, p.center + p.fwhm / 2.0) / envelope(&p, p.center);
        assert!((half - 0.5).abs() < 1e-12);
    }

    #[test]
    fn invalid_pulses() {
        assert!(PulseSpec::new(PulseRole::Pump, 0.0, 0.0, 1.0, 0.0).is_err());
        assert!(PulseSpec::new(PulseRole::Pump, 0.0, 1.0, -1.0, 0.0).is_err());
        assert!(PulseSpec::new(PulseRole::Stokes, 0.0, 1.0, 1.0, f64::NAN).is_err());
        assert!(PulseSequence::new(vec![]).is_err());
    }

    #[test]
    fn default_window_and_override() {
        let seq = PulseSequence::new(vec![
            RamanPulse::new(0.0, 8.49, 1.0, 1.0, 0.0).unwrap(),
            RamanPulse::new(40.0, 8.49, 1.0, 1.0, 0.0).unwrap(),
        ])
        .unwrap();
        let s = fwhm_to_sigma(8.49);
        assert!((seq.t_start + 4.0 * s).abs() < 1e-12);
        assert!((seq.t_end - 40.0 - 4.0 * s).abs() < 1e-12);
        assert_eq!(seq.active_intervals().len(), 2);
        assert!(seq.clone().with_window(-5.0, 60.0).is_err());
        assert!(seq.with_window(-20.0, 60.0).is_ok());
    }

    #[test]
    fn zero_noise_is_identity() {
        let seq = PulseSequence::single(RamanPulse::new(0.0, 8.49, 6.0, 30.0, 0.4).unwrap()).unwrap();
        assert_eq!(perturb(&seq, &NoiseSpec::none(3), 17), seq);
    }

    #[test]
    fn perturbation_is_deterministic() {
        let seq = PulseSequence::new(vec![
            RamanPulse::new(0.0, 8.49, 6.0, 30.0, 1.0).unwrap(),
            RamanPulse::new(40.0, 8.49, 6.0, 30.0, 0.0).unwrap(),
        ])
        .unwrap();
        let noise = NoiseSpec { seed: 42, ..NoiseSpec::default() };
        let a = perturb(&seq, &noise, 5);
        let b = perturb(&seq, &noise, 5);
        let c = perturb(&seq, &noise, 6);
        for (x, y) in a.pulses.iter().zip(&b.pulses) {
            assert_eq!(x.stokes.phase.to_bits(), y.stokes.phase.to_bits());
            assert_eq!(x.stokes.area.to_bits(), y.stokes.area.to_bits());
        }
        assert_ne!(a, c);
    }

    /// Monte-Carlo check of the sampler: sample FWHM from the standard deviation.
    #[test]
    fn phase_jitter_has_requested_fwhm() {
        let target = 0.037 * PI;
        let mut stream = GaussianStream::new(11, 0);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| stream.next_fwhm(target)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let fwhm = var.sqrt() * FWHM_PER_SIGMA;
        assert!(((fwhm - target) / target).abs() < 0.02, "{fwhm} vs {target}");
    }

    proptest! {
        #[test]
        fn area_scaling_is_linear(area in 0.0f64..20.0, t in -30.0f64..30.0) {
            let a = envelope(&pulse(2.0 * area), t);
            let b = 2.0 * envelope(&pulse(area), t);
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }

        #[test]
        fn time_translation(d in -20.0f64..20.0, t in -30.0f64..30.0) {
            let p = pulse(3.0);
            let moved = p.shifted(d);
            prop_assert!((envelope(&moved, t) - envelope(&p, t - d)).abs() <= 1e-12);
        }
    }
}
