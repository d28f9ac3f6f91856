//! Adaptive Dormand–Prince 5(4) integration of the Lindblad master equation.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::algebra::{diagnostics, lindblad_with_cache, ComplexMatrix, DensityMatrix};
use crate::drive::PulseSequence;
use crate::error::{Error, Result};
use crate::system::{DissipatorSpec, Dissipation, SystemModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Largest step while any pulse is on, ps.
    pub max_step: f64,
    /// Largest step in field-free gaps between pulses, ps. Only used by
    /// [`simulate`]; [`evolve`] always honours `max_step`.
    pub quiet_max_step: f64,
    /// Times at which the state is recorded. Empty means "final time only".
    pub sample_times: Vec<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self::for_fwhm(crate::drive::DEFAULT_FWHM_PS)
    }
}

impl IntegratorConfig {
    /// Defaults for pulses of the given FWHM: max step min(σ/20, 0.02 ps).
    pub fn for_fwhm(fwhm: f64) -> Self {
        let sigma = crate::units::fwhm_to_sigma(fwhm);
        Self { rel_tol: 1e-8, abs_tol: 1e-10, max_step: (sigma / 20.0).min(0.02), quiet_max_step: 0.5, sample_times: Vec::new() }
    }

    pub fn with_samples(mut self, times: Vec<f64>) -> Self {
        self.sample_times = times;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("max_step", self.max_step),
            ("quiet_max_step", self.quiet_max_step),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter { name, reason: format!("{v} must be > 0") });
            }
        }
        if self.sample_times.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::InvalidParameter { name: "sample_times", reason: "must be sorted".into() });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimDiagnostics {
    pub final_trace_defect: f64,
    pub max_trace_defect: f64,
    /// Most negative eigenvalue seen at any sample (0 when all are ≥ 0).
    pub min_eigenvalue: f64,
    /// Largest |tr ρ² − tr ρ0²| over the samples.
    pub max_purity_change: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl SimDiagnostics {
    fn merge(&mut self, other: &SimDiagnostics) {
        self.final_trace_defect = other.final_trace_defect;
        self.max_trace_defect = self.max_trace_defect.max(other.max_trace_defect);
        self.min_eigenvalue = self.min_eigenvalue.min(other.min_eigenvalue);
        self.max_purity_change = self.max_purity_change.max(other.max_purity_change);
        self.accepted_steps += other.accepted_steps;
        self.rejected_steps += other.rejected_steps;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimResult {
    pub times: Vec<f64>,
    pub states: Vec<ComplexMatrix>,
    pub labels: Vec<String>,
    pub diagnostics: SimDiagnostics,
}

impl SimResult {
    pub fn with_labels(mut self, labels: &[&str]) -> Self {
        self.labels = labels.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn final_state(&self) -> &ComplexMatrix {
        self.states.last().expect("a simulation always records at least one sample")
    }

    pub fn population_series(&self, level: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[(level, level)].re).collect()
    }

    /// Per-level population series, indexed `[level][sample]`.
    pub fn populations(&self) -> Vec<Vec<f64>> {
        let n = self.states.first().map_or(0, |s| s.dim());
        (0..n).map(|k| self.population_series(k)).collect()
    }

    /// ρ(i, j) at every sample.
    pub fn coherence(&self, i: usize, j: usize) -> Vec<C64> {
        self.states.iter().map(|s| s[(i, j)]).collect()
    }

    /// ⟨h1|ρ|q⟩ with q the last basis level.
    pub fn coherence_h1h2(&self) -> Vec<C64> {
        let q = self.states.first().map_or(0, |s| s.dim() - 1);
        self.coherence(0, q)
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels.iter().position(|l| l == label).ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }
}

/// Population of `level` at the last sample.
pub fn final_population(result: &SimResult, level: &str) -> Result<f64> {
    let k = result.index_of(level)?;
    Ok(result.final_state()[(k, k)].re)
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// continuous extension
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const PI_BETA: f64 = 0.04;
const PI_ALPHA: f64 = 0.2 - 0.75 * PI_BETA;

struct Jump {
    rate_half: f64,
    a: ComplexMatrix,
    ad: ComplexMatrix,
    ada: ComplexMatrix,
}

struct Rhs<'a, H> {
    hamiltonian: &'a H,
    jumps: Vec<Jump>,
}

impl<H: Fn(f64) -> ComplexMatrix> Rhs<'_, H> {
    #[inline]
    fn eval(&self, t: f64, rho: &ComplexMatrix) -> ComplexMatrix {
        let h = (self.hamiltonian)(t);
        let mut out = (h * *rho - *rho * h).scale(C64::new(0.0, -1.0));
        for j in &self.jumps {
            out.add_scaled(j.rate_half, &lindblad_with_cache(&j.a, &j.ad, &j.ada, rho));
        }
        out
    }
}

fn error_norm(err: &ComplexMatrix, y0: &ComplexMatrix, y1: &ComplexMatrix, cfg: &IntegratorConfig) -> f64 {
    let n = err.dim();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let scale_re = cfg.abs_tol + cfg.rel_tol * y0[(i, j)].re.abs().max(y1[(i, j)].re.abs());
            let scale_im = cfg.abs_tol + cfg.rel_tol * y0[(i, j)].im.abs().max(y1[(i, j)].im.abs());
            let e = err[(i, j)];
            acc += (e.re / scale_re).powi(2) + (e.im / scale_im).powi(2);
        }
    }
    (acc / (2 * n * n) as f64).sqrt()
}

fn purity(m: &ComplexMatrix) -> f64 {
    (*m * *m).trace().re
}

/// Integrates dρ/dt = −i[H, ρ] + Σ (γ_k/2) L[A_k]ρ from `t_start` to `t_end`.
///
/// The state is re-symmetrized after every accepted step. States at
/// `cfg.sample_times` come from the method's dense output.
pub fn evolve<H>(
    hamiltonian: H,
    dissipators: &[DissipatorSpec],
    rho0: &DensityMatrix,
    t_start: f64,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<SimResult>
where
    H: Fn(f64) -> ComplexMatrix,
{
    evolve_capped(&hamiltonian, dissipators, rho0.matrix(), t_start, t_end, cfg, cfg.max_step)
}

fn evolve_capped<H>(
    hamiltonian: &H,
    dissipators: &[DissipatorSpec],
    rho0: &ComplexMatrix,
    t_start: f64,
    t_end: f64,
    cfg: &IntegratorConfig,
    max_step: f64,
) -> Result<SimResult>
where
    H: Fn(f64) -> ComplexMatrix,
{
    cfg.validate()?;
    if !(t_end >= t_start) || !t_start.is_finite() || !t_end.is_finite() {
        return Err(Error::InvalidParameter { name: "time span", reason: format!("[{t_start}, {t_end}]") });
    }
    let n = rho0.dim();
    for d in dissipators {
        if d.operator.dim() != n {
            return Err(Error::DimensionMismatch { left: n, right: d.operator.dim() });
        }
        if !(d.rate >= 0.0) {
            return Err(Error::InvalidParameter { name: "rate", reason: format!("{} must be >= 0", d.rate) });
        }
    }
    let samples: Vec<f64> = if cfg.sample_times.is_empty() { vec![t_end] } else { cfg.sample_times.clone() };
    let slack = 1e-9 * (1.0 + t_end.abs().max(t_start.abs()));
    if samples.iter().any(|&s| s < t_start - slack || s > t_end + slack) {
        return Err(Error::InvalidParameter {
            name: "sample_times",
            reason: format!("samples must lie within [{t_start}, {t_end}]"),
        });
    }

    let rhs = Rhs {
        hamiltonian,
        jumps: dissipators
            .iter()
            .map(|d| {
                let ad = d.operator.adjoint();
                Jump { rate_half: 0.5 * d.rate, a: d.operator, ad, ada: ad * d.operator }
            })
            .collect(),
    };

    let purity0 = purity(rho0);
    let mut diag = SimDiagnostics::default();
    let mut out_times = Vec::with_capacity(samples.len());
    let mut out_states = Vec::with_capacity(samples.len());
    let mut record = |t: f64, state: ComplexMatrix, diag: &mut SimDiagnostics| {
        let rep = diagnostics(&state);
        diag.max_trace_defect = diag.max_trace_defect.max(rep.trace_defect);
        diag.min_eigenvalue = diag.min_eigenvalue.min(rep.min_eigenvalue);
        diag.max_purity_change = diag.max_purity_change.max((purity(&state) - purity0).abs());
        out_times.push(t);
        out_states.push(state);
    };

    let mut next_sample = 0;
    let mut t = t_start;
    let mut y = *rho0;
    while next_sample < samples.len() && samples[next_sample] <= t_start {
        record(samples[next_sample], y, &mut diag);
        next_sample += 1;
    }

    let span = t_end - t_start;
    if span > 0.0 {
        let mut k1 = rhs.eval(t, &y);
        let mut h = max_step.min(span).min(0.01 * span.max(1e-3)).max(1e-6 * max_step);
        let mut err_prev: f64 = 1e-4;
        let mut last_rejected = false;
        loop {
            let remaining = t_end - t;
            if remaining <= 1e-12 * (1.0 + t_end.abs()) {
                break;
            }
            let mut final_step = false;
            if h >= remaining {
                h = remaining;
                final_step = true;
            }
            if h < 1e-13 * (1.0 + t.abs()) {
                return Err(Error::StepUnderflow { time: t, step: h, error: err_prev });
            }

            let mut s = y;
            s.add_scaled(h * A21, &k1);
            let k2 = rhs.eval(t + C2 * h, &s);
            let mut s = y;
            s.add_scaled(h * A31, &k1);
            s.add_scaled(h * A32, &k2);
            let k3 = rhs.eval(t + C3 * h, &s);
            let mut s = y;
            s.add_scaled(h * A41, &k1);
            s.add_scaled(h * A42, &k2);
            s.add_scaled(h * A43, &k3);
            let k4 = rhs.eval(t + C4 * h, &s);
            let mut s = y;
            s.add_scaled(h * A51, &k1);
            s.add_scaled(h * A52, &k2);
            s.add_scaled(h * A53, &k3);
            s.add_scaled(h * A54, &k4);
            let k5 = rhs.eval(t + C5 * h, &s);
            let mut s = y;
            s.add_scaled(h * A61, &k1);
            s.add_scaled(h * A62, &k2);
            s.add_scaled(h * A63, &k3);
            s.add_scaled(h * A64, &k4);
            s.add_scaled(h * A65, &k5);
            let k6 = rhs.eval(t + h, &s);
            let mut y1 = y;
            y1.add_scaled(h * A71, &k1);
            y1.add_scaled(h * A73, &k3);
            y1.add_scaled(h * A74, &k4);
            y1.add_scaled(h * A75, &k5);
            y1.add_scaled(h * A76, &k6);
            let t1 = if final_step { t_end } else { t + h };
            let k7 = rhs.eval(t1, &y1);

            let mut e = ComplexMatrix::zeros(n);
            e.add_scaled(h * E1, &k1);
            e.add_scaled(h * E3, &k3);
            e.add_scaled(h * E4, &k4);
            e.add_scaled(h * E5, &k5);
            e.add_scaled(h * E6, &k6);
            e.add_scaled(h * E7, &k7);
            let err = error_norm(&e, &y, &y1, cfg);
            if !err.is_finite() {
                return Err(Error::StepUnderflow { time: t, step: h, error: err });
            }

            if err <= 1.0 {
                // dense output at samples inside (t, t1]
                if next_sample < samples.len() && samples[next_sample] <= t1 {
                    let r2 = y1 - y;
                    let mut r3 = k1.scale_re(h);
                    r3.add_scaled(-1.0, &r2);
                    let mut r4 = r2 - r3;
                    r4.add_scaled(-h, &k7);
                    let mut r5 = ComplexMatrix::zeros(n);
                    r5.add_scaled(h * D1, &k1);
                    r5.add_scaled(h * D3, &k3);
                    r5.add_scaled(h * D4, &k4);
                    r5.add_scaled(h * D5, &k5);
                    r5.add_scaled(h * D6, &k6);
                    r5.add_scaled(h * D7, &k7);
                    while next_sample < samples.len() && (samples[next_sample] <= t1 || final_step) {
                        let ts = samples[next_sample];
                        let th = ((ts - t) / h).clamp(0.0, 1.0);
                        let mut inner = r4;
                        inner.add_scaled(1.0 - th, &r5);
                        let mut mid = r3;
                        mid.add_scaled(th, &inner);
                        let mut outer = r2;
                        outer.add_scaled(1.0 - th, &mid);
                        let mut ys = y;
                        ys.add_scaled(th, &outer);
                        ys.hermitize();
                        record(ts, ys, &mut diag);
                        next_sample += 1;
                    }
                }
                t = t1;
                y = y1;
                y.hermitize();
                k1 = k7;
                diag.accepted_steps += 1;
                if final_step {
                    break;
                }
                let err_c = err.max(1e-10);
                let mut fac = SAFETY * err_c.powf(-PI_ALPHA) * err_prev.powf(PI_BETA);
                fac = fac.clamp(FAC_MIN, FAC_MAX);
                if last_rejected {
                    fac = fac.min(1.0);
                }
                h = (h * fac).min(max_step);
                err_prev = err_c.max(1e-4);
                last_rejected = false;
            } else {
                diag.rejected_steps += 1;
                let fac = (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, 1.0);
                h *= fac;
                last_rejected = true;
            }
        }
    }
    while next_sample < samples.len() {
        record(samples[next_sample], y, &mut diag);
        next_sample += 1;
    }
    diag.final_trace_defect = (y.trace() - C64::new(1.0, 0.0)).norm();

    Ok(SimResult { times: out_times, states: out_states, labels: Vec::new(), diagnostics: diag })
}

/// Evolves a model under a pulse sequence from `rho0`, over the sequence
/// window. Field-free gaps between pulses are integrated with the relaxed
/// `quiet_max_step`.
pub fn simulate(
    model: &SystemModel,
    seq: &PulseSequence,
    dissipation: &Dissipation,
    rho0: &DensityMatrix,
    cfg: &IntegratorConfig,
) -> Result<SimResult> {
    if rho0.dim() != model.dim() {
        return Err(Error::DimensionMismatch { left: model.dim(), right: rho0.dim() });
    }
    let h = model.rotating(seq)?;
    let dissipators = model.dissipators(dissipation.gamma1, dissipation.gamma2)?;
    let hf = |t: f64| h.at(t);

    let mut segments: Vec<(f64, f64, f64)> = Vec::new();
    let mut cursor = seq.t_start;
    for (lo, hi) in seq.active_intervals() {
        if lo > cursor {
            segments.push((cursor, lo, cfg.quiet_max_step.max(cfg.max_step)));
        }
        segments.push((lo.max(cursor), hi, cfg.max_step));
        cursor = hi;
    }
    if seq.t_end > cursor {
        segments.push((cursor, seq.t_end, cfg.quiet_max_step.max(cfg.max_step)));
    }

    let all_samples: Vec<f64> = cfg.sample_times.clone();
    let mut result = SimResult { times: Vec::new(), states: Vec::new(), labels: Vec::new(), diagnostics: SimDiagnostics::default() };
    let mut state = *rho0.matrix();
    let mut used = 0;
    let last = segments.len() - 1;
    for (k, &(a, b, step)) in segments.iter().enumerate() {
        let mut seg_samples = Vec::new();
        while used < all_samples.len() && (all_samples[used] <= b || k == last) {
            seg_samples.push(all_samples[used].max(a));
            used += 1;
        }
        let want_final = k == last && all_samples.is_empty();
        let mut seg_cfg = IntegratorConfig { sample_times: seg_samples.clone(), ..cfg.clone() };
        if seg_samples.is_empty() || (want_final && seg_samples.last() != Some(&b)) {
            seg_cfg.sample_times.push(b);
        }
        let mut seg = evolve_capped(&hf, &dissipators, &state, a, b, &seg_cfg, step)?;
        state = *seg.states.last().unwrap();
        // the state at b is the last recorded sample only if b was requested
        if seg_samples.len() < seg.states.len() {
            seg.times.pop();
            seg.states.pop();
        }
        result.times.extend(seg.times);
        result.states.extend(seg.states);
        result.diagnostics.merge(&seg.diagnostics);
    }
    if result.states.is_empty() {
        result.times.push(seq.t_end);
        result.states.push(state);
    }
    let purity0 = purity(rho0.matrix());
    result.diagnostics.max_purity_change = result
        .states
        .iter()
        .map(|s| (purity(s) - purity0).abs())
        .fold(result.diagnostics.max_purity_change, f64::max);
    result.diagnostics.final_trace_defect = (state.trace() - C64::new(1.0, 0.0)).norm();
    Ok(result.with_labels(model.labels()))
}
