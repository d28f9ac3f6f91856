//! Least-squares fits of the signal models, FFT spectra and fringe amplitudes.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{wrap_angle, FWHM_PER_SIGMA};

const MAX_ITERATIONS: usize = 500;
const STEP_TOLERANCE: f64 = 1e-10;
const GRADIENT_TOLERANCE: f64 = 1e-12;
const LAMBDA_MAX: f64 = 1e16;
const FOUR_LN2: f64 = 4.0 * std::f64::consts::LN_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// `amplitude · exp(−4 ln2 (x − center)² / fwhm²) + offset`
    Gaussian,
    /// `offset + amplitude · cos(2π · frequency · x − phase)`
    Sinusoid,
    /// `amplitude · exp(−x / tau) + offset`
    ExpDecay,
    /// `amplitude · (Γ/2)² / ((x − center)² + (Γ/2)²) + offset`, Γ = linewidth
    Lorentzian,
    /// `amplitude · x / (p0 + x)`
    Saturation,
}

impl FitModel {
    pub const ALL: [FitModel; 5] =
        [FitModel::Gaussian, FitModel::Sinusoid, FitModel::ExpDecay, FitModel::Lorentzian, FitModel::Saturation];

    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            FitModel::Gaussian => &["amplitude", "center", "fwhm", "offset"],
            FitModel::Sinusoid => &["amplitude", "frequency", "phase", "offset"],
            FitModel::ExpDecay => &["amplitude", "tau", "offset"],
            FitModel::Lorentzian => &["amplitude", "center", "linewidth", "offset"],
            FitModel::Saturation => &["amplitude", "p0"],
        }
    }

    pub fn eval(&self, p: &[f64], x: f64) -> f64 {
        match self {
            FitModel::Gaussian => p[0] * (-FOUR_LN2 * (x - p[1]).powi(2) / (p[2] * p[2])).exp() + p[3],
            FitModel::Sinusoid => p[3] + p[0] * (2.0 * PI * p[1] * x - p[2]).cos(),
            FitModel::ExpDecay => p[0] * (-x / p[1]).exp() + p[2],
            FitModel::Lorentzian => {
                let g2 = 0.25 * p[2] * p[2];
                p[0] * g2 / ((x - p[1]).powi(2) + g2) + p[3]
            }
            FitModel::Saturation => p[0] * x / (p[1] + x),
        }
    }

    /// ∂model/∂p at `x`.
    fn gradient(&self, p: &[f64], x: f64, g: &mut [f64]) {
        match self {
            FitModel::Gaussian => {
                let d = x - p[1];
                let e = (-FOUR_LN2 * d * d / (p[2] * p[2])).exp();
                g[0] = e;
                g[1] = p[0] * e * 2.0 * FOUR_LN2 * d / (p[2] * p[2]);
                g[2] = p[0] * e * 2.0 * FOUR_LN2 * d * d / p[2].powi(3);
                g[3] = 1.0;
            }
            FitModel::Sinusoid => {
                let arg = 2.0 * PI * p[1] * x - p[2];
                let (s, c) = arg.sin_cos();
                g[0] = c;
                g[1] = -p[0] * s * 2.0 * PI * x;
                g[2] = p[0] * s;
                g[3] = 1.0;
            }
            FitModel::ExpDecay => {
                let e = (-x / p[1]).exp();
                g[0] = e;
                g[1] = p[0] * e * x / (p[1] * p[1]);
                g[2] = 1.0;
            }
            FitModel::Lorentzian => {
                let d = x - p[1];
                let g2 = 0.25 * p[2] * p[2];
                let den = d * d + g2;
                g[0] = g2 / den;
                g[1] = p[0] * g2 * 2.0 * d / (den * den);
                g[2] = p[0] * 0.5 * p[2] * d * d / (den * den);
                g[3] = 1.0;
            }
            FitModel::Saturation => {
                let den = p[1] + x;
                g[0] = x / den;
                g[1] = -p[0] * x / (den * den);
            }
        }
    }

    /// Data-driven starting point: moments for the peaked models, FFT for the
    /// sinusoid, log-linear regression for the decay and a double-reciprocal
    /// regression for saturation.
    pub fn initial_guess(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        check_series(x, y, self.param_names().len())?;
        let (ymin, ymax) = min_max(y);
        match self {
            FitModel::Gaussian | FitModel::Lorentzian => {
                let offset = ymin;
                let amplitude = ymax - ymin;
                let w: Vec<f64> = y.iter().map(|v| v - offset).collect();
                let total: f64 = w.iter().sum();
                let (xmin, xmax) = min_max(x);
                if total <= 0.0 {
                    return Ok(vec![0.0, 0.5 * (xmin + xmax), (xmax - xmin).max(1e-12) / 4.0, offset]);
                }
                let imax = argmax(y);
                let center = x[imax];
                let width = half_max_width(x, &w, imax).unwrap_or_else(|| {
                    let var = w.iter().zip(x).map(|(wi, xi)| wi * (xi - center).powi(2)).sum::<f64>() / total;
                    FWHM_PER_SIGMA * var.sqrt()
                });
                Ok(vec![amplitude, center, width.max(1e-12), offset])
            }
            FitModel::Sinusoid => {
                let f = fft_spectrum(x, y)?.peak_frequency;
                let h = harmonic_fit(x, y, f)?;
                Ok(vec![h.amplitude, f, h.phase, h.offset])
            }
            FitModel::ExpDecay => {
                let n = x.len();
                let tail = y[n - 1];
                let sign = if y[0] >= tail { 1.0 } else { -1.0 };
                let span = (y[0] - tail).abs();
                let floor = 1e-3 * span;
                let pts: Vec<(f64, f64)> = x[..n - 1]
                    .iter()
                    .zip(&y[..n - 1])
                    .filter(|(_, v)| sign * (*v - tail) > floor)
                    .map(|(xi, v)| (*xi, (sign * (v - tail)).ln()))
                    .collect();
                let (xmin, xmax) = min_max(x);
                let tau = match linear_regression(&pts) {
                    Some((slope, _)) if slope < 0.0 => -1.0 / slope,
                    _ => 0.5 * (xmax - xmin),
                };
                let amplitude = sign * span * (x[0] / tau).exp();
                Ok(vec![amplitude, tau, tail])
            }
            FitModel::Saturation => {
                let pts: Vec<(f64, f64)> =
                    x.iter().zip(y).filter(|(xi, yi)| **xi > 0.0 && **yi > 0.0).map(|(xi, yi)| (1.0 / xi, 1.0 / yi)).collect();
                match linear_regression(&pts) {
                    Some((slope, intercept)) if intercept > 0.0 && slope > 0.0 => {
                        Ok(vec![1.0 / intercept, slope / intercept])
                    }
                    _ => {
                        let (_, xmax) = min_max(x);
                        Ok(vec![2.0 * ymax, xmax.max(1e-12)])
                    }
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    pub names: Vec<String>,
    pub params: Vec<f64>,
    pub param_uncertainties: Vec<f64>,
    /// √Σ r²
    pub residual_norm: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|k| self.params[k])
    }

    pub fn uncertainty(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|k| self.param_uncertainties[k])
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.model.eval(&self.params, x)
    }
}

fn check_series(x: &[f64], y: &[f64], n_params: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { left: x.len(), right: y.len() });
    }
    if x.len() < 2 * n_params {
        return Err(Error::Fit(format!("{} points for {} parameters; need at least {}", x.len(), n_params, 2 * n_params)));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Fit("data contain non-finite values".into()));
    }
    Ok(())
}

/// Levenberg–Marquardt fit of `model` to (x, y) starting from `init`.
///
/// `init` must name every model parameter. A run that exhausts the
/// iteration budget is returned with `converged = false`.
pub fn fit(model: FitModel, x: &[f64], y: &[f64], init: &[(&str, f64)]) -> Result<FitResult> {
    let names = model.param_names();
    let mut p0 = Vec::with_capacity(names.len());
    for name in names {
        let v = init
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::Fit(format!("missing initial value for `{name}`")))?;
        p0.push(v);
    }
    if let Some((n, _)) = init.iter().find(|(n, _)| !names.contains(n)) {
        return Err(Error::Fit(format!("unknown parameter `{n}` for {model:?}")));
    }
    fit_vec(model, x, y, &p0)
}

/// Fit starting from [`FitModel::initial_guess`].
pub fn fit_auto(model: FitModel, x: &[f64], y: &[f64]) -> Result<FitResult> {
    let p0 = model.initial_guess(x, y)?;
    fit_vec(model, x, y, &p0)
}

fn fit_vec(model: FitModel, x: &[f64], y: &[f64], p0: &[f64]) -> Result<FitResult> {
    let n = p0.len();
    check_series(x, y, n)?;
    if p0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("initial values must be finite".into()));
    }
    let m = x.len();
    let mut p = p0.to_vec();
    let mut jac = vec![0.0; m * n];
    let mut r = vec![0.0; m];

    let cost = |p: &[f64]| -> f64 { x.iter().zip(y).map(|(xi, yi)| (model.eval(p, *xi) - yi).powi(2)).sum::<f64>() };
    let linearize = |p: &[f64], jac: &mut [f64], r: &mut [f64]| {
        for i in 0..m {
            r[i] = model.eval(p, x[i]) - y[i];
            model.gradient(p, x[i], &mut jac[i * n..(i + 1) * n]);
        }
    };
    let normal = |jac: &[f64], r: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut a = vec![0.0; n * n];
        let mut g = vec![0.0; n];
        for i in 0..m {
            let row = &jac[i * n..(i + 1) * n];
            for j in 0..n {
                g[j] += row[j] * r[i];
                for k in 0..n {
                    a[j * n + k] += row[j] * row[k];
                }
            }
        }
        (a, g)
    };

    let mut c = cost(&p);
    if !c.is_finite() {
        return Err(Error::Fit("model is not finite at the initial values".into()));
    }
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    linearize(&p, &mut jac, &mut r);
    let (mut a, mut g) = normal(&jac, &r);

    while iterations < MAX_ITERATIONS {
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm < GRADIENT_TOLERANCE {
            converged = true;
            break;
        }
        iterations += 1;
        let dmax = (0..n).map(|j| a[j * n + j]).fold(0.0, f64::max);
        if dmax == 0.0 {
            return Err(Error::Fit("normal matrix is zero: the model does not depend on its parameters".into()));
        }
        let mut accepted = false;
        while lambda <= LAMBDA_MAX {
            let mut damped = a.clone();
            for j in 0..n {
                damped[j * n + j] += lambda * a[j * n + j].max(1e-12 * dmax);
            }
            let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
            let Some(step) = solve(&damped, &rhs, n) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(&step).map(|(a, b)| a + b).collect();
            let pnorm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            let snorm = step.iter().map(|v| v * v).sum::<f64>().sqrt();
            let small = snorm <= STEP_TOLERANCE * (pnorm + STEP_TOLERANCE);
            let ct = cost(&trial);
            if ct.is_finite() && ct <= c {
                p = trial;
                c = ct;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if small {
                    converged = true;
                }
                break;
            }
            if small {
                // No step this short improves the cost: p is a minimum to
                // working precision.
                converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if converged {
            if accepted {
                linearize(&p, &mut jac, &mut r);
                (a, g) = normal(&jac, &r);
            }
            break;
        }
        if !accepted {
            return Err(Error::Fit(format!("damping escalated past {LAMBDA_MAX:e} without progress")));
        }
        linearize(&p, &mut jac, &mut r);
        (a, g) = normal(&jac, &r);
    }

    let dof = (m - n).max(1) as f64;
    let s2 = c / dof;
    let param_uncertainties = match invert(&a, n) {
        Some(inv) => (0..n).map(|j| (inv[j * n + j] * s2).max(0.0).sqrt()).collect(),
        None => vec![f64::INFINITY; n],
    };
    let mut params = p;
    normalize(model, &mut params);
    Ok(FitResult {
        model,
        names: model.param_names().iter().map(|s| s.to_string()).collect(),
        params,
        param_uncertainties,
        residual_norm: c.sqrt(),
        gradient_norm: g.iter().map(|v| v * v).sum::<f64>().sqrt(),
        iterations,
        converged,
    })
}

/// Canonical sign conventions: positive sinusoid amplitude with wrapped phase,
/// positive widths.
fn normalize(model: FitModel, p: &mut [f64]) {
    match model {
        FitModel::Sinusoid => {
            if p[0] < 0.0 {
                p[0] = -p[0];
                p[2] += PI;
            }
            p[2] = wrap_angle(p[2]);
        }
        FitModel::Gaussian | FitModel::Lorentzian => p[2] = p[2].abs(),
        _ => {}
    }
}

/// Gaussian elimination with partial pivoting on a row-major n×n system.
fn solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))?;
        if m[piv * n + col].abs() <= 1e-300_f64.max(f64::EPSILON * 1e-4 * scale) {
            return None;
        }
        if piv != col {
            for k in 0..n {
                m.swap(piv * n + k, col * n + k);
            }
            x.swap(piv, col);
        }
        for row in col + 1..n {
            let f = m[row * n + col] / m[col * n + col];
            for k in col..n {
                m[row * n + k] -= f * m[col * n + k];
            }
            x[row] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut v = x[col];
        for k in col + 1..n {
            v -= m[col * n + k] * x[k];
        }
        x[col] = v / m[col * n + col];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn invert(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; n * n];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = solve(a, &e, n)?;
        for i in 0..n {
            inv[i * n + j] = col[i];
        }
    }
    Some(inv)
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)))
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = k;
        }
    }
    best
}

/// Full width at half maximum of a baseline-subtracted peak, by linear
/// interpolation of the crossings on either side of `imax`.
fn half_max_width(x: &[f64], w: &[f64], imax: usize) -> Option<f64> {
    let half = 0.5 * w[imax];
    let cross = |a: usize, b: usize| x[a] + (half - w[a]) * (x[b] - x[a]) / (w[b] - w[a]);
    let left = (1..=imax).rev().find(|&k| w[k - 1] < half).map(|k| cross(k - 1, k))?;
    let right = (imax..w.len() - 1).find(|&k| w[k + 1] < half).map(|k| cross(k, k + 1))?;
    Some((right - left).abs())
}

/// Ordinary least-squares line through (x, y) pairs: returns (slope, intercept).
fn linear_regression(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Linear least-squares fit of `offset + amplitude·cos(2π f x − phase)` at a
/// fixed frequency.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicFit {
    pub offset: f64,
    pub amplitude: f64,
    pub phase: f64,
}

pub fn harmonic_fit(x: &[f64], y: &[f64], frequency: f64) -> Result<HarmonicFit> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { left: x.len(), right: y.len() });
    }
    if x.len() < 3 {
        return Err(Error::Fit("harmonic fit needs at least 3 points".into()));
    }
    let mut a = [0.0; 9];
    let mut b = [0.0; 3];
    for (xi, yi) in x.iter().zip(y) {
        let (s, c) = (2.0 * PI * frequency * xi).sin_cos();
        let row = [1.0, c, s];
        for j in 0..3 {
            b[j] += row[j] * yi;
            for k in 0..3 {
                a[j * 3 + k] += row[j] * row[k];
            }
        }
    }
    let sol = solve(&a, &b, 3).ok_or_else(|| Error::Fit("harmonic design matrix is singular".into()))?;
    Ok(HarmonicFit { offset: sol[0], amplitude: sol[1].hypot(sol[2]), phase: sol[2].atan2(sol[1]) })
}

/// One-sided magnitude spectrum of a Hann-windowed, mean-removed series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Bin frequencies, in inverse units of the sample axis (THz for ps).
    pub frequencies: Vec<f64>,
    /// |X_k| of the windowed series.
    pub magnitudes: Vec<f64>,
    /// Interpolated location of the largest bin.
    pub peak_frequency: f64,
    /// Σ |x_w|² of the windowed series.
    pub windowed_energy: f64,
    len: usize,
    step: f64,
}

impl Spectrum {
    /// Σ |x_w|² recovered from the one-sided spectrum.
    pub fn spectral_energy(&self) -> f64 {
        let n = self.len;
        let last = self.magnitudes.len() - 1;
        let mut e = 0.0;
        for (k, m) in self.magnitudes.iter().enumerate() {
            let weight = if k == 0 || (n % 2 == 0 && k == last) { 1.0 } else { 2.0 };
            e += weight * m * m;
        }
        e / n as f64
    }

    fn refine(&self, k: usize) -> f64 {
        let df = 1.0 / (self.len as f64 * self.step);
        if k == 0 || k + 1 >= self.magnitudes.len() {
            return k as f64 * df;
        }
        let (a, b, c) = (self.magnitudes[k - 1], self.magnitudes[k], self.magnitudes[k + 1]);
        let offset = if a > 0.0 && b > 0.0 && c > 0.0 {
            let (la, lb, lc) = (a.ln(), b.ln(), c.ln());
            let den = la - 2.0 * lb + lc;
            if den < 0.0 { 0.5 * (la - lc) / den } else { 0.0 }
        } else {
            let den = a - 2.0 * b + c;
            if den < 0.0 { 0.5 * (a - c) / den } else { 0.0 }
        };
        (k as f64 + offset.clamp(-0.5, 0.5)) * df
    }

    /// The `count` largest local maxima, strongest first, with refined frequencies.
    pub fn peaks(&self, count: usize) -> Vec<(f64, f64)> {
        let m = &self.magnitudes;
        let mut idx: Vec<usize> = (1..m.len().saturating_sub(1)).filter(|&k| m[k] > m[k - 1] && m[k] >= m[k + 1]).collect();
        idx.sort_by(|a, b| m[*b].total_cmp(&m[*a]));
        idx.into_iter().take(count).map(|k| (self.refine(k), m[k])).collect()
    }
}

/// Magnitude spectrum of uniformly sampled data (≥ 8 points).
pub fn fft_spectrum(x: &[f64], y: &[f64]) -> Result<Spectrum> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { left: x.len(), right: y.len() });
    }
    let n = x.len();
    if n < 8 {
        return Err(Error::InvalidParameter { name: "series", reason: format!("{n} samples; need at least 8") });
    }
    let step = (x[n - 1] - x[0]) / (n - 1) as f64;
    if !(step > 0.0) {
        return Err(Error::InvalidParameter { name: "series", reason: "sample axis must increase".into() });
    }
    let deviation = x.windows(2).map(|w| ((w[1] - w[0]) - step).abs()).fold(0.0, f64::max) / step;
    if deviation > 1e-6 {
        return Err(Error::NonUniformSampling { deviation });
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = y
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let w = 0.5 - 0.5 * (2.0 * PI * k as f64 / (n - 1) as f64).cos();
            Complex::new((v - mean) * w, 0.0)
        })
        .collect();
    let windowed_energy = buf.iter().map(|c| c.norm_sqr()).sum::<f64>();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let magnitudes: Vec<f64> = buf[..=half].iter().map(|c| c.norm()).collect();
    let frequencies: Vec<f64> = (0..=half).map(|k| k as f64 / (n as f64 * step)).collect();
    let mut spectrum = Spectrum { frequencies, magnitudes, peak_frequency: 0.0, windowed_energy, len: n, step };
    let scale = y.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
    let kmax = argmax(&spectrum.magnitudes);
    if spectrum.magnitudes[kmax] > 1e-12 * scale * n as f64 {
        spectrum.peak_frequency = spectrum.refine(kmax);
    }
    Ok(spectrum)
}

/// Sinusoid fitted to a fine fringe scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FringeFit {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
    pub offset: f64,
    pub fit: FitResult,
}

/// Amplitude of a fringe, from a sinusoid fit seeded by the FFT peak and a
/// fixed-frequency linear fit.
pub fn fringe_amplitude(x: &[f64], y: &[f64]) -> Result<FringeFit> {
    let f0 = fft_spectrum(x, y)?.peak_frequency;
    // a reference inside the scan keeps phase and frequency decoupled
    let x0 = 0.5 * (x[0] + x[x.len() - 1]);
    let xs: Vec<f64> = x.iter().map(|v| v - x0).collect();
    let h = harmonic_fit(&xs, y, f0)?;
    let fit = fit_vec(FitModel::Sinusoid, &xs, y, &[h.amplitude, f0, h.phase, h.offset])?;
    if !fit.converged {
        return Err(Error::Fit(format!("fringe fit did not converge in {} iterations", fit.iterations)));
    }
    let frequency = fit.params[1];
    let phase = wrap_angle(fit.params[2] + 2.0 * PI * frequency * x0);
    Ok(FringeFit { amplitude: fit.params[0], frequency, phase, offset: fit.params[3], fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drive::GaussianStream;
    use proptest::prelude::*;

    fn grid(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
    }

    fn synth(model: FitModel, p: &[f64], x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| model.eval(p, *v)).collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cases: [(FitModel, Vec<f64>); 5] = [
            (FitModel::Gaussian, vec![0.8, 1.3, 12.0, 0.1]),
            (FitModel::Sinusoid, vec![0.4, 1.04, 0.3, 0.5]),
            (FitModel::ExpDecay, vec![0.9, 198.0, 0.02]),
            (FitModel::Lorentzian, vec![2.0, 0.5, 10.1, 0.3]),
            (FitModel::Saturation, vec![1.0, 396.0]),
        ];
        for (model, p) in cases {
            let mut g = vec![0.0; p.len()];
            for x in [0.3, 4.0, 150.0] {
                model.gradient(&p, x, &mut g);
                for j in 0..p.len() {
                    let h = 1e-6 * p[j].abs().max(1e-3);
                    let mut hi = p.clone();
                    let mut lo = p.clone();
                    hi[j] += h;
                    lo[j] -= h;
                    let fd = (model.eval(&hi, x) - model.eval(&lo, x)) / (2.0 * h);
                    assert!((fd - g[j]).abs() < 1e-6 * (1.0 + g[j].abs()), "{model:?} p{j} x={x}: {fd} vs {}", g[j]);
                }
            }
        }
    }

    #[test]
    fn noise_free_recovery_all_models() {
        let cases: [(FitModel, Vec<f64>, Vec<f64>); 5] = [
            (FitModel::Gaussian, vec![0.9, 1.0, 12.0, 0.05], grid(-40.0, 40.0, 161)),
            (FitModel::Sinusoid, vec![0.4, 1.0422, 0.7, 0.5], grid(30.0, 80.0, 1001)),
            (FitModel::ExpDecay, vec![0.45, 198.2, 0.01], grid(0.0, 600.0, 61)),
            (FitModel::Lorentzian, vec![1.0, 2.0, 10.11, 0.1], grid(-50.0, 50.0, 201)),
            (FitModel::Saturation, vec![1.0, 396.0], grid(10.0, 3000.0, 60)),
        ];
        for (model, truth, x) in cases {
            let y = synth(model, &truth, &x);
            let fit = fit_auto(model, &x, &y).unwrap();
            assert!(fit.converged, "{model:?}");
            for (got, want) in fit.params.iter().zip(&truth) {
                assert!(((got - want) / want).abs() < 1e-6, "{model:?}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn named_initial_values() {
        let x = grid(10.0, 3000.0, 40);
        let y = synth(FitModel::Saturation, &[0.25, 396.0], &x);
        let r = fit(FitModel::Saturation, &x, &y, &[("amplitude", 1.0), ("p0", 100.0)]).unwrap();
        assert!(((r.param("p0").unwrap() - 396.0) / 396.0).abs() < 1e-3);
        assert!(fit(FitModel::Saturation, &x, &y, &[("amplitude", 1.0)]).is_err());
        assert!(fit(FitModel::Saturation, &x, &y, &[("amplitude", 1.0), ("p0", 1.0), ("tau", 1.0)]).is_err());
        assert!(fit(FitModel::Saturation, &x[..3], &y[..3], &[("amplitude", 1.0), ("p0", 1.0)]).is_err());
    }

    #[test]
    fn constant_data_gives_zero_gaussian() {
        let x = grid(-10.0, 10.0, 41);
        let y = vec![0.3; 41];
        let fit = fit_auto(FitModel::Gaussian, &x, &y).unwrap();
        assert!(fit.converged);
        assert!(fit.param("amplitude").unwrap().abs() < 1e-9);
        assert!((fit.param("offset").unwrap() - 0.3).abs() < 1e-9);
    }

    /// Monte-Carlo of the fitter: τ = 198 ps with 1% Gaussian noise.
    #[test]
    fn exponential_with_noise() {
        let x = grid(0.0, 800.0, 161);
        let clean = synth(FitModel::ExpDecay, &[1.0, 198.0, 0.0], &x);
        let mut worst: f64 = 0.0;
        for trial in 0..100 {
            let mut s = GaussianStream::new(7, trial);
            let y: Vec<f64> = clean.iter().map(|v| v + 0.01 * s.next_standard()).collect();
            let fit = fit_auto(FitModel::ExpDecay, &x, &y).unwrap();
            worst = worst.max(((fit.param("tau").unwrap() - 198.0) / 198.0).abs());
        }
        assert!(worst < 0.03, "{worst}");
    }

    #[test]
    fn uncertainties_scale_with_noise() {
        let x = grid(0.0, 600.0, 121);
        let mut s = GaussianStream::new(1, 0);
        let y: Vec<f64> = synth(FitModel::ExpDecay, &[1.0, 198.0, 0.0], &x).iter().map(|v| v + 0.01 * s.next_standard()).collect();
        let fit = fit_auto(FitModel::ExpDecay, &x, &y).unwrap();
        let u = fit.uncertainty("tau").unwrap();
        assert!(u > 0.1 && u < 20.0, "{u}");
    }

    #[test]
    fn spectrum_peak_of_qubit_tone() {
        let x = grid(0.0, 100.0, 2001);
        let y: Vec<f64> = x.iter().map(|t| 0.5 + 0.4 * (2.0 * PI * 1.042 * t).cos()).collect();
        let s = fft_spectrum(&x, &y).unwrap();
        assert!(((s.peak_frequency - 1.042) / 1.042).abs() < 0.005, "{}", s.peak_frequency);
        assert!(((s.spectral_energy() - s.windowed_energy) / s.windowed_energy).abs() < 1e-9);
    }

    #[test]
    fn spectrum_of_constant_is_flat() {
        let x = grid(0.0, 10.0, 64);
        let s = fft_spectrum(&x, &vec![0.7; 64]).unwrap();
        assert_eq!(s.peak_frequency, 0.0);
        assert!(s.magnitudes.iter().all(|m| *m < 1e-12));
    }

    #[test]
    fn two_tones_resolved() {
        let x = grid(0.0, 200.0, 4001);
        let y: Vec<f64> = x.iter().map(|t| (2.0 * PI * 0.6 * t).sin() + 0.5 * (2.0 * PI * 1.3 * t).cos()).collect();
        let peaks = fft_spectrum(&x, &y).unwrap().peaks(2);
        assert!((peaks[0].0 - 0.6).abs() < 0.003 && (peaks[1].0 - 1.3).abs() < 0.003, "{peaks:?}");
    }

    #[test]
    fn non_uniform_sampling_rejected() {
        let mut x = grid(0.0, 10.0, 32);
        x[7] += 1e-3;
        assert!(matches!(fft_spectrum(&x, &vec![0.0; 32]), Err(Error::NonUniformSampling { .. })));
        assert!(fft_spectrum(&x[..5], &[0.0; 5]).is_err());
    }

    #[test]
    fn fringe_amplitude_exact() {
        let x = grid(40.0, 45.0, 101);
        let y: Vec<f64> = x.iter().map(|t| 0.5 + 0.4 * (2.0 * PI * 1.0422 * t).cos()).collect();
        let f = fringe_amplitude(&x, &y).unwrap();
        assert!((f.amplitude - 0.4).abs() < 1e-3);
        assert!((f.frequency - 1.0422).abs() < 1e-6);
    }

    #[test]
    fn fringe_amplitude_of_noise() {
        let x = grid(40.0, 45.0, 101);
        let mut s = GaussianStream::new(3, 0);
        let y: Vec<f64> = x.iter().map(|_| 0.5 + 0.01 * s.next_standard()).collect();
        let a = fringe_amplitude(&x, &y).map(|f| f.amplitude).unwrap_or(0.0);
        assert!(a <= 0.02, "{a}");
    }

    #[test]
    fn harmonic_fit_recovers_phase() {
        let x = grid(0.0, 2.0 * PI, 13);
        let y: Vec<f64> = x.iter().map(|p| 0.5 + 0.3 * (p - 1.1).cos()).collect();
        let h = harmonic_fit(&x, &y, 1.0 / (2.0 * PI)).unwrap();
        assert!((h.phase - 1.1).abs() < 1e-12 && (h.amplitude - 0.3).abs() < 1e-12 && (h.offset - 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn fringe_amplitude_is_phase_and_shift_invariant(phase in -3.1f64..3.1, shift in -50.0f64..50.0) {
            let x = grid(40.0, 45.0, 101);
            let y: Vec<f64> = x.iter().map(|t| 0.5 + 0.3 * (2.0 * PI * 1.0422 * t - phase).cos()).collect();
            let a = fringe_amplitude(&x, &y).unwrap().amplitude;
            let xs: Vec<f64> = x.iter().map(|t| t + shift).collect();
            let b = fringe_amplitude(&xs, &y).unwrap().amplitude;
            prop_assert!((a - 0.3).abs() < 1e-6);
            prop_assert!((a - b).abs() < 1e-6);
        }

        #[test]
        fn parseval(seed in 0u64..1000, n in 8usize..300) {
            let mut s = GaussianStream::new(seed, 0);
            let x = grid(0.0, 1.0, n);
            let y: Vec<f64> = (0..n).map(|_| s.next_standard()).collect();
            let sp = fft_spectrum(&x, &y).unwrap();
            prop_assert!(((sp.spectral_energy() - sp.windowed_energy) / sp.windowed_energy).abs() < 1e-9);
        }
    }
}
