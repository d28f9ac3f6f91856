//! Level structures, energies and dipoles, and the Hamiltonians built from them.
//!
//! All Hamiltonians are returned divided by ħ, in rad/ps. The rotating frame
//! places the h1 level at Δ, the trion at 0 and the qubit's upper level at
//! Δ − δ, so that in the absence of light the qubit coherence in this frame
//! precesses at δ.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::algebra::ComplexMatrix;
use crate::drive::{PulseSequence, PulseSpec, RamanPulse};
use crate::error::{Error, Result};
use crate::units::mev_to_rad_per_ps;

/// Level splittings and laser detunings, meV.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergySpec {
    pub delta12: f64,
    /// Hot-trion splitting above T+. Required for `FourLevelHot`.
    pub delta_hot: Option<f64>,
    /// h1–h3 splitting. Required for `FourLevelHigh`.
    pub delta13: Option<f64>,
    /// Single-photon detuning Δ.
    pub big_delta: f64,
    /// Two-photon detuning δ.
    pub small_delta: f64,
}

impl Default for EnergySpec {
    fn default() -> Self {
        Self { delta12: 4.31, delta_hot: None, delta13: None, big_delta: 0.57, small_delta: 0.05 }
    }
}

impl EnergySpec {
    /// Placeholder h1–h3 splitting (2·Δ12); no measured value is available.
    pub fn placeholder_delta13(&self) -> f64 {
        2.0 * self.delta12
    }

    pub fn delta23(&self) -> Option<f64> {
        self.delta13.map(|d13| d13 - self.delta12)
    }

    pub fn with_small_delta(mut self, delta: f64) -> Self {
        self.small_delta = delta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.delta12, self.big_delta, self.small_delta];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter { name: "energies", reason: "values must be finite".into() });
        }
        if self.delta12 <= 0.0 {
            return Err(Error::InvalidParameter { name: "delta12", reason: format!("{} must be > 0", self.delta12) });
        }
        if self.big_delta <= 0.0 {
            return Err(Error::InvalidParameter { name: "big_delta", reason: format!("{} must be > 0", self.big_delta) });
        }
        if self.small_delta.abs() >= self.big_delta {
            return Err(Error::InvalidParameter {
                name: "small_delta",
                reason: format!("|{}| must be below big_delta {}", self.small_delta, self.big_delta),
            });
        }
        Ok(())
    }
}

/// Relative transition dipoles. Transitions: 1 = h1–T+, 2 = T+–h2,
/// 3 = h1–T+*, 4 = T+*–h2, 5 = T+–h3.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DipoleSet {
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub mu4: f64,
    /// Required for `FourLevelHigh`.
    pub mu5: Option<f64>,
}

impl Default for DipoleSet {
    fn default() -> Self {
        Self { mu1: 1.0, mu2: 1.0 / 4.8, mu3: 1.0 / 1.25, mu4: 1.0 / 1.29, mu5: None }
    }
}

impl DipoleSet {
    pub const PLACEHOLDER_MU5: f64 = 0.1;

    pub fn validate(&self) -> Result<()> {
        let all = [self.mu1, self.mu2, self.mu3, self.mu4, self.mu5.unwrap_or(0.0)];
        if all.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::InvalidParameter { name: "dipoles", reason: "dipoles must be finite and >= 0".into() });
        }
        if self.mu1 <= 0.0 {
            return Err(Error::InvalidParameter { name: "mu1", reason: "the pump transition dipole must be > 0".into() });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelKind {
    /// Basis (h1, T+, h2).
    ThreeLevel,
    /// Basis (h1, T+, T+*, h2).
    FourLevelHot,
    /// Basis (h1, T+, h2, h3); the Raman target is h3.
    FourLevelHigh,
    /// Basis (h1, h2) after adiabatic elimination of the trion.
    TwoLevelEffective,
}

impl LevelKind {
    pub fn labels(&self) -> &'static [&'static str] {
        match self {
            LevelKind::ThreeLevel => &["h1", "T+", "h2"],
            LevelKind::FourLevelHot => &["h1", "T+", "T+*", "h2"],
            LevelKind::FourLevelHigh => &["h1", "T+", "h2", "h3"],
            LevelKind::TwoLevelEffective => &["h1", "h2"],
        }
    }

    pub fn dim(&self) -> usize {
        self.labels().len()
    }

    /// Index of the level reached by the Raman transition from h1.
    pub fn target_index(&self) -> usize {
        self.dim() - 1
    }

    pub fn target_label(&self) -> &'static str {
        self.labels()[self.target_index()]
    }
}

/// A jump operator with rate γ; the engine applies (γ/2)·L[A].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DissipatorSpec {
    pub operator: ComplexMatrix,
    pub rate: f64,
}

/// Pure dephasing (γ1) and relaxation (γ2) rates of the qubit, 1/ps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dissipation {
    pub gamma1: f64,
    pub gamma2: f64,
}

impl Dissipation {
    pub const fn closed() -> Self {
        Self { gamma1: 0.0, gamma2: 0.0 }
    }

    /// Rates from the measured 263 ps dephasing and 159 ps lifetime.
    pub const fn measured() -> Self {
        Self { gamma1: 1.0 / 263.0, gamma2: 1.0 / 159.0 }
    }

    /// Closed-form decay time of the qubit coherence, 1/(γ1/2 + γ2/2).
    pub fn coherence_time(&self) -> f64 {
        1.0 / (0.5 * self.gamma1 + 0.5 * self.gamma2)
    }
}

impl Default for Dissipation {
    fn default() -> Self {
        Self::closed()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemModel {
    pub kind: LevelKind,
    pub energies: EnergySpec,
    pub dipoles: DipoleSet,
}

/// Effective two-level parameters at one instant, rad/ps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveTwoLevel {
    pub omega_eff: f64,
    pub detuning_eff: f64,
    /// Set when the peak pump Rabi frequency exceeds Δ/3 and adiabatic
    /// elimination is not trustworthy.
    pub adiabatic_warning: bool,
}

impl SystemModel {
    pub fn new(kind: LevelKind, energies: EnergySpec, dipoles: DipoleSet) -> Result<Self> {
        let m = Self { kind, energies, dipoles };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.energies.validate()?;
        self.dipoles.validate()?;
        match self.kind {
            LevelKind::FourLevelHot => {
                let hot = self.energies.delta_hot.ok_or(Error::MissingConfig("delta_hot"))?;
                if !hot.is_finite() {
                    return Err(Error::InvalidParameter { name: "delta_hot", reason: "must be finite".into() });
                }
            }
            LevelKind::FourLevelHigh => {
                let d13 = self.energies.delta13.ok_or(Error::MissingConfig("delta13"))?;
                self.dipoles.mu5.ok_or(Error::MissingConfig("mu5"))?;
                if !(d13 >= self.energies.delta12) {
                    return Err(Error::InvalidParameter {
                        name: "delta13",
                        reason: format!("{d13} must not be below delta12 {}", self.energies.delta12),
                    });
                }
            }
            LevelKind::ThreeLevel | LevelKind::TwoLevelEffective => {}
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    pub fn labels(&self) -> &'static [&'static str] {
        self.kind.labels()
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels().iter().position(|l| *l == label).ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn with_small_delta(mut self, delta: f64) -> Self {
        self.energies.small_delta = delta;
        self
    }

    /// Splitting of the qubit addressed by the Raman pair, meV.
    pub fn qubit_splitting(&self) -> f64 {
        match self.kind {
            LevelKind::FourLevelHigh => self.energies.delta13.unwrap_or(self.energies.delta12),
            _ => self.energies.delta12,
        }
    }

    /// Pump–Stokes frequency difference, rad/ps.
    pub fn raman_frequency(&self) -> f64 {
        mev_to_rad_per_ps(self.qubit_splitting() + self.energies.small_delta)
    }

    /// Dipole of the transition the Stokes field is meant to drive.
    pub fn stokes_dipole(&self) -> f64 {
        match self.kind {
            LevelKind::FourLevelHigh => self.dipoles.mu5.unwrap_or(0.0),
            _ => self.dipoles.mu2,
        }
    }

    /// Rotating-frame Hamiltonian at time `t`. Prefer [`Self::rotating`] when
    /// evaluating many times.
    pub fn h_rot(&self, seq: &PulseSequence, t: f64) -> Result<ComplexMatrix> {
        Ok(self.rotating(seq)?.at(t))
    }

    pub fn rotating(&self, seq: &PulseSequence) -> Result<RotatingHamiltonian> {
        self.validate()?;
        let e = &self.energies;
        let big = mev_to_rad_per_ps(e.big_delta);
        let small = mev_to_rad_per_ps(e.small_delta);
        let d = &self.dipoles;
        let diag: Vec<f64> = match self.kind {
            LevelKind::ThreeLevel => vec![big, 0.0, big - small],
            LevelKind::FourLevelHot => vec![big, 0.0, mev_to_rad_per_ps(e.delta_hot.unwrap()), big - small],
            LevelKind::FourLevelHigh => {
                let d23 = mev_to_rad_per_ps(e.delta23().unwrap());
                vec![big, 0.0, big - small - d23, big - small]
            }
            LevelKind::TwoLevelEffective => vec![big, big - small],
        };
        // (row, col, dipole, kind) for each optical coupling in the upper triangle
        let couplings: Vec<Coupling> = match self.kind {
            LevelKind::ThreeLevel => vec![Coupling::lower(0, 1, d.mu1), Coupling::upper(1, 2, d.mu2)],
            LevelKind::FourLevelHot => vec![
                Coupling::lower(0, 1, d.mu1),
                Coupling::lower(0, 2, d.mu3),
                Coupling::upper(1, 3, d.mu2),
                Coupling::upper(2, 3, d.mu4),
            ],
            LevelKind::FourLevelHigh => vec![
                Coupling::lower(0, 1, d.mu1),
                Coupling::upper(1, 2, d.mu2),
                Coupling::upper(1, 3, d.mu5.unwrap()),
            ],
            LevelKind::TwoLevelEffective => vec![],
        };
        let w = self.raman_frequency();
        Ok(RotatingHamiltonian {
            kind: self.kind,
            diag,
            couplings,
            w,
            big,
            small,
            mu_pump: d.mu1,
            mu_stokes: self.stokes_dipole(),
            field: DriveField::new(seq, w),
        })
    }

    /// Lab-frame Hamiltonian with explicit optical carriers; `omega_t` is the
    /// T+ transition frequency (rad/ps). The pump is blue-detuned by Δ from
    /// the h1–T+ transition and the Stokes sits Δ12 + δ below the pump.
    pub fn h_lab(&self, seq: &PulseSequence, omega_t: f64, t: f64) -> Result<ComplexMatrix> {
        Ok(self.lab(seq, omega_t)?.at(t))
    }

    pub fn lab(&self, seq: &PulseSequence, omega_t: f64) -> Result<LabHamiltonian> {
        let rot = self.rotating(seq)?;
        let offsets = self.frame_rates(omega_t)?;
        let diag = rot.diag.iter().zip(&offsets).map(|(d, a)| d + a).collect();
        let (omega_p, omega_s) = self.carriers(omega_t);
        Ok(LabHamiltonian { rot, diag, omega_p, omega_s })
    }

    /// Pump and Stokes carrier frequencies for a given trion frequency.
    pub fn carriers(&self, omega_t: f64) -> (f64, f64) {
        let omega_p = omega_t + mev_to_rad_per_ps(self.energies.big_delta);
        (omega_p, omega_p - self.raman_frequency())
    }

    /// Phase rates a_k of the frame transformation U0 = diag(exp(−i a_k t)).
    fn frame_rates(&self, omega_t: f64) -> Result<Vec<f64>> {
        let (omega_p, omega_s) = self.carriers(omega_t);
        match self.kind {
            LevelKind::ThreeLevel => Ok(vec![omega_t - omega_p, omega_t, omega_t - omega_s]),
            LevelKind::FourLevelHot => Ok(vec![omega_t - omega_p, omega_t, omega_t, omega_t - omega_s]),
            other => Err(Error::Unsupported(format!("lab frame of {other:?}"))),
        }
    }

    /// The diagonal frame transformation between lab and rotating frames.
    pub fn u0(&self, omega_t: f64, t: f64) -> Result<ComplexMatrix> {
        let rates = self.frame_rates(omega_t)?;
        let diag: Vec<C64> = rates.iter().map(|a| C64::from_polar(1.0, -a * t)).collect();
        Ok(ComplexMatrix::from_diagonal(&diag))
    }

    /// Dephasing A1 = |q⟩⟨q| and relaxation A2 = |h1⟩⟨q| of the qubit's upper
    /// level q. Zero-rate channels are omitted.
    pub fn dissipators(&self, gamma1: f64, gamma2: f64) -> Result<Vec<DissipatorSpec>> {
        for (name, g) in [("gamma1", gamma1), ("gamma2", gamma2)] {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(Error::InvalidParameter { name, reason: format!("{g} must be >= 0") });
            }
        }
        let n = self.dim();
        let q = self.kind.target_index();
        let mut out = Vec::new();
        if gamma1 > 0.0 {
            out.push(DissipatorSpec { operator: ComplexMatrix::outer(n, q, q), rate: gamma1 });
        }
        if gamma2 > 0.0 {
            out.push(DissipatorSpec { operator: ComplexMatrix::outer(n, 0, q), rate: gamma2 });
        }
        Ok(out)
    }

    /// Adiabatically eliminated Λ system for one Raman pair at time `t`.
    ///
    /// Stark shifts use the detuning of each field from each transition in
    /// the rotating frame: the Stokes field sees the h1 transition detuned by
    /// Δ − Δ12 − δ and the pump sees the h2 transition detuned by Δ + Δ12.
    pub fn effective_two_level(&self, pulse: &RamanPulse, t: f64) -> Result<EffectiveTwoLevel> {
        let seq = PulseSequence::single(*pulse)?;
        let field = DriveField::new(&seq, self.raman_frequency());
        let (p, s) = field.totals(t);
        let shifts = self.stark(p.norm_sqr(), s.norm_sqr());
        let omega_eff = self.dipoles.mu1 * self.stokes_dipole() * p.norm() * s.norm() / (2.0 * shifts.big);
        Ok(EffectiveTwoLevel {
            omega_eff,
            detuning_eff: shifts.e1 - shifts.e2,
            adiabatic_warning: self.adiabatic_warning(&seq),
        })
    }

    /// True when any pump pulse's peak Rabi frequency exceeds Δ/3.
    pub fn adiabatic_warning(&self, seq: &PulseSequence) -> bool {
        let limit = mev_to_rad_per_ps(self.energies.big_delta) / 3.0;
        seq.pulses.iter().any(|p| self.dipoles.mu1 * p.pump.peak() > limit)
    }

    fn stark(&self, p2: f64, s2: f64) -> StarkLevels {
        let big = mev_to_rad_per_ps(self.energies.big_delta);
        let small = mev_to_rad_per_ps(self.energies.small_delta);
        let w = self.raman_frequency();
        let (m1, m2) = (self.dipoles.mu1, self.stokes_dipole());
        let e1 = big + m1 * m1 * p2 / (4.0 * big) + m1 * m1 * s2 / (4.0 * (big - w));
        let e2 = (big - small) + m2 * m2 * s2 / (4.0 * (big - small)) + m2 * m2 * p2 / (4.0 * (big - small + w));
        StarkLevels { big, e1, e2 }
    }
}

struct StarkLevels {
    big: f64,
    e1: f64,
    e2: f64,
}

#[derive(Clone, Copy, Debug)]
struct Gaussian {
    center: f64,
    inv_two_sigma2: f64,
    peak: f64,
}

impl Gaussian {
    fn new(p: &PulseSpec) -> Self {
        let s = p.sigma();
        Self { center: p.center, inv_two_sigma2: 0.5 / (s * s), peak: p.peak() }
    }

    #[inline]
    fn at(&self, t: f64) -> f64 {
        let x = t - self.center;
        self.peak * (-x * x * self.inv_two_sigma2).exp()
    }
}

#[derive(Clone, Copy, Debug)]
struct PreparedPair {
    pump: Gaussian,
    stokes: Gaussian,
    pump_phasor: C64,
    stokes_phasor: C64,
}

/// Complex pump and Stokes envelopes of a sequence, with each pair's
/// carrier phases referenced to its pump center.
#[derive(Clone, Debug)]
pub struct DriveField {
    pairs: Vec<PreparedPair>,
}

impl DriveField {
    pub fn new(seq: &PulseSequence, raman_frequency: f64) -> Self {
        let pairs = seq
            .pulses
            .iter()
            .map(|p| PreparedPair {
                pump: Gaussian::new(&p.pump),
                stokes: Gaussian::new(&p.stokes),
                pump_phasor: C64::from_polar(1.0, p.pump.phase),
                stokes_phasor: C64::from_polar(1.0, p.stokes.phase + raman_frequency * p.center()),
            })
            .collect();
        Self { pairs }
    }

    /// (pump, Stokes) total complex amplitudes for a unit dipole.
    #[inline]
    pub fn totals(&self, t: f64) -> (C64, C64) {
        let mut p = C64::new(0.0, 0.0);
        let mut s = C64::new(0.0, 0.0);
        for pair in &self.pairs {
            p += pair.pump_phasor * pair.pump.at(t);
            s += pair.stokes_phasor * pair.stokes.at(t);
        }
        (p, s)
    }
}

#[derive(Clone, Copy, Debug)]
struct Coupling {
    row: usize,
    col: usize,
    mu: f64,
    /// Lower-leg couplings (from h1) take the pump resonantly; upper-leg
    /// couplings (to the target) take the Stokes resonantly.
    lower_leg: bool,
}

impl Coupling {
    fn lower(row: usize, col: usize, mu: f64) -> Self {
        Self { row, col, mu, lower_leg: true }
    }

    fn upper(row: usize, col: usize, mu: f64) -> Self {
        Self { row, col, mu, lower_leg: false }
    }
}

/// Rotating-frame Hamiltonian of a fixed model and pulse sequence.
#[derive(Clone, Debug)]
pub struct RotatingHamiltonian {
    kind: LevelKind,
    diag: Vec<f64>,
    couplings: Vec<Coupling>,
    w: f64,
    big: f64,
    small: f64,
    mu_pump: f64,
    mu_stokes: f64,
    field: DriveField,
}

impl RotatingHamiltonian {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn at(&self, t: f64) -> ComplexMatrix {
        let n = self.dim();
        let mut h = ComplexMatrix::zeros(n);
        let (p, s) = self.field.totals(t);
        if self.kind == LevelKind::TwoLevelEffective {
            let (p2, s2) = (p.norm_sqr(), s.norm_sqr());
            let (m1, m2, w, big, small) = (self.mu_pump, self.mu_stokes, self.w, self.big, self.small);
            h[(0, 0)] = C64::from(big + m1 * m1 * p2 / (4.0 * big) + m1 * m1 * s2 / (4.0 * (big - w)));
            h[(1, 1)] = C64::from(
                (big - small) + m2 * m2 * s2 / (4.0 * (big - small)) + m2 * m2 * p2 / (4.0 * (big - small + w)),
            );
            let c = p * s.conj() * (m1 * m2 / (4.0 * big));
            h[(0, 1)] = c;
            h[(1, 0)] = c.conj();
            return h;
        }
        for (k, d) in self.diag.iter().enumerate() {
            h[(k, k)] = C64::from(*d);
        }
        let rot = C64::from_polar(1.0, -self.w * t);
        let lower = p + s * rot;
        let upper = p.conj() * rot + s.conj();
        for c in &self.couplings {
            let v = if c.lower_leg { lower } else { upper } * (0.5 * c.mu);
            h[(c.row, c.col)] = v;
            h[(c.col, c.row)] = v.conj();
        }
        h
    }
}

/// Lab-frame Hamiltonian of a fixed model and pulse sequence.
#[derive(Clone, Debug)]
pub struct LabHamiltonian {
    rot: RotatingHamiltonian,
    diag: Vec<f64>,
    omega_p: f64,
    omega_s: f64,
}

impl LabHamiltonian {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn at(&self, t: f64) -> ComplexMatrix {
        let n = self.dim();
        let mut h = ComplexMatrix::zeros(n);
        for (k, d) in self.diag.iter().enumerate() {
            h[(k, k)] = C64::from(*d);
        }
        let (p, s) = self.rot.field.totals(t);
        let field = p * C64::from_polar(1.0, self.omega_p * t) + s * C64::from_polar(1.0, self.omega_s * t);
        for c in &self.rot.couplings {
            let v = if c.lower_leg { field } else { field.conj() } * (0.5 * c.mu);
            h[(c.row, c.col)] = v;
            h[(c.col, c.row)] = v.conj();
        }
        h
    }
}
