//! Run specification: a single JSON document plus `--set` overrides.
//!
//! Every physical quantity carries its unit in the key name. Angles given in
//! units of π use the `_pi` suffix.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use orbital_raman::drive::NoiseSpec;
use orbital_raman::{Axis, DipoleSet, Dissipation, EnergySpec, IntegratorConfig, LevelKind, RamanPulse, SystemModel};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Rabi,
    Map,
    Delay,
    Ramsey,
    Decay,
    PhaseArea,
    T1,
    NoiseMc,
    HighOrbital,
    Calibrate,
    Synthesize,
    Validate,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Rabi => "rabi",
            Command::Map => "map",
            Command::Delay => "delay",
            Command::Ramsey => "ramsey",
            Command::Decay => "decay",
            Command::PhaseArea => "phase-area",
            Command::T1 => "t1",
            Command::NoiseMc => "noise-mc",
            Command::HighOrbital => "high-orbital",
            Command::Calibrate => "calibrate",
            Command::Synthesize => "synthesize",
            Command::Validate => "validate",
        }
    }

    /// Commands that read out coherences or lifetimes run with the measured
    /// rates unless told otherwise.
    pub fn dissipative_by_default(&self) -> bool {
        matches!(self, Command::Ramsey | Command::Decay | Command::T1 | Command::NoiseMc | Command::PhaseArea)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    #[default]
    ThreeLevel,
    FourLevelHot,
    FourLevelHigh,
    TwoLevelEffective,
}

impl From<Kind> for LevelKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::ThreeLevel => LevelKind::ThreeLevel,
            Kind::FourLevelHot => LevelKind::FourLevelHot,
            Kind::FourLevelHigh => LevelKind::FourLevelHigh,
            Kind::TwoLevelEffective => LevelKind::TwoLevelEffective,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerKind {
    Rabi,
    Map,
    Delay,
    #[default]
    Ramsey,
    PhaseArea,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    pub kind: Kind,
    pub delta12_mev: f64,
    pub delta_hot_mev: Option<f64>,
    pub delta13_mev: Option<f64>,
    pub big_delta_mev: f64,
    pub small_delta_mev: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub mu4: f64,
    pub mu5: Option<f64>,
}

impl Default for SystemSection {
    fn default() -> Self {
        let e = EnergySpec::default();
        let d = DipoleSet::default();
        Self {
            kind: Kind::ThreeLevel,
            delta12_mev: e.delta12,
            delta_hot_mev: None,
            delta13_mev: None,
            big_delta_mev: e.big_delta,
            small_delta_mev: e.small_delta,
            mu1: d.mu1,
            mu2: d.mu2,
            mu3: d.mu3,
            mu4: d.mu4,
            mu5: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseSection {
    pub fwhm_ps: f64,
    pub pump_area_pi: f64,
    /// Area on the Stokes transition.
    pub stokes_area_pi: f64,
    pub phase_rad: f64,
    pub stokes_delay_ps: f64,
}

impl Default for PulseSection {
    fn default() -> Self {
        Self { fwhm_ps: 8.49, pump_area_pi: 1.93, stokes_area_pi: 2.29, phase_rad: 0.0, stokes_delay_ps: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DissipationSection {
    pub gamma1_per_ps: f64,
    pub gamma2_per_ps: f64,
}

impl Default for DissipationSection {
    fn default() -> Self {
        let m = Dissipation::measured();
        Self { gamma1_per_ps: m.gamma1, gamma2_per_ps: m.gamma2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSection {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Defaults to the pulse-width rule of [`IntegratorConfig::for_fwhm`].
    pub max_step_ps: Option<f64>,
    pub quiet_max_step_ps: f64,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        let c = IntegratorConfig::default();
        Self { rel_tol: c.rel_tol, abs_tol: c.abs_tol, max_step_ps: None, quiet_max_step_ps: c.quiet_max_step }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub phase_fwhm_pi: f64,
    pub span_fraction_fwhm: f64,
    pub area_fraction_fwhm: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        let n = NoiseSpec::default();
        Self {
            phase_fwhm_pi: n.phase_fwhm / PI,
            span_fraction_fwhm: n.span_fraction_fwhm,
            area_fraction_fwhm: n.area_fraction_fwhm,
        }
    }
}

/// Either `{start, end, count}` or explicit `values`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl AxisSpec {
    pub fn range(start: f64, end: f64, count: usize) -> Self {
        Self { start: Some(start), end: Some(end), count: Some(count), values: None }
    }

    pub fn list(values: Vec<f64>) -> Self {
        Self { values: Some(values), ..Self::default() }
    }

    /// Resolves to an axis named `name`, multiplying config values by `scale`.
    pub fn resolve(&self, key: &str, name: &str, scale: f64) -> Result<Axis, CliError> {
        let raw = match (&self.values, self.start, self.end, self.count) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(a), Some(b), Some(n)) => {
                if n == 0 {
                    return Err(CliError::Config(format!("axis `{key}` has zero points")));
                }
                Axis::linspace(name, a, b, n).map_err(|e| CliError::Config(format!("axis `{key}`: {e}")))?.values
            }
            _ => {
                return Err(CliError::Config(format!(
                    "axis `{key}` needs either `values` or all of `start`, `end`, `count`"
                )))
            }
        };
        if raw.is_empty() {
            return Err(CliError::Config(format!("axis `{key}` has zero points")));
        }
        Axis::new(name, raw.iter().map(|v| v * scale).collect()).map_err(|e| CliError::Config(format!("axis `{key}`: {e}")))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AxesSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stokes_area_pi: Option<AxisSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_mev: Option<AxisSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delay_ps: Option<AxisSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval_ps: Option<AxisSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase_rad: Option<AxisSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_pi: Option<AxisSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSection {
    /// Previously written calibration; skips the search when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    pub delta_mev: AxisSpec,
    pub stokes_area_pi: AxisSpec,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self { file: None, delta_mev: AxisSpec::range(0.0, 0.5, 41), stokes_area_pi: AxisSpec::range(1.0, 3.2, 45) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RotationSection {
    pub theta_pi: f64,
    pub phi_rad: f64,
}

impl Default for RotationSection {
    fn default() -> Self {
        Self { theta_pi: 0.5, phi_rad: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecaySection {
    pub coarse_intervals_ps: Vec<f64>,
    pub fine_span_ps: f64,
    pub fine_step_ps: f64,
}

impl Default for DecaySection {
    fn default() -> Self {
        Self { coarse_intervals_ps: (1..=15).map(|k| 40.0 * k as f64).collect(), fine_span_ps: 5.0, fine_step_ps: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseAreaSection {
    /// Control–probe interval in qubit periods.
    pub interval_periods: u32,
}

impl Default for PhaseAreaSection {
    fn default() -> Self {
        Self { interval_periods: 40 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseMcSection {
    pub inner: InnerKind,
    pub samples: usize,
}

impl Default for NoiseMcSection {
    fn default() -> Self {
        Self { inner: InnerKind::Ramsey, samples: 16 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub format: Format,
    pub system: SystemSection,
    pub pulse: PulseSection,
    /// Defaults depend on the command.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dissipation: Option<DissipationSection>,
    pub integrator: IntegratorSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSection>,
    pub axes: AxesSection,
    pub calibration: CalibrationSection,
    pub rotation: RotationSection,
    pub decay: DecaySection,
    pub phase_area: PhaseAreaSection,
    pub noise_mc: NoiseMcSection,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            command: None,
            output_dir: PathBuf::from("out"),
            seed: 0,
            format: Format::Csv,
            system: SystemSection::default(),
            pulse: PulseSection::default(),
            dissipation: None,
            integrator: IntegratorSection::default(),
            noise: None,
            axes: AxesSection::default(),
            calibration: CalibrationSection::default(),
            rotation: RotationSection::default(),
            decay: DecaySection::default(),
            phase_area: PhaseAreaSection::default(),
            noise_mc: NoiseMcSection::default(),
        }
    }
}

/// Unit suffixes recognised in key names.
const UNIT_SUFFIXES: &[&str] = &["_mev", "_ps", "_per_ps", "_rad", "_pi", "_nw", "_thz"];

/// Every physical key of the schema.
const UNIT_KEYS: &[&str] = &[
    "delta12_mev",
    "delta_hot_mev",
    "delta13_mev",
    "big_delta_mev",
    "small_delta_mev",
    "fwhm_ps",
    "pump_area_pi",
    "stokes_area_pi",
    "phase_rad",
    "stokes_delay_ps",
    "gamma1_per_ps",
    "gamma2_per_ps",
    "max_step_ps",
    "quiet_max_step_ps",
    "phase_fwhm_pi",
    "delta_mev",
    "delay_ps",
    "interval_ps",
    "theta_pi",
    "phi_rad",
    "coarse_intervals_ps",
    "fine_span_ps",
    "fine_step_ps",
];

fn stem(key: &str) -> &str {
    // longest suffix first so that `_per_ps` wins over `_ps`
    let mut best = key;
    for s in UNIT_SUFFIXES {
        if let Some(rest) = key.strip_suffix(s) {
            if rest.len() < best.len() {
                best = rest;
            }
        }
    }
    best
}

/// Names the expected key when `key` is a known quantity with the wrong
/// (or a missing) unit suffix.
fn unit_mismatch(key: &str) -> Option<&'static str> {
    let s = stem(key);
    UNIT_KEYS.iter().copied().find(|k| stem(k) == s && *k != key)
}

fn schema_error(e: serde_json::Error) -> CliError {
    let msg = e.to_string();
    if let Some(field) = msg.strip_prefix("unknown field `").and_then(|r| r.split('`').next()) {
        if let Some(expected) = unit_mismatch(field) {
            return CliError::Config(format!(
                "unit-suffix mismatch: `{field}` should be `{expected}` (line {}, column {})",
                e.line(),
                e.column()
            ));
        }
    }
    CliError::Config(format!("invalid config: {msg}"))
}

/// Parses a config document.
pub fn parse_config(text: &str) -> Result<RunSpec, CliError> {
    serde_json::from_str(text).map_err(schema_error)
}

/// Reads and parses a config file.
pub fn load_config(path: &Path) -> Result<RunSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Applies `key.path=value` overrides. Values parse as JSON where possible
/// and as plain strings otherwise.
pub fn apply_overrides(spec: &RunSpec, overrides: &[String]) -> Result<RunSpec, CliError> {
    if overrides.is_empty() {
        return Ok(spec.clone());
    }
    let mut doc = serde_json::to_value(spec).expect("run specs always serialize");
    for o in overrides {
        let (path, raw) =
            o.split_once('=').ok_or_else(|| CliError::Config(format!("override `{o}` is not of the form key=value")))?;
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut slot = &mut doc;
        let parts: Vec<&str> = path.split('.').collect();
        for (k, part) in parts.iter().enumerate() {
            let obj = slot
                .as_object_mut()
                .ok_or_else(|| CliError::Config(format!("override `{path}`: `{part}` is not inside an object")))?;
            if k + 1 == parts.len() {
                obj.insert(part.to_string(), value.clone());
                break;
            }
            slot = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
        }
    }
    serde_json::from_value(doc).map_err(|e| {
        let msg = e.to_string();
        match msg.strip_prefix("unknown field `").and_then(|r| r.split('`').next()).and_then(unit_mismatch) {
            Some(expected) => CliError::Config(format!("unit-suffix mismatch in override: expected `{expected}`")),
            None => CliError::Config(format!("invalid override: {msg}")),
        }
    })
}

impl RunSpec {
    pub fn model(&self) -> Result<SystemModel, CliError> {
        let s = &self.system;
        let kind: LevelKind = s.kind.into();
        match kind {
            LevelKind::FourLevelHot if s.delta_hot_mev.is_none() => {
                return Err(CliError::Config("system.delta_hot_mev is required for four_level_hot".into()))
            }
            LevelKind::FourLevelHigh if s.delta13_mev.is_none() => {
                return Err(CliError::Config(format!(
                    "system.delta13_mev is required for four_level_high (placeholder: {} = 2 × delta12_mev)",
                    2.0 * s.delta12_mev
                )))
            }
            LevelKind::FourLevelHigh if s.mu5.is_none() => {
                return Err(CliError::Config(format!(
                    "system.mu5 is required for four_level_high (placeholder: {})",
                    DipoleSet::PLACEHOLDER_MU5
                )))
            }
            _ => {}
        }
        let energies = EnergySpec {
            delta12: s.delta12_mev,
            delta_hot: s.delta_hot_mev,
            delta13: s.delta13_mev,
            big_delta: s.big_delta_mev,
            small_delta: s.small_delta_mev,
        };
        let dipoles = DipoleSet { mu1: s.mu1, mu2: s.mu2, mu3: s.mu3, mu4: s.mu4, mu5: s.mu5 };
        SystemModel::new(kind, energies, dipoles).map_err(|e| CliError::Config(format!("system: {e}")))
    }

    pub fn dissipation(&self, command: Command) -> Dissipation {
        match &self.dissipation {
            Some(d) => Dissipation { gamma1: d.gamma1_per_ps, gamma2: d.gamma2_per_ps },
            None if command.dissipative_by_default() => Dissipation::measured(),
            None => Dissipation::closed(),
        }
    }

    pub fn integrator(&self) -> IntegratorConfig {
        let base = IntegratorConfig::for_fwhm(self.pulse.fwhm_ps);
        IntegratorConfig {
            rel_tol: self.integrator.rel_tol,
            abs_tol: self.integrator.abs_tol,
            max_step: self.integrator.max_step_ps.unwrap_or(base.max_step),
            quiet_max_step: self.integrator.quiet_max_step_ps,
            sample_times: Vec::new(),
        }
    }

    pub fn noise(&self) -> Option<NoiseSpec> {
        self.noise.as_ref().map(|n| NoiseSpec {
            phase_fwhm: n.phase_fwhm_pi * PI,
            span_fraction_fwhm: n.span_fraction_fwhm,
            area_fraction_fwhm: n.area_fraction_fwhm,
            seed: self.seed,
        })
    }

    /// Pulse pair of the `pulse` section for `model`.
    pub fn pulse(&self, model: &SystemModel) -> Result<RamanPulse, CliError> {
        let p = &self.pulse;
        let mu = model.stokes_dipole();
        if mu <= 0.0 {
            return Err(CliError::Config("pulse: the Stokes transition dipole is zero".into()));
        }
        RamanPulse::new(0.0, p.fwhm_ps, p.pump_area_pi * PI, p.stokes_area_pi * PI / mu, p.phase_rad)
            .map(|r| r.with_stokes_delay(p.stokes_delay_ps))
            .map_err(|e| CliError::Config(format!("pulse: {e}")))
    }

    /// Axis `key` of the `axes` section, or `default` when absent.
    pub fn axis(&self, key: &str, default: AxisSpec) -> Result<Axis, CliError> {
        let a = &self.axes;
        let (spec, name, scale) = match key {
            "stokes_area_pi" => (&a.stokes_area_pi, "stokes_area_rad", PI),
            "delta_mev" => (&a.delta_mev, "delta_mev", 1.0),
            "delay_ps" => (&a.delay_ps, "delay_ps", 1.0),
            "interval_ps" => (&a.interval_ps, "interval_ps", 1.0),
            "phase_rad" => (&a.phase_rad, "phase_rad", 1.0),
            "theta_pi" => (&a.theta_pi, "theta_rad", PI),
            other => return Err(CliError::Config(format!("unknown axis `{other}`"))),
        };
        spec.as_ref().unwrap_or(&default).resolve(&format!("axes.{key}"), name, scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stems_strip_longest_suffix() {
        assert_eq!(stem("gamma1_per_ps"), "gamma1");
        assert_eq!(stem("fwhm_ps"), "fwhm");
        assert_eq!(stem("delta12"), "delta12");
    }

    #[test]
    fn mismatched_suffix_is_named() {
        assert_eq!(unit_mismatch("delta12_ps"), Some("delta12_mev"));
        assert_eq!(unit_mismatch("fwhm"), Some("fwhm_ps"));
        assert_eq!(unit_mismatch("gamma2_mev"), Some("gamma2_per_ps"));
        assert_eq!(unit_mismatch("colour"), None);
    }
}
