//! Calibration tables as `key = value` text.
//!
//! ```text
//! kind = three_level
//! delta_star_mev = 0.25
//! ...
//! point = <stokes_area_rad> <transfer> <azimuth_offset_rad>
//! ```
//!
//! Floats are written in shortest round-trip form, so reading a written
//! table gives back the same table.

use std::fmt::Write as _;

use orbital_raman::optimizer::RotationPoint;
use orbital_raman::{CalibrationTable, LevelKind};

use crate::CliError;

fn kind_name(kind: LevelKind) -> &'static str {
    match kind {
        LevelKind::ThreeLevel => "three_level",
        LevelKind::FourLevelHot => "four_level_hot",
        LevelKind::FourLevelHigh => "four_level_high",
        LevelKind::TwoLevelEffective => "two_level_effective",
    }
}

fn kind_from(name: &str) -> Option<LevelKind> {
    [LevelKind::ThreeLevel, LevelKind::FourLevelHot, LevelKind::FourLevelHigh, LevelKind::TwoLevelEffective]
        .into_iter()
        .find(|k| kind_name(*k) == name)
}

pub fn to_text(cal: &CalibrationTable) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "kind = {}", kind_name(cal.kind));
    let _ = writeln!(s, "delta_star_mev = {}", cal.delta_star);
    let _ = writeln!(s, "stokes_area_pi_rad = {}", cal.stokes_area_pi);
    let _ = writeln!(s, "pump_area_rad = {}", cal.pump_area);
    let _ = writeln!(s, "transfer_at_pi = {}", cal.transfer_at_pi);
    let _ = writeln!(s, "fwhm_ps = {}", cal.fwhm);
    let _ = writeln!(s, "stokes_dipole = {}", cal.stokes_dipole);
    let _ = writeln!(s, "system_hash = {}", cal.system_hash);
    let _ = writeln!(s, "refinement_iterations = {}", cal.refinement_iterations);
    for p in &cal.rotation_curve {
        let _ = writeln!(s, "point = {} {} {}", p.stokes_area, p.transfer, p.azimuth_offset);
    }
    s
}

pub fn from_text(text: &str) -> Result<CalibrationTable, CliError> {
    let bad = |line: usize, msg: String| CliError::Config(format!("calibration line {line}: {msg}"));
    let mut cal = CalibrationTable {
        kind: LevelKind::ThreeLevel,
        delta_star: f64::NAN,
        stokes_area_pi: f64::NAN,
        pump_area: f64::NAN,
        transfer_at_pi: f64::NAN,
        fwhm: f64::NAN,
        stokes_dipole: f64::NAN,
        system_hash: String::new(),
        rotation_curve: Vec::new(),
        refinement_iterations: 0,
    };
    let mut seen = std::collections::HashSet::new();
    for (n, line) in text.lines().enumerate().map(|(n, l)| (n + 1, l.trim())) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| bad(n, "expected `key = value`".into()))?;
        let (key, value) = (key.trim(), value.trim());
        if key != "point" && !seen.insert(key.to_string()) {
            return Err(bad(n, format!("duplicate key `{key}`")));
        }
        let num = |v: &str| v.parse::<f64>().map_err(|e| bad(n, format!("`{key}`: {e}")));
        match key {
            "kind" => cal.kind = kind_from(value).ok_or_else(|| bad(n, format!("unknown kind `{value}`")))?,
            "delta_star_mev" => cal.delta_star = num(value)?,
            "stokes_area_pi_rad" => cal.stokes_area_pi = num(value)?,
            "pump_area_rad" => cal.pump_area = num(value)?,
            "transfer_at_pi" => cal.transfer_at_pi = num(value)?,
            "fwhm_ps" => cal.fwhm = num(value)?,
            "stokes_dipole" => cal.stokes_dipole = num(value)?,
            "system_hash" => cal.system_hash = value.to_string(),
            "refinement_iterations" => {
                cal.refinement_iterations = value.parse().map_err(|e| bad(n, format!("`{key}`: {e}")))?
            }
            "point" => {
                let v: Vec<f64> = value.split_whitespace().map(num).collect::<Result<_, _>>()?;
                if v.len() != 3 {
                    return Err(bad(n, format!("point needs 3 values, got {}", v.len())));
                }
                cal.rotation_curve.push(RotationPoint { stokes_area: v[0], transfer: v[1], azimuth_offset: v[2] });
            }
            other => return Err(bad(n, format!("unknown key `{other}`"))),
        }
    }
    for key in ["kind", "delta_star_mev", "stokes_area_pi_rad", "pump_area_rad", "transfer_at_pi", "fwhm_ps", "stokes_dipole", "system_hash"] {
        if !seen.contains(key) {
            return Err(CliError::Config(format!("calibration is missing `{key}`")));
        }
    }
    cal.validate().map_err(|e| CliError::Config(format!("calibration: {e}")))?;
    Ok(cal)
}
