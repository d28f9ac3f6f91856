//! Physical constants and unit conversions.
//!
//! Energies are configured in meV; all angular frequencies inside the
//! simulator are in rad/ps and times in ps.

use std::f64::consts::PI;

/// Reduced Planck constant in meV·ps.
pub const HBAR_MEV_PS: f64 = 0.658_211_956_9;
/// Planck constant in meV·ps.
pub const H_MEV_PS: f64 = 4.135_667_696;
/// `2√(2 ln 2)`, the FWHM of a unit-σ Gaussian.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

#[inline]
pub fn mev_to_rad_per_ps(e_mev: f64) -> f64 {
    e_mev / HBAR_MEV_PS
}

#[inline]
pub fn rad_per_ps_to_mev(w: f64) -> f64 {
    w * HBAR_MEV_PS
}

/// Frequency `E/h` in THz.
#[inline]
pub fn mev_to_thz(e_mev: f64) -> f64 {
    e_mev / H_MEV_PS
}

#[inline]
pub fn fwhm_to_sigma(fwhm: f64) -> f64 {
    fwhm / FWHM_PER_SIGMA
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}
