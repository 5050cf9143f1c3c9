//! Unit conventions.
//!
//! Inputs are given in spectroscopic units (cm⁻¹, K, fs). Everything that is
//! time-evolved works in angular frequency (rad/fs) and femtoseconds.

use serde::Serialize;
use std::f64::consts::PI;

/// Speed of light in cm/fs.
pub const SPEED_OF_LIGHT_CM_PER_FS: f64 = 2.99792458e-5;

/// Boltzmann constant in cm⁻¹/K.
pub const BOLTZMANN_CM1_PER_K: f64 = 0.6950348;

/// Multiply a wavenumber (cm⁻¹) by this to get rad/fs.
pub const WAVENUMBER_TO_ANGULAR: f64 = 2.0 * PI * SPEED_OF_LIGHT_CM_PER_FS;

#[inline]
pub fn cm1_to_angular(wavenumber: f64) -> f64 {
    wavenumber * WAVENUMBER_TO_ANGULAR
}

#[inline]
pub fn angular_to_cm1(omega: f64) -> f64 {
    omega / WAVENUMBER_TO_ANGULAR
}

/// A damping rate given in fs⁻¹ expressed as a wavenumber (cm⁻¹).
#[inline]
pub fn rate_to_cm1(rate_per_fs: f64) -> f64 {
    angular_to_cm1(rate_per_fs)
}

#[inline]
pub fn nm_to_cm1(nm: f64) -> f64 {
    1.0e7 / nm
}

#[inline]
pub fn cm1_to_nm(wavenumber: f64) -> f64 {
    1.0e7 / wavenumber
}

/// The constants in force for a run, echoed into run manifests.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct UnitSystem {
    pub wavenumber_to_angular: f64,
    pub speed_of_light_cm_per_fs: f64,
    pub boltzmann_cm1_per_k: f64,
}

impl Default for UnitSystem {
    fn default() -> Self {
        Self {
            wavenumber_to_angular: WAVENUMBER_TO_ANGULAR,
            speed_of_light_cm_per_fs: SPEED_OF_LIGHT_CM_PER_FS,
            boltzmann_cm1_per_k: BOLTZMANN_CM1_PER_K,
        }
    }
}
