//! Physical constants, unit conversions and the rubidium D2 dataset.
//!
//! Internally every frequency is angular (rad/s) and every length is in
//! metres. Conversions to GHz, nm and ns live only at the IO boundary
//! (config parsing, CSV writers).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// CODATA 2018 values, SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub eps0: f64,
    pub mu0: f64,
    pub c: f64,
    pub kb: f64,
}

pub const CONSTANTS: PhysicalConstants = PhysicalConstants {
    hbar: 1.054_571_817e-34,
    eps0: 8.854_187_812_8e-12,
    mu0: 1.256_637_062_12e-6,
    c: 299_792_458.0,
    kb: 1.380_649e-23,
};

pub const HBAR: f64 = CONSTANTS.hbar;
pub const EPS0: f64 = CONSTANTS.eps0;
pub const MU0: f64 = CONSTANTS.mu0;
pub const C: f64 = CONSTANTS.c;
pub const KB: f64 = CONSTANTS.kb;

pub const NM: f64 = 1e-9;
pub const NS: f64 = 1e-9;
pub const PS: f64 = 1e-12;

/// D2 line of rubidium.
pub const RB_D2_WAVELENGTH: f64 = 780e-9;
/// D2 transition dipole moment, C·m.
pub const RB_D2_DIPOLE: f64 = 3.584e-29;
/// Natural linewidth of the D2 line, Hz (ordinary frequency).
pub const RB_D2_LINEWIDTH_HZ: f64 = 6.066e6;
/// Mass of 87Rb, kg.
pub const RB87_MASS: f64 = 1.443_160_6e-25;

/// Two-level atom: mass, transition frequency, dipole and excited-state decay rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomSpecies {
    /// kg
    pub mass: f64,
    /// Transition angular frequency, rad/s.
    pub omega_a: f64,
    /// Transition dipole moment, C·m.
    pub dipole: f64,
    /// Population decay rate of the excited state, 1/s.
    pub gamma: f64,
}

impl AtomSpecies {
    pub fn new(mass: f64, omega_a: f64, dipole: f64, gamma: f64) -> Result<Self> {
        for (name, v) in [
            ("mass", mass),
            ("omega_a", omega_a),
            ("dipole", dipole),
            ("gamma", gamma),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!(
                    "atom {name} must be positive, got {v}"
                )));
            }
        }
        Ok(Self {
            mass,
            omega_a,
            dipole,
            gamma,
        })
    }

    /// Thermal velocity scale `sqrt(kB T / m)` for one Cartesian component.
    pub fn velocity_scale(&self, temperature: f64) -> f64 {
        (KB * temperature / self.mass).sqrt()
    }

    /// r.m.s. speed `sqrt(3 kB T / m)`.
    pub fn rms_speed(&self, temperature: f64) -> f64 {
        (3.0 * KB * temperature / self.mass).sqrt()
    }
}

/// 87Rb on the D2 line.
pub fn default_rubidium() -> AtomSpecies {
    AtomSpecies {
        mass: RB87_MASS,
        omega_a: 2.0 * PI * C / RB_D2_WAVELENGTH,
        dipole: RB_D2_DIPOLE,
        gamma: 2.0 * PI * RB_D2_LINEWIDTH_HZ,
    }
}

pub fn angular_frequency_from_wavelength(lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!(
            "wavelength must be positive, got {lambda}"
        )));
    }
    Ok(2.0 * PI * C / lambda)
}

pub fn wavelength_from_angular_frequency(omega: f64) -> Result<f64> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::Domain(format!(
            "angular frequency must be positive, got {omega}"
        )));
    }
    Ok(2.0 * PI * C / omega)
}

#[inline]
pub fn ghz_to_angular(f_ghz: f64) -> f64 {
    2.0 * PI * f_ghz * 1e9
}

#[inline]
pub fn angular_to_ghz(omega: f64) -> f64 {
    omega / (2.0 * PI * 1e9)
}

#[inline]
pub fn angular_to_mhz(omega: f64) -> f64 {
    omega / (2.0 * PI * 1e6)
}
