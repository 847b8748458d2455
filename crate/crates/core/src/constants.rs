//! Physical constants in SI units.
//!
//! Values are CODATA 2018 (hbar, k_B exact; mu_B and mu_0 recommended values).
//! The ⁸⁷Rb mass is the AME2016 atomic mass 86.909180520 u.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Bohr magneton, J/T.
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
/// Vacuum permeability, T·m/A.
pub const VACUUM_PERMEABILITY: f64 = 1.256_637_062_12e-6;
/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Unified atomic mass unit, kg.
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
/// Mass of ⁸⁷Rb, kg.
pub const RB87_MASS: f64 = 86.909_180_520 * ATOMIC_MASS_UNIT;
/// s-wave scattering length of ⁸⁷Rb, m.
pub const RB87_SCATTERING_LENGTH: f64 = 5.4e-9;
/// Landé factor of the F = 1 hyperfine manifold.
pub const RB87_LANDE_G: f64 = -0.5;

/// Constants describing the atomic species and the fundamental couplings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// J·s
    pub hbar: f64,
    /// J/T
    pub mu_b: f64,
    /// T·m/A
    pub mu_0: f64,
    /// kg
    pub mass: f64,
    /// m
    pub scattering_length: f64,
    pub lande_g: f64,
}

impl PhysicalConstants {
    pub fn rb87() -> Self {
        Self {
            hbar: HBAR,
            mu_b: BOHR_MAGNETON,
            mu_0: VACUUM_PERMEABILITY,
            mass: RB87_MASS,
            scattering_length: RB87_SCATTERING_LENGTH,
            lande_g: RB87_LANDE_G,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hbar", self.hbar),
            ("mu_b", self.mu_b),
            ("mu_0", self.mu_0),
            ("mass", self.mass),
            ("scattering_length", self.scattering_length),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(
                    format!("constants.{name}"),
                    format!("must be finite and positive, got {v:e}"),
                ));
            }
        }
        if self.lande_g != RB87_LANDE_G {
            return Err(Error::invalid(
                "constants.lande_g",
                format!("the F = 1 manifold has g_F = -1/2, got {}", self.lande_g),
            ));
        }
        Ok(())
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::rb87()
    }
}
