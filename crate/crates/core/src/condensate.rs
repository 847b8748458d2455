//! Thomas–Fermi model of the trapped condensate in the m = -1 sublevel.
//!
//! The trap is a cylindrically symmetric harmonic potential
//! `V_T = (M/2)[ω_r²(x² + y²) + ω_z² z²]`. In the Thomas–Fermi limit the
//! density is `(μ - V_T)/g` on the ellipsoid `V_T < μ` and zero outside, with
//!
//! ```text
//! μ = (N g (15/8π) ω_r² ω_z)^{2/5} (M/2)^{3/5},   g = 4πħ² a_s / M,
//! b = sqrt(2μ / (M ω_r²)),   c = sqrt(2μ / (M ω_z²)).
//! ```

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};

/// Cartesian position in metres, trap frame.
pub type Position = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapConfig {
    /// Radial trap frequency, rad/s.
    pub omega_r: f64,
    /// Axial trap frequency, rad/s.
    pub omega_z: f64,
    /// Atom number; real-valued so that scans over N are continuous.
    pub atom_number: f64,
    /// Homogeneous offset field, T.
    pub b_offs: f64,
    pub constants: PhysicalConstants,
}

impl TrapConfig {
    pub fn new(omega_r: f64, omega_z: f64, atom_number: f64, b_offs: f64) -> Result<Self> {
        let trap = Self {
            omega_r,
            omega_z,
            atom_number,
            b_offs,
            constants: PhysicalConstants::rb87(),
        };
        trap.validate()?;
        Ok(trap)
    }

    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        for (name, v) in [("omega_r", self.omega_r), ("omega_z", self.omega_z), ("b_offs", self.b_offs)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(
                    format!("trap.{name}"),
                    format!("must be finite and positive, got {v:e}"),
                ));
            }
        }
        if !(self.atom_number.is_finite() && self.atom_number >= 0.0) {
            return Err(Error::invalid(
                "trap.atom_number",
                format!("must be finite and non-negative, got {}", self.atom_number),
            ));
        }
        Ok(())
    }

    pub fn with_atom_number(mut self, atom_number: f64) -> Self {
        self.atom_number = atom_number;
        self
    }
}

/// Thomas–Fermi solution for a given trap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CondensateTF {
    /// Chemical potential μ measured from the trap bottom, J.
    pub mu: f64,
    /// μ′ = μ + ½ μ_B B_offs, J.
    pub mu_prime: f64,
    /// Interaction constant, J·m³.
    pub g: f64,
    /// Radial semi-axis, m.
    pub b: f64,
    /// Axial semi-axis, m.
    pub c: f64,
}

impl CondensateTF {
    /// Intrinsic bandwidth μ/ħ in rad/s.
    pub fn bandwidth(&self, constants: &PhysicalConstants) -> f64 {
        self.mu / constants.hbar
    }

    /// Volume of the Thomas–Fermi support, m³.
    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * PI * self.b * self.b * self.c
    }

    pub fn is_empty(&self) -> bool {
        self.mu == 0.0
    }
}

pub fn interaction_g(constants: &PhysicalConstants) -> f64 {
    4.0 * PI * constants.hbar * constants.hbar * constants.scattering_length / constants.mass
}

pub fn chemical_potential(trap: &TrapConfig) -> Result<CondensateTF> {
    trap.validate()?;
    let k = &trap.constants;
    let g = interaction_g(k);
    let n = trap.atom_number;
    let mu = (n * g * 15.0 / (8.0 * PI) * trap.omega_r.powi(2) * trap.omega_z).powf(0.4)
        * (0.5 * k.mass).powf(0.6);
    let b = (2.0 * mu / (k.mass * trap.omega_r.powi(2))).sqrt();
    let c = (2.0 * mu / (k.mass * trap.omega_z.powi(2))).sqrt();
    Ok(CondensateTF {
        mu,
        mu_prime: mu + 0.5 * k.mu_b * trap.b_offs,
        g,
        b,
        c,
    })
}

pub fn trap_potential(r: Position, trap: &TrapConfig) -> f64 {
    let [x, y, z] = r;
    0.5 * trap.constants.mass
        * (trap.omega_r.powi(2) * (x * x + y * y) + trap.omega_z.powi(2) * z * z)
}

/// Atom density N|φ_BEC(r)|² in m⁻³; exactly zero outside the support.
pub fn tf_density(r: Position, cond: &CondensateTF, trap: &TrapConfig) -> f64 {
    let excess = cond.mu - trap_potential(r, trap);
    if excess > 0.0 {
        excess / cond.g
    } else {
        0.0
    }
}

/// Maps stretched ellipsoidal coordinates (ρ, cos θ, φ) to a trap-frame position.
/// ρ ∈ [0, 1] labels the level surface `V_T = μρ²`.
pub fn ellipsoidal_point(cond: &CondensateTF, rho: f64, cos_theta: f64, phi: f64) -> Position {
    let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
    [
        cond.b * rho * sin_theta * phi.cos(),
        cond.b * rho * sin_theta * phi.sin(),
        cond.c * rho * cos_theta,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussLegendre;

    fn reference_trap(n: f64) -> TrapConfig {
        TrapConfig::new(2.0 * PI * 500.0, 2.0 * PI * 109.0, n, 1e-4).unwrap()
    }

    #[test]
    fn golden_interaction_constant() {
        // 40-digit evaluation of 4πħ²a_s/M with the same CODATA inputs.
        let g = interaction_g(&PhysicalConstants::rb87());
        assert!((g / 5.229_271_529_049_834_2e-51 - 1.0).abs() < 1e-13);
        let mut k = PhysicalConstants::rb87();
        k.scattering_length *= 2.0;
        assert!((interaction_g(&k) / g - 2.0).abs() < 1e-15);
    }

    #[test]
    fn golden_chemical_potential_reference_trap() {
        let cond = chemical_potential(&reference_trap(1e5)).unwrap();
        assert!((cond.mu / 4.412_150_680_092_583e-30 - 1.0).abs() < 1e-12);
        assert!((cond.b / 2.489_045_965_167_119_9e-6 - 1.0).abs() < 1e-12);
        assert!((cond.c / 1.141_764_204_205_100_9e-5 - 1.0).abs() < 1e-12);
        let cond = chemical_potential(&reference_trap(1e3)).unwrap();
        assert!((cond.mu / 6.992_787_576_991_407e-31 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_condensate() {
        let cond = chemical_potential(&reference_trap(0.0)).unwrap();
        assert_eq!(cond.mu, 0.0);
        assert_eq!(cond.b, 0.0);
        assert_eq!(cond.c, 0.0);
        assert_eq!(tf_density([0.0; 3], &cond, &reference_trap(0.0)), 0.0);
    }

    #[test]
    fn rejects_negative_atom_number() {
        let mut trap = reference_trap(1e4);
        trap.atom_number = -1.0;
        assert!(chemical_potential(&trap).is_err());
    }

    #[test]
    fn mu_scales_as_n_to_two_fifths() {
        let base = chemical_potential(&reference_trap(1e4)).unwrap();
        let scaled = chemical_potential(&reference_trap(1e4 * 2f64.powf(2.5))).unwrap();
        assert!((scaled.mu / base.mu - 2.0).abs() < 1e-12);
    }

    #[test]
    fn potential_and_density_landmarks() {
        let trap = reference_trap(1e5);
        let cond = chemical_potential(&trap).unwrap();
        assert_eq!(trap_potential([0.0; 3], &trap), 0.0);
        assert!((trap_potential([cond.b, 0.0, 0.0], &trap) / cond.mu - 1.0).abs() < 1e-12);
        assert!((trap_potential([0.0, 0.0, cond.c], &trap) / cond.mu - 1.0).abs() < 1e-12);
        let r = [1e-7, -3e-7, 2e-6];
        assert_eq!(trap_potential(r, &trap), trap_potential([-r[0], -r[1], -r[2]], &trap));
        assert!((tf_density([0.0; 3], &cond, &trap) - cond.mu / cond.g).abs() < 1e-9 * cond.mu / cond.g);
        assert_eq!(tf_density([cond.b * 1.0001, 0.0, 0.0], &cond, &trap), 0.0);
        assert!(tf_density([cond.b * (1.0 - 1e-9), 0.0, 0.0], &cond, &trap) < 1e-8 * cond.mu / cond.g);
    }

    #[test]
    fn density_integrates_to_atom_number() {
        let trap = reference_trap(2.5e4);
        let cond = chemical_potential(&trap).unwrap();
        // Radial integral in stretched coordinates; the density is a polynomial in ρ.
        let rule = GaussLegendre::new(12);
        let angular = GaussLegendre::new(6);
        let mut total = 0.0;
        for (rho, wr) in rule.on_interval(0.0, 1.0) {
            for (ct, wt) in angular.on_interval(-1.0, 1.0) {
                for k in 0..8 {
                    let phi = 2.0 * PI * k as f64 / 8.0;
                    let r = ellipsoidal_point(&cond, rho, ct, phi);
                    let jac = cond.b * cond.b * cond.c * rho * rho;
                    total += wr * wt * (2.0 * PI / 8.0) * jac * tf_density(r, &cond, &trap);
                }
            }
        }
        assert!((total / trap.atom_number - 1.0).abs() < 1e-10);
    }
}
