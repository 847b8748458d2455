//! Magnetic coupling of the vibrating, current-carrying nanotube to the condensate.
//!
//! The wire runs parallel to z at transverse distance `y0` on the `y < 0` side
//! of the trap centre, clamped at both ends and vibrating in its fundamental
//! string mode. Its midpoint sits at `z = z_offset` (default 0).
//!
//! In the rotating frame the condensate couples to the current through
//!
//! ```text
//! η(r) = i √(N) φ(r) · μ₀ μ_B a / (16π√2 ħ y0²) · U(r),
//! Δ(r) = Ω − V_T(r)/ħ,        Ω = ω_cnt − ½ μ_B B_offs / ħ,
//! ```
//!
//! where the geometry factor `U` integrates the field modulation along the
//! wire with all lengths measured in units of `y0`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::condensate::{tf_density, trap_potential, CondensateTF, Position, TrapConfig};
use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::quadrature::{adaptive_piecewise, AdaptiveOptions, Estimate};

/// Relative tolerance of the geometry-factor quadrature.
pub const U_REL_TOL: f64 = 1e-8;

/// Larmor-frequency window (rad/s) in which the offset field is tunable.
pub const LARMOR_RANGE: (f64, f64) = (2.0 * PI * 0.1e6, 2.0 * PI * 100e6);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NanowireConfig {
    /// Nanotube length L, m.
    pub length: f64,
    /// Mean wire–condensate distance y0, m.
    pub distance: f64,
    /// Vibration amplitude a, m.
    pub amplitude: f64,
    /// Mechanical angular frequency, rad/s.
    pub omega_cnt: f64,
    /// Axial position of the wire midpoint in the trap frame, m.
    #[serde(default)]
    pub z_offset: f64,
}

impl NanowireConfig {
    pub fn new(length: f64, distance: f64, amplitude: f64, omega_cnt: f64) -> Result<Self> {
        let cfg = Self {
            length,
            distance,
            amplitude,
            omega_cnt,
            z_offset: 0.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Hard checks return an error; soft violations come back as warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        for (name, v) in [
            ("length", self.length),
            ("distance", self.distance),
            ("amplitude", self.amplitude),
            ("omega_cnt", self.omega_cnt),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(
                    format!("nanowire.{name}"),
                    format!("must be finite and positive, got {v:e}"),
                ));
            }
        }
        if !self.z_offset.is_finite() {
            return Err(Error::invalid("nanowire.z_offset", "must be finite"));
        }
        let ratio = self.amplitude / self.distance;
        if ratio >= 1.0 {
            return Err(Error::invalid(
                "nanowire.amplitude",
                format!("amplitude must be much smaller than the distance (a/y0 = {ratio})"),
            ));
        }
        let mut warnings = Vec::new();
        if ratio >= 0.1 {
            warnings.push(format!(
                "nanowire.amplitude: a/y0 = {ratio:.3} is not small; the linearised field modulation is inaccurate"
            ));
        }
        if self.distance < 1e-6 {
            warnings.push(format!(
                "nanowire.distance: y0 = {:.3} um is below 1 um where surface forces dominate",
                self.distance * 1e6
            ));
        }
        Ok(warnings)
    }

    /// Trap-frame position expressed in the wire's scaled frame (units of y0).
    pub fn scaled(&self, r: Position) -> Position {
        [
            r[0] / self.distance,
            r[1] / self.distance,
            (r[2] - self.z_offset) / self.distance,
        ]
    }
}

/// Geometry factor U at a point given in units of y0, with its quadrature error.
pub fn u_factor_estimate(r: Position, length: f64) -> Result<Estimate<Complex64>> {
    let [x, y, z] = r;
    if !(length.is_finite() && length > 0.0) {
        return Err(Error::invalid("length", "wire length must be positive"));
    }
    let d = 1.0 + y;
    let transverse2 = x * x + d * d;
    if transverse2 == 0.0 {
        return Err(Error::OnWireAxis);
    }
    let integrand = |zeta: f64| {
        let s = 0.5 * length + z - zeta;
        let s2 = s * s;
        let r2 = transverse2 + s2;
        let weight = (PI * zeta / length).sin() / (r2 * r2 * r2.sqrt());
        Complex64::new(x * x - 2.0 * d * d + s2, -x * d) * weight
    };
    // Split at the point of closest approach, where the integrand peaks.
    let peak = 0.5 * length + z;
    let breaks: Vec<f64> = if peak > 0.0 && peak < length {
        vec![0.0, peak, length]
    } else {
        vec![0.0, length]
    };
    let opts = AdaptiveOptions {
        rel_tol: U_REL_TOL,
        abs_tol: 1e-15,
        max_intervals: 4000,
    };
    adaptive_piecewise(&breaks, opts, integrand)
}

pub fn u_factor(r: Position, length: f64) -> Result<Complex64> {
    u_factor_estimate(r, length).map(|e| e.value)
}

/// μ₀ μ_B a / (16π√2 ħ y0²), in 1/(A·s) so that η·I·t has units m^{-3/2}.
pub fn drive_prefactor(cfg: &NanowireConfig, constants: &PhysicalConstants) -> f64 {
    constants.mu_0 * constants.mu_b * cfg.amplitude
        / (16.0 * PI * 2f64.sqrt() * constants.hbar * cfg.distance * cfg.distance)
}

/// Per-unit-current drive amplitude η(r), m^{-3/2}·A⁻¹·s⁻¹; zero outside the condensate.
pub fn driving_amplitude(
    r: Position,
    cfg: &NanowireConfig,
    cond: &CondensateTF,
    trap: &TrapConfig,
) -> Result<Complex64> {
    let density = tf_density(r, cond, trap);
    if density == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let u = u_factor(cfg.scaled(r), cfg.length / cfg.distance)?;
    let scale = density.sqrt() * drive_prefactor(cfg, &trap.constants);
    Ok(Complex64::i() * u * scale)
}

/// Local detuning Δ(r) = Ω − V_T(r)/ħ, rad/s.
pub fn detuning(r: Position, omega: f64, trap: &TrapConfig) -> f64 {
    omega - trap_potential(r, trap) / trap.constants.hbar
}

/// Larmor angular frequency ½ μ_B B / ħ.
pub fn larmor_frequency(b_offs: f64, constants: &PhysicalConstants) -> f64 {
    0.5 * constants.mu_b * b_offs / constants.hbar
}

/// Ω = ω_cnt − ½ μ_B B_offs / ħ.
pub fn omega_from_boffs(cfg: &NanowireConfig, b_offs: f64, constants: &PhysicalConstants) -> Result<f64> {
    if !(b_offs.is_finite() && b_offs >= 0.0) {
        return Err(Error::invalid("b_offs", format!("must be non-negative, got {b_offs:e}")));
    }
    Ok(cfg.omega_cnt - larmor_frequency(b_offs, constants))
}

/// Inverse of [`omega_from_boffs`].
pub fn boffs_from_omega(cfg: &NanowireConfig, omega: f64, constants: &PhysicalConstants) -> Result<f64> {
    let b = 2.0 * constants.hbar * (cfg.omega_cnt - omega) / constants.mu_b;
    if !(b.is_finite() && b >= 0.0) {
        return Err(Error::invalid(
            "omega",
            format!("Omega = {omega:e} rad/s would need a negative offset field"),
        ));
    }
    Ok(b)
}

/// Warning text when the Larmor frequency leaves the tunable window.
pub fn larmor_warning(b_offs: f64, constants: &PhysicalConstants) -> Option<String> {
    let w = larmor_frequency(b_offs, constants);
    (w < LARMOR_RANGE.0 || w > LARMOR_RANGE.1).then(|| {
        format!(
            "Larmor frequency {:.4} MHz lies outside the tunable 0.1-100 MHz window",
            w / (2.0 * PI * 1e6)
        )
    })
}
