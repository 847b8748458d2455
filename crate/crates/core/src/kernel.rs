//! Spectral resolution of the condensate probe.
//!
//! The coupling kernel `D(τ) = ∫ |η(r)|² exp(−iτ V_T(r)/ħ) d³r` depends on
//! position only through the trap level `V_T = μ w`, so it is the Fourier
//! transform of a one-dimensional level density. Writing the stretched radius
//! `s = sqrt(w)` (the Thomas–Fermi ellipsoid maps to the unit ball), every
//! kernel here is represented by a profile `q(w)` on `w ∈ [0, 1]` with
//!
//! ```text
//! D(τ)  = n_det ∫₀¹ 2s q(s²) exp(−iτ μ s²/ħ) ds
//! D̃(ω) = ∫ e^{iωτ} D(τ) dτ = 2π n_det (ħ/μ) q(ħω/μ)
//! ```
//!
//! For `U(r) ≈ U(0)` the profile is `q = d̃(w) = (15/4)√w(1−w)`: the Thomas–Fermi
//! density `(μ − V)/g` weighted by the shell area `∝ √V dV` of the ellipsoid,
//! normalised to one. With the exact geometry factor, `q(w) = d̃(w)·a(w)` where
//! `a` is the average of `|U|²/|U(0)|²` over the level surface `V_T = μw`
//! (co-area formula), tabulated on a spline.
//!
//! All forward transforms follow `S(ω) = ∫ e^{iωτ} C(τ) dτ`; inverses carry 1/2π.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::condensate::{chemical_potential, ellipsoidal_point, TrapConfig};
use crate::error::{Error, Result};
use crate::interp::{CubicSpline, LinearTable};
use crate::nanowire::{drive_prefactor, u_factor, NanowireConfig};
use crate::quadrature::{adaptive, adaptive_piecewise, AdaptiveOptions, GaussLegendre};

/// Normalised level density (15/4)√w(1−w) on [0, 1].
pub fn d_tilde(w: f64) -> f64 {
    if (0.0..=1.0).contains(&w) {
        3.75 * w.sqrt() * (1.0 - w)
    } else {
        0.0
    }
}

/// Antiderivatives `∫₀^w d̃` and `∫₀^w u d̃(u) du`, clamped to the support.
pub fn d_tilde_moments(w: f64) -> (f64, f64) {
    let w = w.clamp(0.0, 1.0);
    let r = w.sqrt();
    let w32 = w * r;
    let w52 = w32 * w;
    let w72 = w52 * w;
    (3.75 * (2.0 / 3.0 * w32 - 0.4 * w52), 3.75 * (0.4 * w52 - 2.0 / 7.0 * w72))
}

/// Triangular window f(τ) of a measurement lasting `t_meas`.
pub fn window(t_meas: f64, tau: f64) -> f64 {
    let r = tau.abs() / t_meas;
    if r <= 1.0 {
        1.0 - r
    } else {
        0.0
    }
}

/// ∫ e^{iωτ} f(τ) dτ = T [sin(ωT/2)/(ωT/2)]², seconds.
pub fn window_ft(t_meas: f64, omega: f64) -> f64 {
    let x = 0.5 * omega * t_meas;
    if x.abs() < 1e-8 {
        t_meas * (1.0 - x * x / 3.0)
    } else {
        let s = x.sin() / x;
        t_meas * s * s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelMode {
    /// Geometry factor frozen at the condensate centre.
    Approx1D,
    /// Full position dependence of the geometry factor.
    Exact3D,
}

impl std::fmt::Display for KernelMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            KernelMode::Approx1D => "Approx1D",
            KernelMode::Exact3D => "Exact3D",
        })
    }
}

impl std::str::FromStr for KernelMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "approx1d" => Ok(KernelMode::Approx1D),
            "exact3d" => Ok(KernelMode::Exact3D),
            other => Err(Error::Parse(format!("unknown kernel mode '{other}'"))),
        }
    }
}

/// Resolution of the Exact3D level-density construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSettings {
    pub mode: KernelMode,
    /// Spline knots in the level variable w.
    pub shell_knots: usize,
    /// Gauss–Legendre nodes in cos θ on each level surface.
    pub polar_nodes: usize,
    /// Equispaced nodes in φ on each level surface.
    pub azimuthal_nodes: usize,
    /// Replace U(r) by U(0) inside the 3-D construction (diagnostic).
    pub freeze_u: bool,
}

impl Default for KernelSettings {
    fn default() -> Self {
        Self {
            mode: KernelMode::Approx1D,
            shell_knots: 65,
            polar_nodes: 24,
            azimuthal_nodes: 48,
            freeze_u: false,
        }
    }
}

impl KernelSettings {
    pub fn exact() -> Self {
        Self {
            mode: KernelMode::Exact3D,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
enum Profile {
    /// q = d̃.
    ThomasFermi,
    /// q = d̃·a with a(w) the shell average of |U|²/|U(0)|².
    Shell(CubicSpline),
    /// q tabulated (imported kernels).
    Tabulated(LinearTable),
}

/// Detection prefactor [μ₀μ_B a/(16π√2 ħ y0²)]² |U(0)|² N, in 1/(A²·s²).
pub fn n_det(wire: &NanowireConfig, trap: &TrapConfig) -> Result<f64> {
    let p = drive_prefactor(wire, &trap.constants);
    Ok(p * p * centre_u_squared(wire)? * trap.atom_number)
}

fn centre_u_squared(wire: &NanowireConfig) -> Result<f64> {
    Ok(u_factor(wire.scaled([0.0; 3]), wire.length / wire.distance)?.norm_sqr())
}

/// Immutable response kernel of one condensate/wire configuration.
#[derive(Debug, Clone)]
pub struct ResponseKernel {
    pub mode: KernelMode,
    /// Chemical potential, J.
    pub mu: f64,
    pub hbar: f64,
    /// 1/(A²·s²).
    pub n_det: f64,
    /// |U(0)|².
    pub u0_sq: f64,
    d0: f64,
    profile: Profile,
    mirrored: bool,
    pub provenance: String,
    pub warnings: Vec<String>,
}

const TIME_RULE_ORDER: usize = 8;

impl ResponseKernel {
    pub fn build(trap: &TrapConfig, wire: &NanowireConfig, settings: &KernelSettings) -> Result<Self> {
        let mut warnings = wire.validate()?;
        let cond = chemical_potential(trap)?;
        let hbar = trap.constants.hbar;
        let u0_sq = centre_u_squared(wire)?;
        let n_det = n_det(wire, trap)?;
        let provenance = format!(
            "{} kernel; N = {:e}, omega_r = {:e} rad/s, omega_z = {:e} rad/s, L = {:e} m, y0 = {:e} m, a = {:e} m",
            settings.mode, trap.atom_number, trap.omega_r, trap.omega_z, wire.length, wire.distance, wire.amplitude
        );
        if cond.is_empty() {
            warnings.push("atom number is zero; the kernel vanishes identically".into());
            return Ok(Self {
                mode: settings.mode,
                mu: 0.0,
                hbar,
                n_det: 0.0,
                u0_sq,
                d0: 0.0,
                profile: Profile::ThomasFermi,
                mirrored: false,
                provenance,
                warnings,
            });
        }
        let profile = match settings.mode {
            KernelMode::Approx1D => Profile::ThomasFermi,
            KernelMode::Exact3D => {
                if cond.b >= wire.distance {
                    return Err(Error::invalid(
                        "trap.atom_number",
                        format!(
                            "condensate radius {:.3} um reaches the wire at {:.3} um",
                            cond.b * 1e6,
                            wire.distance * 1e6
                        ),
                    ));
                }
                if wire.distance - cond.b < 1e-6 {
                    warnings.push(format!(
                        "condensate edge is {:.3} um from the wire; the near-wire field dominates the kernel",
                        (wire.distance - cond.b) * 1e6
                    ));
                }
                Profile::Shell(shell_profile(&cond, wire, u0_sq, settings)?)
            }
        };
        let mut kernel = Self {
            mode: settings.mode,
            mu: cond.mu,
            hbar,
            n_det,
            u0_sq,
            d0: n_det,
            profile,
            mirrored: false,
            provenance,
            warnings,
        };
        kernel.d0 = kernel.time_domain(0.0).re;
        Ok(kernel)
    }

    /// Kernel from a tabulated D̃(ω), e.g. read back from a kernel file.
    pub fn from_table(mode: KernelMode, mu: f64, hbar: f64, n_det: f64, omega: &[f64], spectral: &[f64]) -> Result<Self> {
        if !(mu > 0.0 && hbar > 0.0 && n_det >= 0.0) {
            return Err(Error::invalid("kernel", "mu and hbar must be positive, n_det non-negative"));
        }
        let profile = match mode {
            KernelMode::Approx1D => Profile::ThomasFermi,
            KernelMode::Exact3D => {
                let scale = if n_det > 0.0 { 2.0 * PI * n_det * hbar / mu } else { 1.0 };
                let w: Vec<f64> = omega.iter().map(|o| o * hbar / mu).collect();
                let q: Vec<f64> = spectral.iter().map(|v| v / scale).collect();
                Profile::Tabulated(LinearTable::new(w, q)?)
            }
        };
        let mut kernel = Self {
            mode,
            mu,
            hbar,
            n_det,
            u0_sq: f64::NAN,
            d0: n_det,
            profile,
            mirrored: false,
            provenance: "imported table".into(),
            warnings: Vec::new(),
        };
        kernel.d0 = kernel.time_domain(0.0).re;
        Ok(kernel)
    }

    /// Kernel with the level density reflected, q(w) → q(−w).
    pub fn mirrored(&self) -> Self {
        let mut k = self.clone();
        k.mirrored = !k.mirrored;
        k
    }

    pub fn is_mirrored(&self) -> bool {
        self.mirrored
    }

    /// μ/ħ in rad/s.
    pub fn bandwidth(&self) -> f64 {
        self.mu / self.hbar
    }

    pub fn is_empty(&self) -> bool {
        self.mu == 0.0 || self.n_det == 0.0
    }

    /// D(0) = ∫|η|² d³r, 1/(A²·s²).
    pub fn d0(&self) -> f64 {
        self.d0
    }

    fn orientation(&self) -> f64 {
        if self.mirrored {
            -1.0
        } else {
            1.0
        }
    }

    /// Unreflected profile q(w).
    fn shape(&self, w: f64) -> f64 {
        match &self.profile {
            Profile::ThomasFermi => d_tilde(w),
            Profile::Shell(a) => {
                if (0.0..=1.0).contains(&w) {
                    d_tilde(w) * a.eval(w)
                } else {
                    0.0
                }
            }
            Profile::Tabulated(t) => {
                if (0.0..=1.0).contains(&w) {
                    t.eval(w)
                } else {
                    0.0
                }
            }
        }
    }

    /// 2s·q(s²): the profile as a density in the stretched radius.
    pub fn radial_weight(&self, s: f64) -> f64 {
        match &self.profile {
            Profile::ThomasFermi => 7.5 * s * s * (1.0 - s * s),
            Profile::Shell(a) => 7.5 * s * s * (1.0 - s * s) * a.eval(s * s),
            Profile::Tabulated(t) => 2.0 * s * t.eval(s * s),
        }
    }

    /// Level density q at dimensionless frequency w = ħω/μ.
    pub fn level_density(&self, w: f64) -> f64 {
        self.shape(self.orientation() * w)
    }

    /// Support of D̃ in rad/s.
    pub fn support(&self) -> (f64, f64) {
        let b = self.bandwidth();
        if self.mirrored {
            (-b, 0.0)
        } else {
            (0.0, b)
        }
    }

    /// Maps a stretched radius s to the frequency offset it contributes, rad/s.
    pub fn frequency_at(&self, s: f64) -> f64 {
        self.orientation() * s * s * self.bandwidth()
    }

    /// D(τ) for τ in seconds, 1/(A²·s²).
    pub fn time_domain(&self, tau: f64) -> Complex64 {
        if self.is_empty() {
            return Complex64::new(0.0, 0.0);
        }
        let phase = self.orientation() * tau * self.bandwidth();
        let rule = gl_rule();
        let panels = phase.abs().ceil() as usize + 4;
        let integral = rule.composite(0.0, 1.0, panels, |s| {
            Complex64::from_polar(self.radial_weight(s), -phase * s * s)
        });
        integral * self.n_det
    }

    /// D̃(ω) = 2π n_det (ħ/μ) q(ħω/μ), in 1/(A²·s).
    pub fn spectral(&self, omega: f64) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        2.0 * PI * self.n_det / self.bandwidth() * self.level_density(omega / self.bandwidth())
    }

    /// D̃ sampled on a grid that spans the support with margin and resolves μ/ħ.
    pub fn kernel_freq(&self, omega_grid: &[f64]) -> Result<Vec<f64>> {
        if self.is_empty() {
            return Ok(vec![0.0; omega_grid.len()]);
        }
        let bw = self.bandwidth();
        check_grid(omega_grid, bw)?;
        let (lo, hi) = self.support();
        let (first, last) = (omega_grid[0], omega_grid[omega_grid.len() - 1]);
        if first > lo - 0.5 * bw || last < hi + 0.5 * bw {
            return Err(Error::GridTooCoarse(format!(
                "grid [{first:e}, {last:e}] rad/s must cover the kernel support [{lo:e}, {hi:e}] with 0.5 mu/hbar margin"
            )));
        }
        Ok(omega_grid.iter().map(|&o| self.spectral(o)).collect())
    }

    /// Spectral resolution function ∫ e^{iωτ} f(τ) D(τ) dτ at one frequency, in 1/A².
    pub fn resolution(&self, t_meas: f64, omega: f64) -> Result<f64> {
        if !(t_meas > 0.0) {
            return Err(Error::invalid("T", "measurement time must be positive"));
        }
        if self.is_empty() {
            return Ok(0.0);
        }
        let scale = self.n_det * t_meas;
        let opts = AdaptiveOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-14 * scale,
            max_intervals: 20_000,
        };
        // Split where the sinc² peak sits, and one main-lobe width either side.
        let bw = self.bandwidth();
        let mut breaks = vec![0.0, 1.0];
        for shift in [-2.0 * PI / t_meas, 0.0, 2.0 * PI / t_meas] {
            let w = self.orientation() * (omega + shift) / bw;
            if w > 0.0 && w < 1.0 {
                breaks.push(w.sqrt());
            }
        }
        breaks.sort_by(f64::total_cmp);
        let est = adaptive_piecewise(&breaks, opts, |s| {
            self.radial_weight(s) * window_ft(t_meas, omega - self.frequency_at(s))
        })?;
        Ok(self.n_det * est.value)
    }

    pub fn resolution_function(&self, t_meas: f64, omega_grid: &[f64]) -> Result<Vec<f64>> {
        omega_grid
            .par_iter()
            .map(|&o| self.resolution(t_meas, o))
            .collect()
    }

    /// ∫₀¹ 2s q(s²) h(ω(s)) ds with ω(s) the frequency offset of level s.
    pub fn average_over_levels(&self, opts: AdaptiveOptions, mut h: impl FnMut(f64) -> f64) -> Result<f64> {
        if self.is_empty() {
            return Ok(0.0);
        }
        Ok(adaptive(0.0, 1.0, opts, |s| {
            let w = self.radial_weight(s);
            if w == 0.0 {
                0.0
            } else {
                w * h(self.frequency_at(s))
            }
        })?
        .value)
    }
}

fn gl_rule() -> &'static GaussLegendre {
    use std::sync::OnceLock;
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(TIME_RULE_ORDER))
}

fn check_grid(grid: &[f64], bandwidth: f64) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::GridTooCoarse("frequency grid needs at least two points".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("omega_grid", "must be strictly increasing"));
    }
    let max_step = grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if max_step > bandwidth / 8.0 {
        return Err(Error::GridTooCoarse(format!(
            "step {max_step:e} rad/s exceeds mu/(8 hbar) = {:e} rad/s",
            bandwidth / 8.0
        )));
    }
    Ok(())
}

/// Level nodes clustered towards the condensate edge, where U varies fastest.
fn shell_knots(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| (0.5 * PI * k as f64 / (n - 1) as f64).sin())
        .collect()
}

fn shell_profile(
    cond: &crate::condensate::CondensateTF,
    wire: &NanowireConfig,
    u0_sq: f64,
    settings: &KernelSettings,
) -> Result<CubicSpline> {
    if settings.shell_knots < 3 || settings.polar_nodes < 1 || settings.azimuthal_nodes < 1 {
        return Err(Error::invalid("kernel", "Exact3D needs >= 3 knots and >= 1 angular node"));
    }
    let polar = GaussLegendre::new(settings.polar_nodes);
    let n_phi = settings.azimuthal_nodes;
    let d_phi = 2.0 * PI / n_phi as f64;
    let length = wire.length / wire.distance;
    let knots = shell_knots(settings.shell_knots);
    let values: Result<Vec<f64>> = knots
        .par_iter()
        .map(|&w| {
            let rho = w.sqrt();
            let mut acc = 0.0;
            for (&ct, &wt) in polar.nodes.iter().zip(&polar.weights) {
                for k in 0..n_phi {
                    let phi = (k as f64 + 0.5) * d_phi;
                    let u_sq = if settings.freeze_u {
                        u0_sq
                    } else {
                        let r = ellipsoidal_point(cond, rho, ct, phi);
                        u_factor(wire.scaled(r), length)?.norm_sqr()
                    };
                    acc += wt * d_phi * u_sq;
                }
            }
            Ok(acc / (4.0 * PI * u0_sq))
        })
        .collect();
    CubicSpline::new(knots, values?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_geometry(n: f64) -> (TrapConfig, NanowireConfig) {
        (
            TrapConfig::new(2.0 * PI * 500.0, 2.0 * PI * 109.0, n, 3.5e-3).unwrap(),
            NanowireConfig::new(2e-6, 4e-6, 10e-9, 2.0 * PI * 50e6).unwrap(),
        )
    }

    #[test]
    fn d_tilde_values() {
        assert!((d_tilde(0.5) - 3.75 * 0.5f64.sqrt() * 0.5).abs() < 1e-15);
        assert!((d_tilde(0.5) - 1.325_825_214_724_776).abs() < 1e-12);
        assert_eq!(d_tilde(1.2), 0.0);
        assert_eq!(d_tilde(-0.1), 0.0);
        let peak = 5.0 / (2.0 * 3f64.sqrt());
        assert!((d_tilde(1.0 / 3.0) - peak).abs() < 1e-12);
        let (f0, f1) = d_tilde_moments(1.0);
        assert!((f0 - 1.0).abs() < 1e-15);
        assert!((f1 - 3.75 * (0.4 - 2.0 / 7.0)).abs() < 1e-15);
    }

    #[test]
    fn window_transform_landmarks() {
        assert_eq!(window_ft(2.0, 0.0), 2.0);
        assert!(window_ft(2.0, 2.0 * PI / 2.0).abs() < 1e-15);
        assert_eq!(window(2.0, 0.0), 1.0);
        assert_eq!(window(2.0, 2.0), 0.0);
        assert_eq!(window(2.0, -2.0), 0.0);
        assert_eq!(window(2.0, -1.0), 0.5);
    }

    #[test]
    fn golden_n_det() {
        let (trap, wire) = reference_geometry(1e5);
        let nd = n_det(&wire, &trap).unwrap();
        assert!((nd / 3.571_243_355_245_501_7e16 - 1.0).abs() < 1e-8);
        let nd2 = n_det(&wire, &trap.with_atom_number(2e5)).unwrap();
        assert!((nd2 / nd - 2.0).abs() < 1e-14);
    }

    #[test]
    fn approx_kernel_at_zero_lag() {
        let (trap, wire) = reference_geometry(1e4);
        let k = ResponseKernel::build(&trap, &wire, &KernelSettings::default()).unwrap();
        assert!((k.d0() / k.n_det - 1.0).abs() < 1e-13);
        for tau in [1e-5, 1e-4, 3e-3] {
            let d = k.time_domain(tau);
            assert!(d.norm() <= k.d0() * (1.0 + 1e-12));
            assert!((k.time_domain(-tau) - d.conj()).norm() < 1e-12 * k.d0());
        }
    }

    #[test]
    fn frozen_exact_kernel_equals_approx_at_zero_lag() {
        let (trap, wire) = reference_geometry(1e4);
        let settings = KernelSettings {
            freeze_u: true,
            shell_knots: 9,
            polar_nodes: 4,
            azimuthal_nodes: 4,
            ..KernelSettings::exact()
        };
        let k = ResponseKernel::build(&trap, &wire, &settings).unwrap();
        assert!((k.d0() / k.n_det - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_atoms_give_zero_kernel() {
        let (trap, wire) = reference_geometry(0.0);
        let k = ResponseKernel::build(&trap, &wire, &KernelSettings::exact()).unwrap();
        assert!(k.is_empty());
        assert_eq!(k.time_domain(1e-3), Complex64::new(0.0, 0.0));
        assert_eq!(k.spectral(10.0), 0.0);
        assert_eq!(k.resolution(1e-3, 0.0).unwrap(), 0.0);
        assert!(!k.warnings.is_empty());
    }

    #[test]
    fn approx_spectrum_support_and_peak() {
        let (trap, wire) = reference_geometry(1e5);
        let k = ResponseKernel::build(&trap, &wire, &KernelSettings::default()).unwrap();
        let bw = k.bandwidth();
        let grid: Vec<f64> = (0..=2000).map(|i| (-0.5 + 2.0 * i as f64 / 2000.0) * bw).collect();
        let dt = k.kernel_freq(&grid).unwrap();
        for (o, v) in grid.iter().zip(&dt) {
            if *o < 0.0 || *o > bw {
                assert_eq!(*v, 0.0);
            }
        }
        let (imax, _) = dt.iter().enumerate().fold((0, 0.0), |m, (i, &v)| if v > m.1 { (i, v) } else { m });
        assert!((grid[imax] / bw - 1.0 / 3.0).abs() <= 1e-3);
        // Trapezoid over the grid: ∫ D̃ dω = 2π D(0).
        let h = grid[1] - grid[0];
        let area: f64 = dt.iter().sum::<f64>() * h;
        assert!((area / (2.0 * PI * k.n_det) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn kernel_freq_rejects_bad_grids() {
        let (trap, wire) = reference_geometry(1e5);
        let k = ResponseKernel::build(&trap, &wire, &KernelSettings::default()).unwrap();
        let bw = k.bandwidth();
        let coarse: Vec<f64> = (0..=4).map(|i| (-0.5 + 0.5 * i as f64) * bw).collect();
        assert!(matches!(k.kernel_freq(&coarse), Err(Error::GridTooCoarse(_))));
        let narrow: Vec<f64> = (0..=100).map(|i| i as f64 * 0.01 * bw).collect();
        assert!(k.kernel_freq(&narrow).is_err());
    }

    #[test]
    fn mirrored_kernel_is_reflected() {
        let (trap, wire) = reference_geometry(1e5);
        let k = ResponseKernel::build(&trap, &wire, &KernelSettings::default()).unwrap();
        let m = k.mirrored();
        let bw = k.bandwidth();
        assert_eq!(m.spectral(-0.3 * bw), k.spectral(0.3 * bw));
        assert!((m.time_domain(2e-4) - k.time_domain(2e-4).conj()).norm() < 1e-12 * k.d0());
    }
}
