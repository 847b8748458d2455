//! Current-noise spectra and the forward map to transferred-atom numbers.
//!
//! Conventions: `S(ω) = ∫ e^{iωτ} C(τ) dτ` with `C(τ) = ⟨I(0) I(τ)⟩`, hence
//! `C(τ) = (1/2π) ∫ S(ω) e^{−iωτ} dω` and `⟨I²⟩ = (1/2π) ∫ S dω`. Spectral
//! densities are in A²·s. A spectral line of weight `W` (in A²) contributes
//! `2πW δ(ω − ω₀)` to `S` and `W e^{−iω₀τ}` to `C`.
//!
//! The mean number of atoms transferred during a measurement of length `T` is
//!
//! ```text
//! N(Ω) = T ∫ e^{iΩτ} C(τ) f(τ) D(τ) dτ                    (full)
//!      → (T/2π) ∫ S(ω) D̃(Ω − ω) dω
//!      = T (ħ/μ) n_det ∫ S(ω) d̃(ħ(Ω − ω)/μ) dω             (long time, U ≈ U(0))
//! ```
//!
//! On the dimensionless axis ω̃ = ħω/μ the long-time form reads
//! `T (ħ/μ) n_det ∫ S̃(ω̃) d̃(Ω̃ − ω̃) dω̃` with `S̃ = (μ/ħ) S` the density per unit ω̃;
//! a flat spectrum therefore gives `N = T n_det S0` in SI units.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{BOLTZMANN, HBAR};
use crate::error::{Error, Result};
use crate::kernel::{window, ResponseKernel};
use crate::nanowire::{boffs_from_omega, omega_from_boffs, NanowireConfig};
use crate::constants::PhysicalConstants;
use crate::quadrature::{adaptive, adaptive_piecewise, AdaptiveOptions, GaussLegendre};

/// Relative size of negative or imaginary residue tolerated in N(Ω).
pub const RESIDUE_TOL: f64 = 1e-8;

/// Largest number of quadrature panels the full-regime time integral may use.
const MAX_TIME_PANELS: usize = 400_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpectrumModel {
    /// White noise, A²·s.
    Flat { s0: f64 },
    /// Coherent line; `weight` is its contribution to ⟨I²⟩ in A². A symmetric
    /// line splits the weight equally between ±ω₀.
    Line { omega0: f64, weight: f64, symmetric: bool },
    /// Lorentzian of half-width γ carrying `power` A²:
    /// `S = power · 2γ / ((ω − center)² + γ²)`.
    Lorentzian { center: f64, half_width: f64, power: f64 },
    /// Thermal asymmetry applied to a symmetric base spectrum:
    /// `S(ω) = S_base(ω) · 2/(1 + e^{−ħω/k_B T_e})`, so `S(−ω) = e^{−ħω/k_B T_e} S(ω)`.
    DetailedBalance { base: Box<NoiseSpectrumModel>, temperature: f64 },
    /// Piecewise-linear S between tabulated points, zero outside.
    Tabulated { omega: Vec<f64>, values: Vec<f64> },
}

/// A δ-component of a spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralLine {
    pub omega: f64,
    pub weight: f64,
}

/// 2/(1 + e^{−ħω/k_B T}); the zero-temperature limit is a step.
pub fn detailed_balance_factor(omega: f64, temperature: f64) -> f64 {
    if omega == 0.0 {
        return 1.0;
    }
    if temperature == 0.0 {
        return if omega > 0.0 { 2.0 } else { 0.0 };
    }
    let x = HBAR * omega / (BOLTZMANN * temperature);
    if x > 0.0 {
        2.0 / (1.0 + (-x).exp())
    } else {
        2.0 * x.exp() / (1.0 + x.exp())
    }
}

impl NoiseSpectrumModel {
    pub fn zero() -> Self {
        NoiseSpectrumModel::Flat { s0: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("model.{name}"), format!("must be finite and non-negative, got {v:e}")))
            }
        };
        match self {
            NoiseSpectrumModel::Flat { s0 } => nonneg("s0", *s0),
            NoiseSpectrumModel::Line { omega0, weight, .. } => {
                if !omega0.is_finite() {
                    return Err(Error::invalid("model.omega0", "must be finite"));
                }
                nonneg("weight", *weight)
            }
            NoiseSpectrumModel::Lorentzian { center, half_width, power } => {
                if !center.is_finite() {
                    return Err(Error::invalid("model.center", "must be finite"));
                }
                if !(half_width.is_finite() && *half_width > 0.0) {
                    return Err(Error::invalid("model.half_width", "must be positive"));
                }
                nonneg("power", *power)
            }
            NoiseSpectrumModel::DetailedBalance { base, temperature } => {
                nonneg("temperature", *temperature)?;
                if matches!(**base, NoiseSpectrumModel::DetailedBalance { .. }) {
                    return Err(Error::invalid("model.base", "detailed balance cannot be nested"));
                }
                base.validate()?;
                if !base.is_classical() {
                    return Err(Error::invalid("model.base", "base spectrum must be symmetric in omega"));
                }
                Ok(())
            }
            NoiseSpectrumModel::Tabulated { omega, values } => {
                if omega.len() != values.len() || omega.len() < 2 {
                    return Err(Error::invalid("model.values", "need matching omega/values with >= 2 points"));
                }
                if omega.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::invalid("model.omega", "must be strictly increasing"));
                }
                for v in values {
                    nonneg("values", *v)?;
                }
                Ok(())
            }
        }
    }

    /// True iff S(ω) = S(−ω); only such spectra can arise from a classical current.
    pub fn is_classical(&self) -> bool {
        match self {
            NoiseSpectrumModel::Flat { .. } => true,
            NoiseSpectrumModel::Line { omega0, symmetric, weight } => *symmetric || *omega0 == 0.0 || *weight == 0.0,
            NoiseSpectrumModel::Lorentzian { center, power, .. } => *center == 0.0 || *power == 0.0,
            NoiseSpectrumModel::DetailedBalance { base, .. } => base.total_power() == Some(0.0),
            NoiseSpectrumModel::Tabulated { omega, values } => {
                let n = omega.len();
                (0..n).all(|i| omega[i] == -omega[n - 1 - i] && values[i] == values[n - 1 - i])
            }
        }
    }

    /// ⟨I²⟩ in A², or `None` for a flat (non-integrable) spectrum.
    pub fn total_power(&self) -> Option<f64> {
        match self {
            NoiseSpectrumModel::Flat { s0 } => (*s0 == 0.0).then_some(0.0),
            NoiseSpectrumModel::Line { weight, .. } => Some(*weight),
            NoiseSpectrumModel::Lorentzian { power, .. } => Some(*power),
            NoiseSpectrumModel::DetailedBalance { .. } => None,
            NoiseSpectrumModel::Tabulated { omega, values } => Some(
                omega
                    .windows(2)
                    .zip(values.windows(2))
                    .map(|(w, v)| 0.5 * (w[1] - w[0]) * (v[0] + v[1]))
                    .sum::<f64>()
                    / (2.0 * PI),
            ),
        }
    }

    /// Continuous part of S(ω), A²·s (lines excluded).
    pub fn density(&self, omega: f64) -> f64 {
        match self {
            NoiseSpectrumModel::Flat { s0 } => *s0,
            NoiseSpectrumModel::Line { .. } => 0.0,
            NoiseSpectrumModel::Lorentzian { center, half_width, power } => {
                let d = omega - center;
                power * 2.0 * half_width / (d * d + half_width * half_width)
            }
            NoiseSpectrumModel::DetailedBalance { base, temperature } => {
                base.density(omega) * detailed_balance_factor(omega, *temperature)
            }
            NoiseSpectrumModel::Tabulated { omega: xs, values } => {
                let n = xs.len();
                if !(omega >= xs[0] && omega <= xs[n - 1]) {
                    return 0.0;
                }
                let i = match xs.binary_search_by(|v| v.total_cmp(&omega)) {
                    Ok(i) => return values[i],
                    Err(i) => i - 1,
                };
                let u = (omega - xs[i]) / (xs[i + 1] - xs[i]);
                values[i] + u * (values[i + 1] - values[i])
            }
        }
    }

    pub fn lines(&self) -> Vec<SpectralLine> {
        match self {
            NoiseSpectrumModel::Line { omega0, weight, symmetric } => {
                if *symmetric && *omega0 != 0.0 {
                    vec![
                        SpectralLine { omega: -omega0, weight: 0.5 * weight },
                        SpectralLine { omega: *omega0, weight: 0.5 * weight },
                    ]
                } else {
                    vec![SpectralLine { omega: *omega0, weight: *weight }]
                }
            }
            NoiseSpectrumModel::DetailedBalance { base, temperature } => base
                .lines()
                .into_iter()
                .map(|l| SpectralLine {
                    omega: l.omega,
                    weight: l.weight * detailed_balance_factor(l.omega, *temperature),
                })
                .collect(),
            _ => Vec::new(),
        }
    }

    fn flat_level(&self) -> f64 {
        match self {
            NoiseSpectrumModel::Flat { s0 } => *s0,
            _ => 0.0,
        }
    }

    /// Frequencies where the continuous part has kinks or peaks.
    fn features(&self) -> Vec<f64> {
        match self {
            NoiseSpectrumModel::Lorentzian { center, half_width, .. } => {
                vec![center - half_width, *center, center + half_width]
            }
            NoiseSpectrumModel::DetailedBalance { base, .. } => {
                let mut f = base.features();
                f.push(0.0);
                f
            }
            NoiseSpectrumModel::Tabulated { omega, .. } => omega.clone(),
            _ => Vec::new(),
        }
    }

    /// Largest frequency (rad/s) the spectrum has appreciable structure at.
    fn frequency_extent(&self) -> f64 {
        match self {
            NoiseSpectrumModel::Flat { .. } => 0.0,
            NoiseSpectrumModel::Line { omega0, .. } => omega0.abs(),
            NoiseSpectrumModel::Lorentzian { center, half_width, .. } => center.abs() + half_width,
            NoiseSpectrumModel::DetailedBalance { base, .. } => base.frequency_extent(),
            NoiseSpectrumModel::Tabulated { omega, .. } => omega[0].abs().max(omega[omega.len() - 1].abs()),
        }
    }

    /// True when C(τ) is available in closed form (a flat part contributes a δ at τ = 0).
    fn has_closed_form_correlation(&self) -> bool {
        match self {
            NoiseSpectrumModel::DetailedBalance { base, .. } => matches!(**base, NoiseSpectrumModel::Line { .. }),
            _ => true,
        }
    }

    /// C(τ) = (1/2π) ∫ S(ω) e^{−iωτ} dω in A². Flat spectra have a δ-correlation
    /// and are rejected.
    pub fn autocorrelation(&self, tau: f64) -> Result<Complex64> {
        self.validate()?;
        let lines: Complex64 = self
            .lines()
            .iter()
            .map(|l| Complex64::from_polar(l.weight, -l.omega * tau))
            .sum();
        let continuous = match self {
            NoiseSpectrumModel::Flat { s0 } => {
                if *s0 == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    return Err(Error::invalid("model", "a flat spectrum has a delta autocorrelation"));
                }
            }
            NoiseSpectrumModel::Line { .. } => Complex64::new(0.0, 0.0),
            NoiseSpectrumModel::Lorentzian { center, half_width, power } => {
                Complex64::from_polar(power * (-half_width * tau.abs()).exp(), -center * tau)
            }
            NoiseSpectrumModel::Tabulated { omega, values } => piecewise_linear_transform(omega, values, tau),
            NoiseSpectrumModel::DetailedBalance { base, temperature } => {
                detailed_balance_correlation(base, *temperature, tau)?
            }
        };
        Ok(lines + continuous)
    }
}

fn gl8() -> &'static GaussLegendre {
    use std::sync::OnceLock;
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(8))
}

/// (1/2π) ∫ S(ω) e^{−iωτ} dω for piecewise-linear S.
fn piecewise_linear_transform(omega: &[f64], values: &[f64], tau: f64) -> Complex64 {
    let rule = gl8();
    let mut acc = Complex64::new(0.0, 0.0);
    for (w, v) in omega.windows(2).zip(values.windows(2)) {
        let (a, b) = (w[0], w[1]);
        let panels = ((b - a) * tau.abs()).ceil() as usize + 1;
        acc += rule.composite(a, b, panels, |x| {
            let s = v[0] + (v[1] - v[0]) * (x - a) / (b - a);
            Complex64::from_polar(s, -x * tau)
        });
    }
    acc / (2.0 * PI)
}

fn detailed_balance_correlation(base: &NoiseSpectrumModel, temperature: f64, tau: f64) -> Result<Complex64> {
    let opts = AdaptiveOptions {
        rel_tol: 1e-9,
        abs_tol: 0.0,
        max_intervals: 20_000,
    };
    match base {
        NoiseSpectrumModel::Line { .. } => Ok(Complex64::new(0.0, 0.0)),
        NoiseSpectrumModel::Flat { s0 } if *s0 == 0.0 => Ok(Complex64::new(0.0, 0.0)),
        NoiseSpectrumModel::Flat { .. } => Err(Error::invalid("model", "a flat spectrum has a delta autocorrelation")),
        NoiseSpectrumModel::Lorentzian { center, half_width, power } => {
            // ω = center + γ tan θ maps the Lorentzian onto a bounded integrand.
            let opts = opts.with_abs(1e-12 * power);
            let est = adaptive(-0.5 * PI, 0.5 * PI, opts, |theta: f64| {
                let omega = center + half_width * theta.tan();
                if !omega.is_finite() {
                    return Complex64::new(0.0, 0.0);
                }
                Complex64::from_polar(2.0 * power * detailed_balance_factor(omega, temperature), -omega * tau)
            })?;
            Ok(est.value / (2.0 * PI))
        }
        NoiseSpectrumModel::Tabulated { omega, values } => {
            let scale = values.iter().cloned().fold(0.0, f64::max) * (omega[omega.len() - 1] - omega[0]);
            let mut breaks = omega.clone();
            if omega[0] < 0.0 && omega[omega.len() - 1] > 0.0 {
                breaks.push(0.0);
                breaks.sort_by(f64::total_cmp);
                breaks.dedup();
            }
            let est = adaptive_piecewise(&breaks, opts.with_abs(1e-13 * scale), |w: f64| {
                Complex64::from_polar(base.density(w) * detailed_balance_factor(w, temperature), -w * tau)
            })?;
            Ok(est.value / (2.0 * PI))
        }
        NoiseSpectrumModel::DetailedBalance { .. } => Err(Error::invalid("model.base", "nested detailed balance")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Finite measurement window, full time-domain expression.
    Full,
    /// T ≫ ħ/μ: window dropped, convolution with the kernel spectrum.
    LongTime,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Full => "full",
            Regime::LongTime => "long_time",
        })
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Regime::Full),
            "long_time" | "long" => Ok(Regime::LongTime),
            other => Err(Error::Parse(format!("unknown regime '{other}'"))),
        }
    }
}

fn check_result(value: f64, scale: f64) -> Result<f64> {
    if !value.is_finite() {
        return Err(Error::Numerical("non-finite atom number".into()));
    }
    if value < 0.0 {
        if value < -RESIDUE_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Numerical(format!(
                "negative atom number {value:e} (scale {scale:e}): transform convention or grid error"
            )));
        }
        return Ok(0.0);
    }
    Ok(value)
}

/// Long-time atom number, T ∫ (dω/2π) S(ω) D̃(Ω − ω).
fn long_time(model: &NoiseSpectrumModel, kernel: &ResponseKernel, t_meas: f64, big_omega: f64) -> Result<f64> {
    if kernel.is_empty() {
        return Ok(0.0);
    }
    let mut total = t_meas * model.flat_level() * kernel.d0();
    for line in model.lines() {
        total += t_meas * line.weight * kernel.spectral(big_omega - line.omega);
    }
    let continuous = match model {
        NoiseSpectrumModel::Flat { .. } | NoiseSpectrumModel::Line { .. } => 0.0,
        _ => {
            let bw = kernel.bandwidth();
            let orient = if kernel.is_mirrored() { -1.0 } else { 1.0 };
            let mut breaks = vec![0.0, 1.0];
            for f in model.features() {
                let w = orient * (big_omega - f) / bw;
                if w > 0.0 && w < 1.0 {
                    breaks.push(w.sqrt());
                }
            }
            breaks.sort_by(f64::total_cmp);
            breaks.dedup();
            let est = adaptive_piecewise(&breaks, AdaptiveOptions::rel(1e-10).with_abs(1e-300), |s: f64| {
                let w = kernel.radial_weight(s);
                if w == 0.0 {
                    0.0
                } else {
                    w * model.density(big_omega - kernel.frequency_at(s))
                }
            })?;
            t_meas * kernel.n_det * est.value
        }
    };
    Ok(total + continuous)
}

/// Precomputed D(τ) f(τ) on the quadrature nodes of the full-regime time integral.
struct TimeQuadrature {
    tau: Vec<f64>,
    weighted_kernel: Vec<Complex64>,
}

impl TimeQuadrature {
    fn new(kernel: &ResponseKernel, t_meas: f64, max_rate: f64) -> Result<Self> {
        let h = 2.0 / max_rate.max(f64::MIN_POSITIVE);
        let panels = (t_meas / h).ceil().max(1.0);
        if panels > MAX_TIME_PANELS as f64 {
            return Err(Error::Numerical(format!(
                "full-regime time integral needs {panels:e} panels; use the long-time regime for T = {t_meas:e} s"
            )));
        }
        let nodes = gl8().composite_nodes(0.0, t_meas, panels as usize);
        let (tau, weighted_kernel): (Vec<f64>, Vec<Complex64>) = nodes
            .par_iter()
            .map(|&(t, w)| (t, kernel.time_domain(t) * (w * window(t_meas, t))))
            .unzip();
        Ok(Self { tau, weighted_kernel })
    }

    /// T · 2 Re ∫₀^T e^{iΩτ} C(τ) f(τ) D(τ) dτ, using C(−τ) = C(τ)*.
    fn atoms(&self, t_meas: f64, big_omega: f64, correlation: &[Complex64]) -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for ((t, kd), c) in self.tau.iter().zip(&self.weighted_kernel).zip(correlation) {
            acc += Complex64::from_polar(1.0, big_omega * t) * c * kd;
        }
        2.0 * t_meas * acc.re
    }
}

fn correlation_on(model: &NoiseSpectrumModel, tau: &[f64]) -> Result<Vec<Complex64>> {
    let regular = match model {
        NoiseSpectrumModel::Flat { .. } => NoiseSpectrumModel::zero(),
        other => other.clone(),
    };
    tau.par_iter().map(|&t| regular.autocorrelation(t)).collect()
}

fn oscillation_rate(model: &NoiseSpectrumModel, kernel: &ResponseKernel, max_abs_omega: f64) -> f64 {
    max_abs_omega + model.frequency_extent() + kernel.bandwidth() + 1.0 / f64::MAX.sqrt()
}

/// Full-regime atom number through the frequency-domain resolution function,
/// for spectra whose correlation has no closed form.
fn full_via_resolution(model: &NoiseSpectrumModel, kernel: &ResponseKernel, t_meas: f64, big_omega: f64) -> Result<f64> {
    let bw = kernel.bandwidth();
    let mut total = t_meas * model.flat_level() * kernel.d0();
    for line in model.lines() {
        total += t_meas * line.weight * kernel.resolution(t_meas, big_omega - line.omega)?;
    }
    let span = 10.0 * bw + 20.0 * PI / t_meas;
    let mut breaks = vec![big_omega - span, big_omega + span];
    breaks.extend(model.features().into_iter().filter(|f| (f - big_omega).abs() < span));
    breaks.extend([big_omega - bw, big_omega]);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let continuous_model = match model {
        NoiseSpectrumModel::DetailedBalance { base, temperature } if matches!(**base, NoiseSpectrumModel::Flat { .. }) => {
            // Flat part beyond the constant level: S0 (factor − 1).
            let s0 = base.flat_level();
            let t = *temperature;
            return {
                let est = adaptive_piecewise(&breaks, AdaptiveOptions::rel(1e-8).with_abs(1e-300), |w: f64| {
                    s0 * (detailed_balance_factor(w, t) - 1.0) * kernel.resolution(t_meas, big_omega - w).unwrap_or(f64::NAN)
                })?;
                Ok(t_meas * s0 * kernel.d0() + t_meas * est.value / (2.0 * PI))
            };
        }
        other => other,
    };
    let est = adaptive_piecewise(&breaks, AdaptiveOptions::rel(1e-8).with_abs(1e-300), |w: f64| {
        let s = continuous_model.density(w);
        if s == 0.0 {
            0.0
        } else {
            s * kernel.resolution(t_meas, big_omega - w).unwrap_or(f64::NAN)
        }
    })?;
    total += t_meas * est.value / (2.0 * PI);
    Ok(total)
}

/// Mean number of atoms transferred into m = 0 at detuning Ω (rad/s).
pub fn transferred_atoms(
    model: &NoiseSpectrumModel,
    kernel: &ResponseKernel,
    t_meas: f64,
    big_omega: f64,
    regime: Regime,
) -> Result<f64> {
    Ok(transferred_atoms_many(model, kernel, t_meas, &[big_omega], regime)?[0])
}

/// [`transferred_atoms`] on many detunings, sharing the time-domain setup.
pub fn transferred_atoms_many(
    model: &NoiseSpectrumModel,
    kernel: &ResponseKernel,
    t_meas: f64,
    omegas: &[f64],
    regime: Regime,
) -> Result<Vec<f64>> {
    model.validate()?;
    if !(t_meas.is_finite() && t_meas > 0.0) {
        return Err(Error::invalid("T", "measurement time must be positive"));
    }
    if kernel.is_empty() {
        return Ok(vec![0.0; omegas.len()]);
    }
    let scale = t_meas * kernel.d0() * magnitude_scale(model, kernel);
    let raw: Vec<f64> = match regime {
        Regime::LongTime => omegas
            .par_iter()
            .map(|&o| long_time(model, kernel, t_meas, o))
            .collect::<Result<_>>()?,
        Regime::Full if model.has_closed_form_correlation() => {
            let max_abs = omegas.iter().fold(0.0f64, |m, o| m.max(o.abs()));
            let quad = TimeQuadrature::new(kernel, t_meas, oscillation_rate(model, kernel, max_abs))?;
            let corr = correlation_on(model, &quad.tau)?;
            let flat = t_meas * model.flat_level() * kernel.d0();
            omegas
                .par_iter()
                .map(|&o| flat + quad.atoms(t_meas, o, &corr))
                .collect()
        }
        Regime::Full => omegas
            .par_iter()
            .map(|&o| full_via_resolution(model, kernel, t_meas, o))
            .collect::<Result<_>>()?,
    };
    raw.into_iter().map(|v| check_result(v, scale)).collect()
}

/// Typical spectral density of the model (A²·s), used to judge residues.
fn magnitude_scale(model: &NoiseSpectrumModel, kernel: &ResponseKernel) -> f64 {
    let bw = kernel.bandwidth().max(f64::MIN_POSITIVE);
    match model {
        NoiseSpectrumModel::Flat { s0 } => *s0,
        NoiseSpectrumModel::DetailedBalance { base, .. } => 2.0 * magnitude_scale(base, kernel),
        other => {
            let power = other.total_power().unwrap_or(0.0);
            let peak = match other {
                NoiseSpectrumModel::Lorentzian { half_width, power, .. } => 2.0 * power / half_width,
                NoiseSpectrumModel::Tabulated { values, .. } => values.iter().cloned().fold(0.0, f64::max),
                _ => 0.0,
            };
            (2.0 * PI * power / bw).max(peak)
        }
    }
}

/// Scan coordinate: detuning and the offset field that realises it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanAxis {
    /// rad/s, strictly increasing.
    pub omega: Vec<f64>,
    /// T.
    pub b_offs: Vec<f64>,
}

impl ScanAxis {
    pub fn from_omega(omega: Vec<f64>, wire: &NanowireConfig, constants: &PhysicalConstants) -> Result<Self> {
        let b_offs = omega
            .iter()
            .map(|&o| boffs_from_omega(wire, o, constants))
            .collect::<Result<_>>()?;
        let axis = Self { omega, b_offs };
        axis.validate()?;
        Ok(axis)
    }

    /// Builds the axis from offset fields; Ω decreases with B, so the points are reordered.
    pub fn from_b_offs(mut b_offs: Vec<f64>, wire: &NanowireConfig, constants: &PhysicalConstants) -> Result<Self> {
        b_offs.sort_by(|a, b| b.total_cmp(a));
        let omega = b_offs
            .iter()
            .map(|&b| omega_from_boffs(wire, b, constants))
            .collect::<Result<_>>()?;
        let axis = Self { omega, b_offs };
        axis.validate()?;
        Ok(axis)
    }

    fn validate(&self) -> Result<()> {
        if self.omega.is_empty() {
            return Err(Error::invalid("scan", "empty scan grid"));
        }
        if self.omega.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("scan", "Omega grid must be strictly increasing"));
        }
        Ok(())
    }

    /// Symmetric uniform grid of `points` detunings in [−max, max].
    pub fn symmetric(max: f64, points: usize, wire: &NanowireConfig, constants: &PhysicalConstants) -> Result<Self> {
        if points < 2 {
            return Err(Error::invalid("scan.points", "need at least two points"));
        }
        let omega = (0..points)
            .map(|i| -max + 2.0 * max * i as f64 / (points - 1) as f64)
            .map(|o| if o.abs() < 1e-12 * max { 0.0 } else { o })
            .collect();
        Self::from_omega(omega, wire, constants)
    }
}

/// Simulated shot-by-shot detector records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub efficiency: f64,
    pub seed: u64,
    /// `shots[i]` holds the counts for every shot at scan point i.
    pub shots: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub omega: Vec<f64>,
    pub b_offs: Vec<f64>,
    pub mean_atoms: Vec<f64>,
    /// Measurement time, s.
    pub t_meas: f64,
    pub regime: Regime,
    pub provenance: String,
    pub warnings: Vec<String>,
    pub counts: Option<Counts>,
}

/// Rotating-wave validity: |Ω| must stay well below ω_cnt.
pub const RWA_FRACTION: f64 = 0.1;

pub fn scan(
    model: &NoiseSpectrumModel,
    kernel: &ResponseKernel,
    t_meas: f64,
    axis: &ScanAxis,
    regime: Regime,
    omega_cnt: f64,
) -> Result<ScanResult> {
    let mean_atoms = transferred_atoms_many(model, kernel, t_meas, &axis.omega, regime)?;
    let mut warnings = kernel.warnings.clone();
    let worst = axis.omega.iter().fold(0.0f64, |m, o| m.max(o.abs()));
    if worst > RWA_FRACTION * omega_cnt {
        warnings.push(format!(
            "scan reaches |Omega| = {worst:e} rad/s, beyond {RWA_FRACTION} omega_cnt where the rotating-wave approximation holds"
        ));
    }
    Ok(ScanResult {
        omega: axis.omega.clone(),
        b_offs: axis.b_offs.clone(),
        mean_atoms,
        t_meas,
        regime,
        provenance: kernel.provenance.clone(),
        warnings,
        counts: None,
    })
}

/// N(Ω) − N(−Ω) on a grid symmetric about Ω = 0.
pub fn asymmetry(scan: &ScanResult) -> Result<Vec<f64>> {
    let n = scan.omega.len();
    let scale = scan.omega.iter().fold(0.0f64, |m, o| m.max(o.abs()));
    for i in 0..n {
        let (a, b) = (scan.omega[i], scan.omega[n - 1 - i]);
        if (a + b).abs() > 1e-9 * scale {
            return Err(Error::GridMismatch(format!(
                "asymmetry needs a grid symmetric about zero; {a:e} has no partner"
            )));
        }
    }
    Ok((0..n)
        .map(|i| scan.mean_atoms[i] - scan.mean_atoms[n - 1 - i])
        .collect())
}

/// RMS current detectable with one transferred atom, √(μ / (ħ T n_det)), A.
pub fn sensitivity_estimate(kernel: &ResponseKernel, t_meas: f64) -> Result<f64> {
    if !(t_meas > 0.0) {
        return Err(Error::invalid("T", "measurement time must be positive"));
    }
    if kernel.is_empty() {
        return Err(Error::invalid("kernel", "empty condensate cannot detect anything"));
    }
    Ok((kernel.bandwidth() / (t_meas * kernel.n_det)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condensate::TrapConfig;
    use crate::kernel::{d_tilde, KernelSettings};

    fn kernel(n: f64) -> ResponseKernel {
        let trap = TrapConfig::new(2.0 * PI * 500.0, 2.0 * PI * 109.0, n, 3.5e-3).unwrap();
        let wire = NanowireConfig::new(2e-6, 4e-6, 10e-9, 2.0 * PI * 50e6).unwrap();
        ResponseKernel::build(&trap, &wire, &KernelSettings::default()).unwrap()
    }

    #[test]
    fn flat_long_time_is_constant() {
        let k = kernel(1e5);
        let t = 0.5;
        let s0 = 2e-16;
        let model = NoiseSpectrumModel::Flat { s0 };
        let bw = k.bandwidth();
        let omegas: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.37 * bw).collect();
        let n = transferred_atoms_many(&model, &k, t, &omegas, Regime::LongTime).unwrap();
        let expected = t * k.n_det * s0;
        for v in n {
            assert!((v / expected - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_model_gives_zero() {
        let k = kernel(1e4);
        for model in [NoiseSpectrumModel::zero(), NoiseSpectrumModel::Lorentzian { center: 0.0, half_width: 1e3, power: 0.0 }] {
            for regime in [Regime::LongTime, Regime::Full] {
                let n = transferred_atoms(&model, &k, 1e-3, 500.0, regime).unwrap();
                assert_eq!(n, 0.0);
            }
        }
    }

    #[test]
    fn line_traces_d_tilde() {
        let k = kernel(1e5);
        let bw = k.bandwidth();
        let w0 = 2.0 * bw;
        let weight = 1e-12;
        let t = 1.0;
        let model = NoiseSpectrumModel::Line { omega0: w0, weight, symmetric: true };
        for x in [-0.2, 0.1, 0.333, 0.7, 0.99, 1.3] {
            let big = w0 + x * bw;
            let n = transferred_atoms(&model, &k, t, big, Regime::LongTime).unwrap();
            // Analytic convolution with the δ at +ω0 (the −ω0 partner is out of reach).
            let expected = t * (0.5 * weight) * 2.0 * PI * k.n_det / bw * d_tilde(x);
            assert!((n - expected).abs() <= 1e-12 * expected.abs().max(1e-30), "x = {x}");
            let mirror = transferred_atoms(&model, &k, t, -w0 + x * bw, Regime::LongTime).unwrap();
            assert!((mirror - expected).abs() <= 1e-12 * expected.abs().max(1e-30));
        }
    }

    #[test]
    fn detailed_balance_factor_limits() {
        assert_eq!(detailed_balance_factor(1.0, 0.0), 2.0);
        assert_eq!(detailed_balance_factor(-1.0, 0.0), 0.0);
        assert_eq!(detailed_balance_factor(0.0, 1e-6), 1.0);
        let t = 1e-7;
        let w = 3e3;
        let ratio = detailed_balance_factor(-w, t) / detailed_balance_factor(w, t);
        assert!((ratio - (-HBAR * w / (BOLTZMANN * t)).exp()).abs() < 1e-14);
        assert!((detailed_balance_factor(w, t) + detailed_balance_factor(-w, t) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn classical_flags() {
        assert!(NoiseSpectrumModel::Flat { s0: 1.0 }.is_classical());
        assert!(NoiseSpectrumModel::Lorentzian { center: 0.0, half_width: 1.0, power: 1.0 }.is_classical());
        assert!(!NoiseSpectrumModel::Lorentzian { center: 1.0, half_width: 1.0, power: 1.0 }.is_classical());
        assert!(!NoiseSpectrumModel::Line { omega0: 1.0, weight: 1.0, symmetric: false }.is_classical());
        let db = NoiseSpectrumModel::DetailedBalance {
            base: Box::new(NoiseSpectrumModel::Lorentzian { center: 0.0, half_width: 1.0, power: 1.0 }),
            temperature: 1e-9,
        };
        assert!(!db.is_classical());
        assert!(db.validate().is_ok());
        let bad = NoiseSpectrumModel::DetailedBalance {
            base: Box::new(NoiseSpectrumModel::Lorentzian { center: 1.0, half_width: 1.0, power: 1.0 }),
            temperature: 1e-9,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn lorentzian_autocorrelation_is_real_exponential() {
        let m = NoiseSpectrumModel::Lorentzian { center: 0.0, half_width: 250.0, power: 3e-12 };
        for tau in [-4e-3, -1e-3, 0.0, 2e-3] {
            let c = m.autocorrelation(tau).unwrap();
            assert_eq!(c.im, 0.0);
            assert!((c.re - 3e-12 * (-250.0 * f64::abs(tau)).exp()).abs() < 1e-24);
        }
        assert!(NoiseSpectrumModel::Flat { s0: 1.0 }.autocorrelation(0.0).is_err());
    }

    #[test]
    fn tabulated_autocorrelation_matches_band_limited_closed_form() {
        let wc = 2e3;
        let sw = 4e-15;
        let m = NoiseSpectrumModel::Tabulated { omega: vec![-wc, wc], values: vec![sw, sw] };
        for tau in [0.0, 1e-4, 7e-4, -2e-3] {
            let c = m.autocorrelation(tau).unwrap();
            let exact = if tau == 0.0 { sw * wc / PI } else { sw * (wc * tau).sin() / (PI * tau) };
            assert!((c.re - exact).abs() < 1e-12 * sw * wc);
            assert!(c.im.abs() < 1e-12 * sw * wc);
        }
    }

    #[test]
    fn asymmetry_requires_symmetric_grid() {
        let scan = ScanResult {
            omega: vec![-1.0, 0.0, 2.0],
            b_offs: vec![0.0; 3],
            mean_atoms: vec![1.0, 2.0, 3.0],
            t_meas: 1.0,
            regime: Regime::LongTime,
            provenance: String::new(),
            warnings: vec![],
            counts: None,
        };
        assert!(matches!(asymmetry(&scan), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn sensitivity_scales_with_time() {
        let k = kernel(1e5);
        let one = sensitivity_estimate(&k, 1.0).unwrap();
        let four = sensitivity_estimate(&k, 4.0).unwrap();
        assert!((one / four - 2.0).abs() < 1e-14);
        assert!((one / 1.082_374_033_305_161_9e-6 - 1.0).abs() < 1e-8);
    }
}
