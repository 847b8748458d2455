//! Monte-Carlo check of the forward map with classical current trajectories.
//!
//! Each ensemble member draws a stationary current I(t), integrates
//! `ψ₀(r, T) = ∫₀ᵀ η(r) I(T − t) e^{−iΔ(r)t} dt` on a tensor grid over the
//! Thomas–Fermi ellipsoid and sums `|ψ₀|²` with the volume weights. The
//! detuning depends on r only through the level `V_T = μρ²`, so the time
//! integral is evaluated once per radial shell.
//!
//! Member `k` draws from `ChaCha8Rng::seed_from_u64(seed)` with stream `k`, so
//! the ensemble does not depend on how work is scheduled across threads.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::condensate::{chemical_potential, ellipsoidal_point, CondensateTF, Position, TrapConfig};
use crate::error::{Error, Result};
use crate::nanowire::{driving_amplitude, NanowireConfig};
use crate::quadrature::GaussLegendre;
use crate::spectra::NoiseSpectrumModel;

/// Minimum samples per correlation time.
pub const MIN_SAMPLES_PER_CORRELATION: f64 = 20.0;

/// Tones in a band-limited white realization.
pub const BAND_LIMITED_TONES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurrentProcess {
    /// `I0 cos(ω0 t + φ)` with φ uniform.
    SinusoidRandomPhase { amplitude: f64, omega0: f64 },
    /// Stationary Ornstein–Uhlenbeck process, `C(τ) = rms² e^{−|τ|/τ_c}`.
    OrnsteinUhlenbeck { rms: f64, correlation_time: f64 },
    /// Flat density `S_w` on |ω| < ω_c, realized as a sum of random-frequency tones.
    BandLimitedWhite { density: f64, cutoff: f64 },
}

impl CurrentProcess {
    pub fn validate(&self) -> Result<()> {
        let (a, b, na, nb) = match *self {
            CurrentProcess::SinusoidRandomPhase { amplitude, omega0 } => (amplitude, omega0, "amplitude", "omega0"),
            CurrentProcess::OrnsteinUhlenbeck { rms, correlation_time } => (rms, correlation_time, "rms", "correlation_time"),
            CurrentProcess::BandLimitedWhite { density, cutoff } => (density, cutoff, "density", "cutoff"),
        };
        if !(a.is_finite() && a >= 0.0) {
            return Err(Error::invalid(format!("process.{na}"), "must be finite and non-negative"));
        }
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::invalid(format!("process.{nb}"), "must be finite and positive"));
        }
        Ok(())
    }

    /// Time scale the sampling step must resolve, s.
    pub fn correlation_time(&self) -> f64 {
        match *self {
            CurrentProcess::SinusoidRandomPhase { omega0, .. } => 2.0 * PI / omega0,
            CurrentProcess::OrnsteinUhlenbeck { correlation_time, .. } => correlation_time,
            CurrentProcess::BandLimitedWhite { cutoff, .. } => PI / cutoff,
        }
    }

    /// Spectrum with the same autocorrelation.
    pub fn equivalent_spectrum(&self) -> NoiseSpectrumModel {
        match *self {
            CurrentProcess::SinusoidRandomPhase { amplitude, omega0 } => NoiseSpectrumModel::Line {
                omega0,
                weight: 0.5 * amplitude * amplitude,
                symmetric: true,
            },
            CurrentProcess::OrnsteinUhlenbeck { rms, correlation_time } => NoiseSpectrumModel::Lorentzian {
                center: 0.0,
                half_width: 1.0 / correlation_time,
                power: rms * rms,
            },
            CurrentProcess::BandLimitedWhite { density, cutoff } => NoiseSpectrumModel::Tabulated {
                omega: vec![-cutoff, cutoff],
                values: vec![density, density],
            },
        }
    }

    /// Process realizing a spectrum model, where one exists.
    pub fn from_model(model: &NoiseSpectrumModel) -> Result<Self> {
        model.validate()?;
        if !model.is_classical() {
            return Err(Error::AsymmetricSpectrum);
        }
        match model {
            NoiseSpectrumModel::Lorentzian { half_width, power, .. } => Ok(CurrentProcess::OrnsteinUhlenbeck {
                rms: power.sqrt(),
                correlation_time: 1.0 / half_width,
            }),
            NoiseSpectrumModel::Line { omega0, weight, .. } if *omega0 != 0.0 => {
                Ok(CurrentProcess::SinusoidRandomPhase {
                    amplitude: (2.0 * weight).sqrt(),
                    omega0: omega0.abs(),
                })
            }
            NoiseSpectrumModel::Tabulated { omega, values }
                if omega.len() == 2 && values[0] == values[1] && omega[0] == -omega[1] =>
            {
                Ok(CurrentProcess::BandLimitedWhite { density: values[0], cutoff: omega[1] })
            }
            _ => Err(Error::invalid(
                "model",
                "no trajectory sampler for this spectrum; use a centred Lorentzian, a symmetric line or a symmetric flat band",
            )),
        }
    }
}

fn member_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `steps + 1` samples at `t_j = j·dt`.
pub fn sample_current(process: &CurrentProcess, dt: f64, steps: usize, seed: u64) -> Result<Vec<f64>> {
    sample_with(process, dt, steps, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn sample_with(process: &CurrentProcess, dt: f64, steps: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    process.validate()?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("dt", "time step must be positive"));
    }
    let per_corr = process.correlation_time() / dt;
    if per_corr < MIN_SAMPLES_PER_CORRELATION {
        return Err(Error::GridTooCoarse(format!(
            "dt = {dt:e} s gives {per_corr:.1} samples per correlation time; need at least {MIN_SAMPLES_PER_CORRELATION}"
        )));
    }
    let times = (0..=steps).map(|j| j as f64 * dt);
    Ok(match *process {
        CurrentProcess::SinusoidRandomPhase { amplitude, omega0 } => {
            let phase = rng.random_range(0.0..2.0 * PI);
            times.map(|t| amplitude * (omega0 * t + phase).cos()).collect()
        }
        CurrentProcess::OrnsteinUhlenbeck { rms, correlation_time } => {
            let a = (-dt / correlation_time).exp();
            let kick = rms * (-(-2.0 * dt / correlation_time).exp_m1()).sqrt();
            let mut x = rms * rng.sample::<f64, _>(StandardNormal);
            let mut out = Vec::with_capacity(steps + 1);
            out.push(x);
            for _ in 0..steps {
                let xi: f64 = StandardNormal.sample(rng);
                x = a * x + kick * xi;
                out.push(x);
            }
            out
        }
        CurrentProcess::BandLimitedWhite { density, cutoff } => {
            let variance = density * cutoff / PI;
            let amp = (2.0 * variance / BAND_LIMITED_TONES as f64).sqrt();
            let tones: Vec<(f64, f64)> = (0..BAND_LIMITED_TONES)
                .map(|_| (rng.random_range(0.0..cutoff), rng.random_range(0.0..2.0 * PI)))
                .collect();
            times
                .map(|t| tones.iter().map(|(w, p)| amp * (w * t + p).cos()).sum())
                .collect()
        }
    })
}

/// Grid sizes of the stretched ellipsoidal tensor grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSize {
    pub radial: usize,
    pub polar: usize,
    pub azimuthal: usize,
}

impl Default for GridSize {
    fn default() -> Self {
        Self { radial: 24, polar: 24, azimuthal: 24 }
    }
}

/// Quadrature over the condensate with the drive amplitude on every node.
#[derive(Debug, Clone)]
pub struct NodeSet {
    pub positions: Vec<Position>,
    /// m³; sums to the ellipsoid volume.
    pub weights: Vec<f64>,
    pub eta: Vec<Complex64>,
    /// Shell index of each node.
    pub shell: Vec<usize>,
    /// V_T/ħ on each shell, rad/s.
    pub shell_shift: Vec<f64>,
    /// Σ w|η|² over the nodes of each shell.
    pub shell_strength: Vec<f64>,
}

impl NodeSet {
    pub fn build(trap: &TrapConfig, wire: &NanowireConfig, grid: GridSize) -> Result<Self> {
        wire.validate()?;
        let cond = chemical_potential(trap)?;
        if grid.radial == 0 || grid.polar == 0 || grid.azimuthal == 0 {
            return Err(Error::invalid("oracle.grid", "grid sizes must be positive"));
        }
        let radial = GaussLegendre::new(grid.radial);
        let polar = GaussLegendre::new(grid.polar);
        let dphi = 2.0 * PI / grid.azimuthal as f64;
        let mut set = Self {
            positions: Vec::new(),
            weights: Vec::new(),
            eta: Vec::new(),
            shell: Vec::new(),
            shell_shift: Vec::new(),
            shell_strength: Vec::new(),
        };
        let shells: Vec<(f64, f64)> = radial.on_interval(0.0, 1.0).collect();
        for (k, &(rho, wr)) in shells.iter().enumerate() {
            set.shell_shift.push(cond.mu * rho * rho / trap.constants.hbar);
            let mut strength = 0.0;
            for (ct, wt) in polar.on_interval(-1.0, 1.0) {
                for j in 0..grid.azimuthal {
                    let phi = (j as f64 + 0.5) * dphi;
                    let r = ellipsoidal_point(&cond, rho, ct, phi);
                    let w = cond.b * cond.b * cond.c * rho * rho * wr * wt * dphi;
                    let eta = node_eta(r, wire, &cond, trap)?;
                    strength += w * eta.norm_sqr();
                    set.positions.push(r);
                    set.weights.push(w);
                    set.eta.push(eta);
                    set.shell.push(k);
                }
            }
            set.shell_strength.push(strength);
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Σ w|η|², the discrete counterpart of D(0).
    pub fn d0(&self) -> f64 {
        self.shell_strength.iter().sum()
    }
}

fn node_eta(r: Position, wire: &NanowireConfig, cond: &CondensateTF, trap: &TrapConfig) -> Result<Complex64> {
    if cond.is_empty() {
        return Ok(Complex64::new(0.0, 0.0));
    }
    driving_amplitude(r, wire, cond, trap)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSnapshot {
    pub weights: Vec<f64>,
    /// ψ₀ at time T per node, m^{-3/2}.
    pub psi: Vec<Complex64>,
}

impl FieldSnapshot {
    /// ∫|ψ₀|² d³r.
    pub fn atoms(&self) -> f64 {
        self.weights.iter().zip(&self.psi).map(|(w, p)| w * p.norm_sqr()).sum()
    }
}

fn check_trajectory(trajectory: &[f64], dt: f64, t_meas: f64) -> Result<()> {
    if trajectory.len() < 2 {
        return Err(Error::GridMismatch("trajectory needs at least two samples".into()));
    }
    let span = (trajectory.len() - 1) as f64 * dt;
    if (span - t_meas).abs() > 1e-9 * t_meas {
        return Err(Error::GridMismatch(format!(
            "trajectory spans {span:e} s but T = {t_meas:e} s"
        )));
    }
    Ok(())
}

/// Trapezoid rule for ∫₀ᵀ I(T − t) e^{−iΔt} dt.
fn time_integral(trajectory: &[f64], dt: f64, delta: f64) -> Complex64 {
    let n = trajectory.len() - 1;
    let step = Complex64::from_polar(1.0, -delta * dt);
    let mut phase = Complex64::new(1.0, 0.0);
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..=n {
        let w = if j == 0 || j == n { 0.5 } else { 1.0 };
        acc += phase * (w * trajectory[n - j]);
        // Renormalize now and then so the rotating phasor keeps unit length.
        phase = if j % 256 == 255 { Complex64::from_polar(1.0, -delta * dt * (j + 1) as f64) } else { phase * step };
    }
    acc * dt
}

pub fn evolve_psi0(trajectory: &[f64], dt: f64, nodes: &NodeSet, omega: f64, t_meas: f64) -> Result<FieldSnapshot> {
    check_trajectory(trajectory, dt, t_meas)?;
    let per_shell: Vec<Complex64> = nodes
        .shell_shift
        .iter()
        .map(|shift| time_integral(trajectory, dt, omega - shift))
        .collect();
    Ok(FieldSnapshot {
        weights: nodes.weights.clone(),
        psi: nodes.eta.iter().zip(&nodes.shell).map(|(eta, &k)| eta * per_shell[k]).collect(),
    })
}

/// Everything the oracle needs beyond the process.
#[derive(Debug, Clone)]
pub struct OracleSetup {
    pub trap: TrapConfig,
    pub wire: NanowireConfig,
    pub grid: GridSize,
    /// Time step, s.
    pub dt: f64,
    /// Measurement time, s; an integer multiple of dt.
    pub t_meas: f64,
    pub omegas: Vec<f64>,
    pub seed: u64,
}

impl OracleSetup {
    pub fn steps(&self) -> Result<usize> {
        let steps = (self.t_meas / self.dt).round();
        if !(steps >= 1.0) || (steps * self.dt - self.t_meas).abs() > 1e-9 * self.t_meas {
            return Err(Error::GridMismatch(format!(
                "T = {:e} s is not an integer multiple of dt = {:e} s",
                self.t_meas, self.dt
            )));
        }
        Ok(steps as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub omega: Vec<f64>,
    pub mean: Vec<f64>,
    /// Standard error of the ensemble mean.
    pub stderr: Vec<f64>,
    pub ensemble: usize,
}

/// Ensemble mean of ∫|ψ₀|² for every detuning in the setup.
pub fn oracle_atom_count(process: &CurrentProcess, ensemble: usize, setup: &OracleSetup) -> Result<OracleResult> {
    let nodes = NodeSet::build(&setup.trap, &setup.wire, setup.grid)?;
    oracle_with_nodes(process, ensemble, setup, &nodes)
}

pub fn oracle_with_nodes(
    process: &CurrentProcess,
    ensemble: usize,
    setup: &OracleSetup,
    nodes: &NodeSet,
) -> Result<OracleResult> {
    process.validate()?;
    if ensemble == 0 {
        return Err(Error::invalid("oracle.ensemble", "need at least one trajectory"));
    }
    let steps = setup.steps()?;
    let per_member: Vec<Vec<f64>> = (0..ensemble as u64)
        .into_par_iter()
        .map(|k| {
            let traj = sample_with(process, setup.dt, steps, &mut member_rng(setup.seed, k))?;
            Ok(setup
                .omegas
                .iter()
                .map(|&o| {
                    nodes
                        .shell_shift
                        .iter()
                        .zip(&nodes.shell_strength)
                        .map(|(shift, strength)| strength * time_integral(&traj, setup.dt, o - shift).norm_sqr())
                        .sum()
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let m = setup.omegas.len();
    let n = ensemble as f64;
    let mut mean = vec![0.0; m];
    for row in &per_member {
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n);
    let mut var = vec![0.0; m];
    for row in &per_member {
        for i in 0..m {
            var[i] += (row[i] - mean[i]).powi(2);
        }
    }
    let stderr = var
        .iter()
        .map(|v| if ensemble > 1 { (v / (n - 1.0) / n).sqrt() } else { f64::NAN })
        .collect();
    Ok(OracleResult { omega: setup.omegas.clone(), mean, stderr, ensemble })
}

/// Writes `t, I` rows for debugging.
pub fn dump_trajectory(mut out: impl Write, dt: f64, trajectory: &[f64]) -> Result<()> {
    writeln!(out, "# t_s,current_A")?;
    for (j, i) in trajectory.iter().enumerate() {
        writeln!(out, "{:e},{:e}", j as f64 * dt, i)?;
    }
    Ok(())
}
