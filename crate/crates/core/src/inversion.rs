//! Regularized deconvolution of a scan N(Ω) back to S(ω).
//!
//! The unknown spectrum is piecewise linear on a uniform ω grid (hat basis,
//! zero outside), so `K·S` is the forward map of the corresponding tabulated
//! model. The solve minimizes
//!
//! ```text
//! ‖W(K S − N)‖² + (λ σ_max)² ‖L S‖²,   W = diag(1/σ_i),
//! ```
//!
//! with σ_max the largest singular value of `W K`, so λ is dimensionless.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{d_tilde_moments, KernelMode, ResponseKernel};
use crate::quadrature::{adaptive, AdaptiveOptions};
use crate::spectra::Regime;

/// Condition number above which an unregularized solve is refused.
pub const MAX_UNREGULARIZED_CONDITION: f64 = 1e10;

/// Largest number of unknowns handled by the dense solver.
pub const MAX_UNKNOWNS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    #[default]
    Identity,
    SecondDifference,
}

impl std::str::FromStr for Regularizer {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Regularizer::Identity),
            "second_difference" => Ok(Regularizer::SecondDifference),
            other => Err(Error::Parse(format!("unknown regularizer '{other}'"))),
        }
    }
}

fn uniform_step(grid: &[f64], name: &str) -> Result<f64> {
    if grid.len() < 2 {
        return Err(Error::GridMismatch(format!("{name} grid needs at least two points")));
    }
    let h = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
    if !(h > 0.0) {
        return Err(Error::GridMismatch(format!("{name} grid must increase")));
    }
    for (i, v) in grid.iter().enumerate() {
        if (v - (grid[0] + i as f64 * h)).abs() > 1e-6 * h {
            return Err(Error::GridMismatch(format!("{name} grid is not uniform at index {i}")));
        }
    }
    Ok(h)
}

/// Uniform grid of `points` values from `lo` to `hi`.
pub fn uniform_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1).max(1) as f64)
        .collect()
}

/// K[i][j] = contribution of the hat at ω_j to N(Ω_i).
pub fn build_kernel_matrix(
    omega_grid: &[f64],
    big_omega_grid: &[f64],
    kernel: &ResponseKernel,
    t_meas: f64,
    regime: Regime,
) -> Result<DMatrix<f64>> {
    let h = uniform_step(omega_grid, "omega")?;
    uniform_step(big_omega_grid, "Omega").or_else(|e| if big_omega_grid.len() == 1 { Ok(0.0) } else { Err(e) })?;
    if omega_grid.len() > MAX_UNKNOWNS {
        return Err(Error::invalid("inversion.omega", format!("at most {MAX_UNKNOWNS} unknowns")));
    }
    if !(t_meas > 0.0) {
        return Err(Error::invalid("T", "measurement time must be positive"));
    }
    let bw = kernel.bandwidth();
    let (lo, hi) = kernel.support();
    let need_lo = big_omega_grid[0] - hi;
    let need_hi = big_omega_grid[big_omega_grid.len() - 1] - lo;
    let (first, last) = (omega_grid[0], omega_grid[omega_grid.len() - 1]);
    if first > need_lo + 1e-9 * bw || last < need_hi - 1e-9 * bw {
        return Err(Error::GridMismatch(format!(
            "omega grid [{first:e}, {last:e}] rad/s must cover [{need_lo:e}, {need_hi:e}] rad/s"
        )));
    }
    let n = omega_grid.len();
    let rows: Vec<Vec<f64>> = big_omega_grid
        .par_iter()
        .map(|&big| {
            (0..n)
                .map(|j| match regime {
                    Regime::LongTime => hat_long_time(kernel, omega_grid, h, j, big).map(|v| t_meas * v),
                    Regime::Full => {
                        let end = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
                        kernel
                            .resolution(t_meas, big - omega_grid[j])
                            .map(|r| t_meas / (2.0 * PI) * end * h * r)
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(big_omega_grid.len(), n, |i, j| rows[i][j]))
}

/// n_det ∫₀¹ q(w) φ_j(Ω − o·w·μ/ħ) dw for the hat φ_j.
fn hat_long_time(kernel: &ResponseKernel, grid: &[f64], h: f64, j: usize, big: f64) -> Result<f64> {
    if kernel.is_empty() {
        return Ok(0.0);
    }
    let bw = kernel.bandwidth();
    let orient = if kernel.is_mirrored() { -1.0 } else { 1.0 };
    let to_w = |omega: f64| orient * (big - omega) / bw;
    let centre = grid[j];
    let mut total = 0.0;
    // Rising and falling halves of the hat; φ = 1 − |ω − ω_j|/h.
    for (a, b, sign) in [(centre - h, centre, 1.0), (centre, centre + h, -1.0)] {
        if (sign > 0.0 && j == 0) || (sign < 0.0 && j == grid.len() - 1) {
            continue;
        }
        let (wa, wb) = {
            let (x, y) = (to_w(a), to_w(b));
            (x.min(y).max(0.0), x.max(y).min(1.0))
        };
        if wb <= wa {
            continue;
        }
        // φ = 1 + sign·(ω − ω_j)/h as a linear function of w, with ω = Ω − o·w·μ/ħ.
        let alpha = 1.0 + sign * (big - centre) / h;
        let beta = -sign * orient * bw / h;
        let piece = if kernel.mode == KernelMode::Approx1D {
            let (f0a, f1a) = d_tilde_moments(wa);
            let (f0b, f1b) = d_tilde_moments(wb);
            alpha * (f0b - f0a) + beta * (f1b - f1a)
        } else {
            let opts = AdaptiveOptions::rel(1e-10).with_abs(1e-14);
            adaptive(wa, wb, opts, |w: f64| kernel.level_density(orient * w) * (alpha + beta * w))?.value
        };
        total += piece;
    }
    Ok(kernel.n_det * total)
}

#[derive(Debug, Clone)]
pub struct InverseProblem {
    pub omega: Vec<f64>,
    pub big_omega: Vec<f64>,
    pub matrix: DMatrix<f64>,
    pub data: Vec<f64>,
    /// One standard error per data point; must be positive.
    pub stderr: Vec<f64>,
    pub lambda: f64,
    pub regularizer: Regularizer,
    pub non_negative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub lambda: f64,
    /// ‖W(K S − N)‖.
    pub residual_norm: f64,
    /// ‖L S‖.
    pub solution_norm: f64,
    /// σ_max/σ_min of W K; infinite with fewer data than unknowns.
    pub condition: f64,
    /// Discrepancy target ‖W(K S − N)‖² = n_Ω.
    pub chi2_target: f64,
    pub discrepancy_met: bool,
    pub active_set_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub omega: Vec<f64>,
    pub spectrum: Vec<f64>,
    pub diagnostics: Diagnostics,
}

struct Prepared {
    wk: DMatrix<f64>,
    wn: DVector<f64>,
    lt_l: DMatrix<f64>,
    sigma_max: f64,
    condition: f64,
}

fn regularizer_matrix(kind: Regularizer, n: usize) -> DMatrix<f64> {
    match kind {
        Regularizer::Identity => DMatrix::identity(n, n),
        Regularizer::SecondDifference => {
            let rows = n.saturating_sub(2).max(1);
            let mut l = DMatrix::zeros(rows, n);
            for i in 0..n.saturating_sub(2) {
                l[(i, i)] = 1.0;
                l[(i, i + 1)] = -2.0;
                l[(i, i + 2)] = 1.0;
            }
            l
        }
    }
}

impl InverseProblem {
    fn prepare(&self) -> Result<Prepared> {
        let (m, n) = self.matrix.shape();
        if self.data.len() != m || self.stderr.len() != m || self.big_omega.len() != m || self.omega.len() != n {
            return Err(Error::GridMismatch(format!(
                "matrix is {m}x{n} but data has {} points, stderr {}, Omega grid {}, omega grid {}",
                self.data.len(),
                self.stderr.len(),
                self.big_omega.len(),
                self.omega.len()
            )));
        }
        if self.stderr.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid("inversion.stderr", "standard errors must be positive"));
        }
        let mut wk = self.matrix.clone();
        let mut wn = DVector::from_vec(self.data.clone());
        for i in 0..m {
            let w = 1.0 / self.stderr[i];
            wk.row_mut(i).scale_mut(w);
            wn[i] *= w;
        }
        let sv = wk.clone().singular_values();
        let sigma_max = sv.max();
        let sigma_min = if m >= n { sv.min() } else { 0.0 };
        let condition = if sigma_min > 0.0 { sigma_max / sigma_min } else { f64::INFINITY };
        let l = regularizer_matrix(self.regularizer, n);
        Ok(Prepared { lt_l: l.transpose() * &l, wk, wn, sigma_max, condition })
    }

    pub fn deconvolve(&self) -> Result<Reconstruction> {
        let prep = self.prepare()?;
        self.solve_prepared(&prep, self.lambda)
    }

    fn solve_prepared(&self, prep: &Prepared, lambda: f64) -> Result<Reconstruction> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::invalid("inversion.lambda", "must be finite and non-negative"));
        }
        if lambda == 0.0 && prep.condition > MAX_UNREGULARIZED_CONDITION {
            return Err(Error::invalid(
                "inversion.lambda",
                format!("lambda = 0 with condition number {:e}; regularization is required", prep.condition),
            ));
        }
        if prep.sigma_max == 0.0 {
            return Err(Error::Numerical("kernel matrix is zero".into()));
        }
        let reg = (lambda * prep.sigma_max).powi(2);
        let a = prep.wk.tr_mul(&prep.wk) + &prep.lt_l * reg;
        let b = prep.wk.tr_mul(&prep.wn);
        let (x, iterations) = if self.non_negative {
            nnls_normal(&a, &b)?
        } else {
            (solve_spd(&a, &b)?, 0)
        };
        let residual = (&prep.wk * &x - &prep.wn).norm();
        let l = regularizer_matrix(self.regularizer, x.len());
        let solution_norm = (&l * &x).norm();
        let chi2_target = self.data.len() as f64;
        Ok(Reconstruction {
            omega: self.omega.clone(),
            spectrum: x.iter().copied().collect(),
            diagnostics: Diagnostics {
                lambda,
                residual_norm: residual,
                solution_norm,
                condition: prep.condition,
                chi2_target,
                discrepancy_met: (residual * residual - chi2_target).abs() <= 0.05 * chi2_target,
                active_set_iterations: iterations,
            },
        })
    }

    /// λ with ‖W(K S − N)‖² = n_Ω, found by bisection in log λ.
    pub fn discrepancy_lambda(&self) -> Result<Reconstruction> {
        let prep = self.prepare()?;
        let target = self.data.len() as f64;
        let chi2 = |lam: f64| -> Result<(f64, Reconstruction)> {
            let r = self.solve_prepared(&prep, lam)?;
            Ok((r.diagnostics.residual_norm.powi(2), r))
        };
        let (mut lo, mut hi) = (-9.0f64, 1.0f64);
        let (c_lo, r_lo) = chi2(10f64.powf(lo))?;
        if c_lo >= target {
            return Ok(r_lo);
        }
        let (c_hi, r_hi) = chi2(10f64.powf(hi))?;
        if c_hi <= target {
            return Ok(r_hi);
        }
        let mut best = r_lo;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let (c, r) = chi2(10f64.powf(mid))?;
            if c > target {
                hi = mid;
            } else {
                lo = mid;
            }
            best = r;
            if (c - target).abs() <= 1e-3 * target || hi - lo < 1e-6 {
                break;
            }
        }
        Ok(best)
    }

    /// L-curve table; residuals must rise and solution norms fall along λ.
    pub fn lambda_scan(&self, lambdas: &[f64]) -> Result<Vec<Diagnostics>> {
        if lambdas.is_empty() || lambdas.iter().any(|l| !(*l > 0.0)) || lambdas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("inversion.lambdas", "must be positive and strictly increasing"));
        }
        let prep = self.prepare()?;
        let rows: Vec<Diagnostics> = lambdas
            .iter()
            .map(|&l| self.solve_prepared(&prep, l).map(|r| r.diagnostics))
            .collect::<Result<_>>()?;
        for w in rows.windows(2) {
            let tol_r = 1e-8 * w[0].residual_norm.max(1e-300);
            let tol_s = 1e-8 * w[0].solution_norm.max(1e-300);
            if w[1].residual_norm < w[0].residual_norm - tol_r || w[1].solution_norm > w[0].solution_norm + tol_s {
                return Err(Error::Numerical(format!(
                    "L-curve not monotone between lambda = {:e} and {:e}",
                    w[0].lambda, w[1].lambda
                )));
            }
        }
        Ok(rows)
    }
}

fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        let x = ch.solve(b);
        if x.iter().all(|v| v.is_finite()) {
            return Ok(x);
        }
    }
    let svd = a.clone().svd(true, true);
    let eps = svd.singular_values.max() * 1e-14;
    svd.solve(b, eps).map_err(|e| Error::Numerical(format!("SVD solve failed: {e}")))
}

/// Active-set NNLS on the normal equations `A x = b` (Bro and De Jong).
fn nnls_normal(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, usize)> {
    let n = b.len();
    let cap = 10 * n + 50;
    let tol = 1e-12 * b.amax().max(f64::MIN_POSITIVE) * (n as f64);
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let mut iterations = 0;
    let solve_passive = |passive: &[bool]| -> Result<DVector<f64>> {
        let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
        let sub = DMatrix::from_fn(idx.len(), idx.len(), |r, c| a[(idx[r], idx[c])]);
        let rhs = DVector::from_fn(idx.len(), |r, _| b[idx[r]]);
        let z = solve_spd(&sub, &rhs)?;
        let mut s = DVector::zeros(n);
        for (k, &i) in idx.iter().enumerate() {
            s[i] = z[k];
        }
        Ok(s)
    };
    loop {
        let w = b - a * &x;
        let candidate = (0..n)
            .filter(|&i| !passive[i])
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate else { break };
        if w[j] <= tol {
            break;
        }
        passive[j] = true;
        loop {
            iterations += 1;
            if iterations > cap {
                return Err(Error::SolverNotConverged { iterations, change: w[j] });
            }
            let s = solve_passive(&passive)?;
            if (0..n).filter(|&i| passive[i]).all(|i| s[i] > 0.0) {
                x = s;
                break;
            }
            let mut alpha = f64::INFINITY;
            for i in (0..n).filter(|&i| passive[i] && s[i] <= 0.0) {
                alpha = alpha.min(x[i] / (x[i] - s[i]));
            }
            x += (&s - &x) * alpha;
            for i in 0..n {
                if passive[i] && x[i] <= 1e-300 {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
        }
    }
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok((x, iterations))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nnls_matches_unconstrained_when_interior() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        let (x, _) = nnls_normal(&a, &b).unwrap();
        let y = solve_spd(&a, &b).unwrap();
        assert!((x - y).norm() < 1e-14);
    }

    #[test]
    fn nnls_clamps_negative_component() {
        // Unconstrained optimum (−1, 2); constrained optimum sets x₀ = 0.
        let a = DMatrix::identity(2, 2);
        let b = DVector::from_vec(vec![-1.0, 2.0]);
        let (x, _) = nnls_normal(&a, &b).unwrap();
        assert_eq!(x[0], 0.0);
        assert!((x[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn second_difference_annihilates_lines() {
        let l = regularizer_matrix(Regularizer::SecondDifference, 6);
        let x = DVector::from_fn(6, |i, _| 3.0 - 0.5 * i as f64);
        assert!((l * x).norm() < 1e-14);
    }

    #[test]
    fn non_uniform_grid_rejected() {
        assert!(uniform_step(&[0.0, 1.0, 3.0], "omega").is_err());
        assert!((uniform_step(&uniform_grid(-2.0, 2.0, 41), "omega").unwrap() - 0.1).abs() < 1e-15);
    }
}
