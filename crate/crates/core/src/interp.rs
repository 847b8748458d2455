//! Interpolation on tabulated data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_knots(x: &[f64], y: &[f64], min: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::invalid("table", format!("{} abscissae but {} values", x.len(), y.len())));
    }
    if x.len() < min {
        return Err(Error::invalid("table", format!("need at least {min} points")));
    }
    if x.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("table", "abscissae must be strictly increasing"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("table", "non-finite entry"));
    }
    Ok(())
}

/// Index of the interval containing `t`, clamped to the table.
fn bracket(x: &[f64], t: f64) -> usize {
    match x.binary_search_by(|v| v.total_cmp(&t)) {
        Ok(i) => i.min(x.len() - 2),
        Err(i) => i.saturating_sub(1).min(x.len() - 2),
    }
}

/// Piecewise-linear interpolant, zero outside the tabulated range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearTable {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl LinearTable {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        check_knots(&x, &y, 2)?;
        Ok(Self { x, y })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let (lo, hi) = (self.x[0], self.x[self.x.len() - 1]);
        if !(t >= lo && t <= hi) {
            return 0.0;
        }
        let i = bracket(&self.x, t);
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let u = (t - x0) / (x1 - x0);
        self.y[i] + u * (self.y[i + 1] - self.y[i])
    }

    pub fn range(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }
}

/// Natural cubic spline.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        check_knots(&x, &y, 3)?;
        let n = x.len();
        // Tridiagonal system for the second derivatives, natural end conditions.
        let mut m = vec![0.0; n];
        let mut c_prime = vec![0.0; n];
        let mut d_prime = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            let a = h0;
            let b = 2.0 * (h0 + h1);
            let c = h1;
            let d = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
            let denom = b - a * c_prime[i - 1];
            c_prime[i] = c / denom;
            d_prime[i] = (d - a * d_prime[i - 1]) / denom;
        }
        for i in (1..n - 1).rev() {
            m[i] = d_prime[i] - c_prime[i] * m[i + 1];
        }
        Ok(Self { x, y, m })
    }

    /// Evaluates the spline; outside the knots the end cubic is extrapolated.
    pub fn eval(&self, t: f64) -> f64 {
        let i = bracket(&self.x, t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_table_interpolates_and_vanishes_outside() {
        let t = LinearTable::new(vec![0.0, 1.0, 3.0], vec![1.0, 3.0, -1.0]).unwrap();
        assert_eq!(t.eval(0.5), 2.0);
        assert_eq!(t.eval(2.0), 1.0);
        assert_eq!(t.eval(3.0), -1.0);
        assert_eq!(t.eval(-0.1), 0.0);
        assert_eq!(t.eval(3.1), 0.0);
        assert!(LinearTable::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn spline_reproduces_smooth_function() {
        // sin(3x) has zero curvature at x = 0, matching the natural end there.
        let x: Vec<f64> = (0..=40).map(|k| (k as f64 / 40.0).powf(0.7)).collect();
        let y: Vec<f64> = x.iter().map(|v| (3.0 * v).sin()).collect();
        let s = CubicSpline::new(x, y).unwrap();
        for k in 0..200 {
            let t = k as f64 / 199.0;
            assert!((s.eval(t) - (3.0 * t).sin()).abs() < 2e-3, "t = {t}");
        }
    }
}
