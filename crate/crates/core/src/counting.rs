//! Detector records from mean atom numbers.
//!
//! Every shot at scan point i is an independent Poisson draw with mean
//! `efficiency · N̄(Ω_i)`. Point i uses `ChaCha8Rng::seed_from_u64(seed)` on
//! stream i. Poisson statistics are a modelling choice, not a physical claim.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra::{Counts, ScanResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub efficiency: f64,
    pub shots: usize,
    pub seed: u64,
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::invalid("detection.efficiency", format!("must lie in [0, 1], got {}", self.efficiency)));
        }
        if self.shots == 0 {
            return Err(Error::invalid("detection.shots", "need at least one shot"));
        }
        Ok(())
    }
}

fn draw(mean: f64, shots: usize, rng: &mut ChaCha8Rng) -> Result<Vec<u64>> {
    if mean == 0.0 {
        return Ok(vec![0; shots]);
    }
    let law = Poisson::new(mean).map_err(|e| Error::Numerical(format!("Poisson mean {mean:e}: {e}")))?;
    Ok((0..shots).map(|_| law.sample(rng) as u64).collect())
}

pub fn simulate_counts(scan: &ScanResult, det: &DetectionConfig) -> Result<ScanResult> {
    det.validate()?;
    let shots = scan
        .mean_atoms
        .par_iter()
        .enumerate()
        .map(|(i, &n)| {
            if !(n.is_finite() && n >= 0.0) {
                return Err(Error::invalid("mean_atoms", format!("entry {i} is {n:e}")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(det.seed);
            rng.set_stream(i as u64);
            draw(det.efficiency * n, det.shots, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = scan.clone();
    out.counts = Some(Counts { efficiency: det.efficiency, seed: det.seed, shots });
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean_atoms: Vec<f64>,
    /// `None` when a point has a single shot.
    pub stderr: Vec<Option<f64>>,
}

/// Sample mean over shots divided by the efficiency.
pub fn estimate_means(counts: &Counts) -> Result<MeanEstimate> {
    if !(counts.efficiency > 0.0) {
        return Err(Error::invalid("detection.efficiency", "cannot undo a zero detection efficiency"));
    }
    let mut mean_atoms = Vec::with_capacity(counts.shots.len());
    let mut stderr = Vec::with_capacity(counts.shots.len());
    for (i, shots) in counts.shots.iter().enumerate() {
        if shots.is_empty() {
            return Err(Error::invalid("counts", format!("point {i} has no shots")));
        }
        let n = shots.len() as f64;
        let m = shots.iter().map(|&c| c as f64).sum::<f64>() / n;
        mean_atoms.push(m / counts.efficiency);
        stderr.push((shots.len() > 1).then(|| {
            let var = shots.iter().map(|&c| (c as f64 - m).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt() / counts.efficiency
        }));
    }
    Ok(MeanEstimate { mean_atoms, stderr })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::Regime;

    fn scan(means: Vec<f64>) -> ScanResult {
        ScanResult {
            omega: (0..means.len()).map(|i| i as f64).collect(),
            b_offs: vec![0.0; means.len()],
            mean_atoms: means,
            t_meas: 1.0,
            regime: Regime::LongTime,
            provenance: String::new(),
            warnings: vec![],
            counts: None,
        }
    }

    #[test]
    fn zero_efficiency_gives_zero_counts() {
        let det = DetectionConfig { efficiency: 0.0, shots: 10, seed: 3 };
        let out = simulate_counts(&scan(vec![5.0, 50.0]), &det).unwrap();
        let c = out.counts.unwrap();
        assert!(c.shots.iter().flatten().all(|&v| v == 0));
        assert!(estimate_means(&c).is_err());
    }

    #[test]
    fn deterministic_and_independent_across_points() {
        let det = DetectionConfig { efficiency: 0.7, shots: 50, seed: 9 };
        let a = simulate_counts(&scan(vec![20.0, 20.0]), &det).unwrap().counts.unwrap();
        let b = simulate_counts(&scan(vec![20.0, 20.0]), &det).unwrap().counts.unwrap();
        assert_eq!(a, b);
        assert_ne!(a.shots[0], a.shots[1]);
    }

    #[test]
    fn single_shot_has_no_stderr() {
        let det = DetectionConfig { efficiency: 1.0, shots: 1, seed: 0 };
        let c = simulate_counts(&scan(vec![3.0]), &det).unwrap().counts.unwrap();
        assert_eq!(estimate_means(&c).unwrap().stderr, vec![None]);
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(DetectionConfig { efficiency: 1.5, shots: 1, seed: 0 }.validate().is_err());
        assert!(DetectionConfig { efficiency: 0.5, shots: 0, seed: 0 }.validate().is_err());
    }
}
