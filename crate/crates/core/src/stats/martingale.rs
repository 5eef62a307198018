use serde::Serialize;

use super::{mean_se, Functional};
use crate::error::{Error, Result};

/// Path-wise pairings of a homogenized field with a test function on a uniform time grid.
#[derive(Clone, Debug)]
pub struct MartingaleInput {
    pub times: Vec<f64>,
    /// `⟨X_t, ξ⟩`, indexed `[path][time]`.
    pub pairing: Vec<Vec<f64>>,
    /// `⟨X_t, (T⁰)*ξ⟩`, same layout.
    pub drift_pairing: Vec<Vec<f64>>,
    /// Noise coefficient of the homogenized multiplication operator.
    pub sigma_bar: f64,
}

impl MartingaleInput {
    /// Part I drift pairing `Q⟨X, ξ″⟩` from pairings with `ξ″`.
    pub fn diffusion(times: Vec<f64>, pairing: Vec<Vec<f64>>, second: &[Vec<f64>], q: f64, sigma_bar: f64) -> Self {
        let drift_pairing = second.iter().map(|row| row.iter().map(|v| q * v).collect()).collect();
        Self { times, pairing, drift_pairing, sigma_bar }
    }

    fn check(&self) -> Result<()> {
        let nt = self.times.len();
        if nt < 2 || self.pairing.len() < 2 || self.pairing.len() != self.drift_pairing.len() {
            return Err(Error::Battery("martingale input needs two paths and two times".into()));
        }
        if self.pairing.iter().chain(&self.drift_pairing).any(|r| r.len() != nt) {
            return Err(Error::Battery("pairing rows do not match the time grid".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MartingaleEntry {
    pub s: f64,
    pub t: f64,
    pub mean: f64,
    pub se: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MartingaleReport {
    pub functional: Functional,
    pub entries: Vec<MartingaleEntry>,
    /// `max |mean|/se` over the grid.
    pub max_z: f64,
    pub max_abs: f64,
}

impl MartingaleReport {
    pub fn within(&self, k: f64) -> bool {
        self.entries.iter().all(|e| e.mean.abs() <= k * e.se || e.mean == 0.0)
    }
}

/// `H(t) = φ(⟨X_t,ξ⟩) − φ(⟨X_0,ξ⟩) − ∫_0^t [φ′⟨X,(T⁰)*ξ⟩ + ½φ″σ̄²⟨X,ξ⟩²] ds` along each
/// path (trapezoid rule in time), then `E[H(t) − H(s)]` over all pairs `s < t` among
/// `grid_points` equally spaced indices of the time grid.
pub fn martingale_residual(input: &MartingaleInput, phi: Functional, grid_points: usize) -> Result<MartingaleReport> {
    input.check()?;
    let nt = input.times.len();
    let s2 = input.sigma_bar * input.sigma_bar;
    let h: Vec<Vec<f64>> = input
        .pairing
        .iter()
        .zip(&input.drift_pairing)
        .map(|(p, d)| {
            let gen =
                |k: usize| phi.first_derivative(p[k]) * d[k] + 0.5 * phi.second_derivative(p[k]) * s2 * p[k] * p[k];
            let mut out = Vec::with_capacity(nt);
            let mut integral = 0.0;
            out.push(0.0);
            for k in 1..nt {
                integral += 0.5 * (input.times[k] - input.times[k - 1]) * (gen(k - 1) + gen(k));
                out.push(phi.apply(p[k]) - phi.apply(p[0]) - integral);
            }
            out
        })
        .collect();
    let g = grid_points.clamp(2, nt);
    let idx: Vec<usize> = (0..g).map(|j| j * (nt - 1) / (g - 1)).collect();
    let mut entries = Vec::new();
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            let inc: Vec<f64> = h.iter().map(|row| row[j] - row[i]).collect();
            let e = mean_se(&inc);
            entries.push(MartingaleEntry { s: input.times[i], t: input.times[j], mean: e.value, se: e.se });
        }
    }
    let max_z = entries.iter().map(|e| if e.se > 0.0 { e.mean.abs() / e.se } else { 0.0 }).fold(0.0, f64::max);
    let max_abs = entries.iter().map(|e| e.mean.abs()).fold(0.0, f64::max);
    Ok(MartingaleReport { functional: phi, entries, max_z, max_abs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Geometric Brownian motion `dP = rP dt + σP dW`, the law of a pairing with an
    /// eigenfunction `(T⁰)*ξ = rξ`.
    fn gbm(r: f64, sigma: f64, paths: usize, steps: usize, seed: u64) -> (Vec<f64>, Vec<Vec<f64>>) {
        let dt = 1.0 / steps as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let times = (0..=steps).map(|k| k as f64 * dt).collect();
        let rows = (0..paths)
            .map(|_| {
                let mut p = 1.0;
                let mut row = vec![p];
                for _ in 0..steps {
                    let dw: f64 = dt.sqrt() * rng.sample::<f64, _>(StandardNormal);
                    p *= ((r - 0.5 * sigma * sigma) * dt + sigma * dw).exp();
                    row.push(p);
                }
                row
            })
            .collect();
        (times, rows)
    }

    #[test]
    fn exact_martingale_passes_and_wrong_drift_fails() {
        let (times, p) = gbm(-0.8, 0.5, 4000, 200, 1);
        for phi in [Functional::Identity, Functional::Square] {
            let drift: Vec<Vec<f64>> = p.iter().map(|r| r.iter().map(|v| -0.8 * v).collect()).collect();
            let good = MartingaleInput {
                times: times.clone(),
                pairing: p.clone(),
                drift_pairing: drift.clone(),
                sigma_bar: 0.5,
            };
            let rep = martingale_residual(&good, phi, 5).unwrap();
            assert_eq!(rep.entries.len(), 10);
            assert!(rep.within(3.0), "{phi:?} {}", rep.max_z);
            let wrong = MartingaleInput {
                drift_pairing: drift.iter().map(|r| r.iter().map(|v| 1.5 * v).collect()).collect(),
                ..good
            };
            assert!(!martingale_residual(&wrong, phi, 5).unwrap().within(3.0));
        }
    }

    #[test]
    fn deterministic_reduction() {
        let (times, p) = gbm(-0.8, 0.0, 3, 2000, 2);
        let second = p.iter().map(|r| r.iter().map(|v| -v).collect::<Vec<_>>()).collect::<Vec<_>>();
        let input = MartingaleInput::diffusion(times, p, &second, 0.8, 0.0);
        let rep = martingale_residual(&input, Functional::Identity, 5).unwrap();
        assert!(rep.max_abs < 1e-6, "{}", rep.max_abs);
    }

    #[test]
    fn rejects_ragged_input() {
        let input = MartingaleInput {
            times: vec![0.0, 1.0],
            pairing: vec![vec![0.0, 1.0], vec![0.0]],
            drift_pairing: vec![vec![0.0; 2]; 2],
            sigma_bar: 0.0,
        };
        assert!(martingale_residual(&input, Functional::Identity, 5).is_err());
    }
}
