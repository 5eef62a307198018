//! Built-in coefficient sets and seeded random admissible sets.

use rand::distr::uniform::SampleRange;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cell::{center_drift_i, center_drift_ii, solve_invariant_density_ii};
use crate::coefficients::{CoefficientSetI, CoefficientSetII, FourierProfile};
use crate::error::{Error, Result};
use crate::kernel::IntegrableKernel;
use crate::spectral::{PeriodicField, TorusGrid};

pub const FIXTURES_I: [&str; 2] = ["const-1", "varcoef-1"];
pub const FIXTURES_II: [&str; 1] = ["stable-1"];

fn profile(mean: f64, cos: &[f64], sin: &[f64]) -> FourierProfile {
    FourierProfile { mean, cos: cos.to_vec(), sin: sin.to_vec() }
}

/// `a ≡ 1, b ≡ 0, λ ≡ 2, σ ≡ 1`, box kernel `½·1_{|z|≤1}`.
pub fn const_1(n: usize) -> Result<CoefficientSetI> {
    let g = TorusGrid::new(n)?;
    CoefficientSetI::new(
        PeriodicField::constant(g, 1.0),
        PeriodicField::constant(g, 0.0),
        PeriodicField::constant(g, 2.0),
        PeriodicField::constant(g, 1.0),
        IntegrableKernel::uniform(1.0, 1.0)?,
    )
}

/// Smooth variable coefficients with a Gaussian kernel; the drift is centered.
pub fn varcoef_1(n: usize) -> Result<CoefficientSetI> {
    let g = TorusGrid::new(n)?;
    let set = CoefficientSetI::new(
        profile(1.0, &[], &[0.5]).sample(g),
        profile(0.0, &[0.4], &[0.0, 0.2]).sample(g),
        profile(1.0, &[0.3], &[]).sample(g),
        profile(0.6, &[], &[0.3]).sample(g),
        IntegrableKernel::gaussian(0.3, 1.0)?,
    )?;
    center_drift_i(&set)
}

/// `δ = 1 + 0.4 cos 2πy`, `α = 1.5`, centered drift.
pub fn stable_1(n: usize) -> Result<CoefficientSetII> {
    let g = TorusGrid::new(n)?;
    let set = CoefficientSetII::new(
        profile(1.0, &[0.4], &[]).sample(g),
        profile(0.0, &[], &[0.5]).sample(g),
        profile(0.0, &[0.1], &[]).sample(g),
        PeriodicField::constant(g, 0.0),
        profile(0.2, &[], &[0.1]).sample(g),
        profile(0.5, &[0.2], &[]).sample(g),
        1.5,
    )?;
    center_drift_ii(&set)
}

pub fn fixture_i(name: &str, n: usize) -> Result<CoefficientSetI> {
    match name {
        "const-1" => const_1(n),
        "varcoef-1" => varcoef_1(n),
        _ => Err(Error::Config(format!("unknown Part I fixture `{name}` (known: {})", FIXTURES_I.join(", ")))),
    }
}

pub fn fixture_ii(name: &str, n: usize) -> Result<CoefficientSetII> {
    match name {
        "stable-1" => stable_1(n),
        _ => Err(Error::Config(format!("unknown Part II fixture `{name}` (known: {})", FIXTURES_II.join(", ")))),
    }
}

/// Trigonometric profile of degree ≤ 3 whose oscillation is at most `amplitude` in sup norm.
fn random_profile(rng: &mut impl Rng, mean: impl SampleRange<f64>, amplitude: f64) -> FourierProfile {
    let mean = rng.random_range(mean);
    let raw: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
    let total: f64 = raw.iter().map(|v| v.abs()).sum();
    let s = amplitude / total;
    FourierProfile {
        mean,
        cos: raw[..3].iter().map(|v| v * s).collect(),
        sin: raw[3..].iter().map(|v| v * s).collect(),
    }
}

/// Random admissible Part I set: positive `a, λ, σ`, one of the three kernel shapes, and a
/// drift centered against the resulting invariant density.
pub fn random_admissible_i(n: usize, seed: u64) -> Result<CoefficientSetI> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = TorusGrid::new(n)?;
    let a = random_profile(&mut rng, 0.8..1.5, 0.45);
    let b = random_profile(&mut rng, 0.0..=0.0, 0.6);
    let lambda = random_profile(&mut rng, 0.8..2.0, 0.5);
    let sigma = random_profile(&mut rng, 0.5..1.0, 0.3);
    let mass = rng.random_range(0.5..2.0);
    let kernel = match rng.random_range(0..3) {
        0 => IntegrableKernel::gaussian(rng.random_range(0.1..0.4), mass)?,
        1 => IntegrableKernel::laplace(rng.random_range(0.05..0.2), mass)?,
        _ => IntegrableKernel::uniform(rng.random_range(0.2..0.8), mass)?,
    };
    let set = CoefficientSetI::new(a.sample(g), b.sample(g), lambda.sample(g), sigma.sample(g), kernel)?;
    center_drift_i(&set)
}

/// Random admissible Part II set; the source `e` is centered against `m₁` as well.
pub fn random_admissible_ii(n: usize, seed: u64) -> Result<CoefficientSetII> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = TorusGrid::new(n)?;
    let delta = random_profile(&mut rng, 0.8..1.5, 0.4);
    let d = random_profile(&mut rng, 0.0..=0.0, 0.5);
    let gp = random_profile(&mut rng, 0.0..=0.0, 0.2);
    let e = random_profile(&mut rng, 0.0..=0.0, 0.3);
    let f = random_profile(&mut rng, 0.1..0.3, 0.1);
    let sigma = random_profile(&mut rng, 0.4..0.8, 0.2);
    let alpha = rng.random_range(0.6..1.9);
    let set = CoefficientSetII::new(
        delta.sample(g),
        d.sample(g),
        gp.sample(g),
        e.sample(g),
        f.sample(g),
        sigma.sample(g),
        alpha,
    )?;
    let set = center_drift_ii(&set)?;
    let m1 = solve_invariant_density_ii(&set)?;
    let shift = set.e.inner(&m1);
    Ok(CoefficientSetII { e: set.e.offset(-shift), ..set })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::{check_centering_i, solve_cell_ii, solve_invariant_density_i};
    use crate::coefficients::{validate_i, validate_ii};

    #[test]
    fn fixtures_validate_and_are_centered() {
        for name in FIXTURES_I {
            let s = fixture_i(name, 64).unwrap();
            assert!(validate_i(&s).passed(), "{name}: {:?}", validate_i(&s).failures().collect::<Vec<_>>());
            let m = solve_invariant_density_i(&s).unwrap();
            assert!(check_centering_i(&s, &m).abs() <= 1e-10, "{name}");
        }
        let s = stable_1(64).unwrap();
        assert!(validate_ii(&s).passed());
        assert!(solve_cell_ii(&s).unwrap().centering.abs() <= 1e-10);
        assert!(fixture_i("nope", 32).is_err());
    }

    #[test]
    fn random_sets_are_reproducible_and_admissible() {
        let a = random_admissible_i(32, 11).unwrap();
        let b = random_admissible_i(32, 11).unwrap();
        assert_eq!(a.a, b.a);
        assert!(validate_i(&a).passed());
        let s = random_admissible_ii(32, 5).unwrap();
        let sol = solve_cell_ii(&s).unwrap();
        assert!(sol.diagnostics.warnings.is_empty());
    }
}
