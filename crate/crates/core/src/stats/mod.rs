//! Ensemble statistics, weak-convergence distances and the martingale diagnostic.

use serde::Serialize;

use crate::error::{Error, Result};

mod martingale;
mod weak;

pub use martingale::*;
pub use weak::*;

/// Estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    /// `|value − target| ≤ k·se`.
    pub fn brackets(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.se
    }
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Sample mean with `s/√n`.
pub fn mean_se(x: &[f64]) -> Estimate {
    Estimate { value: mean(x), se: (variance(x) / x.len() as f64).sqrt() }
}

/// Delete-one jackknife for shift-invariant statistics that are smooth functions of the
/// centered power sums `Σ (x − x̄)^k, k = 1..=order`. Runs in `O(n)`.
pub fn jackknife_moments(x: &[f64], order: usize, stat: impl Fn(&[f64], f64) -> f64) -> Estimate {
    let n = x.len() as f64;
    let shift = mean(x);
    let sums: Vec<f64> = (1..=order).map(|k| x.iter().map(|v| (v - shift).powi(k as i32)).sum()).collect();
    let full = stat(&sums, n);
    let mut leave = vec![0.0; order];
    let mut acc = 0.0;
    let mut acc2 = 0.0;
    for v in x {
        for (k, l) in leave.iter_mut().enumerate() {
            *l = sums[k] - (v - shift).powi(k as i32 + 1);
        }
        let t = stat(&leave, n - 1.0);
        acc += t;
        acc2 += t * t;
    }
    let tbar = acc / n;
    let var = (n - 1.0) / n * (acc2 - n * tbar * tbar).max(0.0);
    Estimate { value: full, se: var.sqrt() }
}

/// Sample variance (unbiased) with jackknife standard error.
pub fn variance_jackknife(x: &[f64]) -> Estimate {
    jackknife_moments(x, 2, |s, n| (s[1] - s[0] * s[0] / n) / (n - 1.0))
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Battery("ks_distance needs two nonempty samples".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// One-sample KS statistic against a continuous CDF.
pub fn ks_one_sample(x: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::Battery("ks_one_sample needs a nonempty sample".into()));
    }
    let mut x = x.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    Ok(x.iter().enumerate().fold(0.0f64, |d, (i, v)| {
        let f = cdf(*v);
        d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs())
    }))
}

/// Asymptotic KS critical value `c(level)·√((n + m)/(n m))`; `c = 1.628` at the 1% level.
pub fn ks_critical(n: usize, m: usize, level: f64) -> f64 {
    let c = (-0.5 * (level / 2.0).ln()).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// One-sample version of [`ks_critical`].
pub fn ks_critical_one_sample(n: usize, level: f64) -> f64 {
    (-0.5 * (level / 2.0).ln()).sqrt() / (n as f64).sqrt()
}

/// Mean of `cos(θX)` with its standard error.
pub fn empirical_characteristic(x: &[f64], theta: f64) -> Estimate {
    let c: Vec<f64> = x.iter().map(|v| (theta * v).cos()).collect();
    mean_se(&c)
}

/// Median of a sample (average of the middle pair for even sizes).
pub fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normals(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn jackknife_of_mean_is_the_classical_standard_error() {
        let x = normals(1, 500);
        let jk = jackknife_moments(&x, 1, |s, n| s[0] / n);
        let cl = mean_se(&x);
        assert!((jk.se - cl.se).abs() < 1e-12);
        assert!(jk.value.abs() < 1e-12);
    }

    #[test]
    fn jackknife_variance_against_brute_force() {
        let x = normals(2, 60);
        let est = variance_jackknife(&x);
        assert!((est.value - variance(&x)).abs() < 1e-12);
        let n = x.len() as f64;
        let leave: Vec<f64> = (0..x.len())
            .map(|i| {
                let y: Vec<f64> = x.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v).collect();
                variance(&y)
            })
            .collect();
        let m = mean(&leave);
        let se = ((n - 1.0) / n * leave.iter().map(|v| (v - m).powi(2)).sum::<f64>()).sqrt();
        assert!((est.se - se).abs() < 1e-10 * se);
    }

    #[test]
    fn ks_examples() {
        let x = normals(3, 200);
        assert_eq!(ks_distance(&x, &x).unwrap(), 0.0);
        assert_eq!(ks_distance(&[0.0, 1.0], &[5.0, 6.0]).unwrap(), 1.0);
        assert!(ks_distance(&[], &x).is_err());
        assert!((ks_critical(10_000, 10_000, 0.01) - 1.6276 * (2.0f64 / 1e4).sqrt()).abs() < 1e-4);
        let mut rejections = 0;
        for seed in 0..50 {
            let d = ks_distance(&normals(100 + seed, 10_000), &normals(900 + seed, 10_000)).unwrap();
            if d > ks_critical(10_000, 10_000, 0.01) {
                rejections += 1;
            }
        }
        assert!(rejections <= 3, "{rejections}");
    }

    #[test]
    fn one_sample_ks_against_normal_cdf() {
        use statrs::distribution::{ContinuousCDF, Normal};
        let nd = Normal::new(0.0, 1.0).unwrap();
        let x = normals(4, 5000);
        assert!(ks_one_sample(&x, |v| nd.cdf(v)).unwrap() < ks_critical_one_sample(5000, 0.01));
    }

    proptest! {
        #[test]
        fn ks_is_symmetric_and_bounded(a in prop::collection::vec(-10.0f64..10.0, 1..40), b in prop::collection::vec(-10.0f64..10.0, 1..40)) {
            let d = ks_distance(&a, &b).unwrap();
            prop_assert!((d - ks_distance(&b, &a).unwrap()).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(&d));
        }
    }
}
