use serde::Serialize;

use super::{jackknife_moments, ks_distance, log_log_slope, mean_se, Estimate};
use crate::error::{Error, Result};

/// Test functional applied to a pairing `⟨u, ξ⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Functional {
    Identity,
    Square,
    Tanh,
}

impl Functional {
    pub const BATTERY: [Functional; 3] = [Functional::Identity, Functional::Square, Functional::Tanh];

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Functional::Identity => x,
            Functional::Square => x * x,
            Functional::Tanh => x.tanh(),
        }
    }

    pub fn first_derivative(self, x: f64) -> f64 {
        match self {
            Functional::Identity => 1.0,
            Functional::Square => 2.0 * x,
            Functional::Tanh => 1.0 - x.tanh().powi(2),
        }
    }

    pub fn second_derivative(self, x: f64) -> f64 {
        match self {
            Functional::Identity => 0.0,
            Functional::Square => 2.0,
            Functional::Tanh => {
                let t = x.tanh();
                -2.0 * t * (1.0 - t * t)
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Functional::Identity => "x",
            Functional::Square => "x^2",
            Functional::Tanh => "tanh",
        }
    }
}

/// Samples of `⟨u_t, ξ_j⟩` over an ensemble, indexed `[time][ξ][path]`.
#[derive(Clone, Debug, Serialize)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    pub samples: Vec<Vec<Vec<f64>>>,
}

/// Sample moments about the mean of one battery point.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MomentSummary {
    pub mean: Estimate,
    pub variance: Estimate,
    pub third: Estimate,
    pub fourth: Estimate,
}

impl EnsembleStats {
    pub fn new(times: Vec<f64>, samples: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if samples.len() != times.len() || samples.is_empty() {
            return Err(Error::Battery(format!("{} times but {} sample blocks", times.len(), samples.len())));
        }
        let n_xi = samples[0].len();
        let n_paths = samples[0].first().map_or(0, |v| v.len());
        if n_xi == 0 || n_paths < 2 {
            return Err(Error::Battery("need at least one ξ and two paths".into()));
        }
        for block in &samples {
            if block.len() != n_xi || block.iter().any(|v| v.len() != n_paths) {
                return Err(Error::Battery("ragged sample blocks".into()));
            }
            if block.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("ensemble pairing".into()));
            }
        }
        Ok(Self { times, samples })
    }

    pub fn n_xi(&self) -> usize {
        self.samples[0].len()
    }

    pub fn n_paths(&self) -> usize {
        self.samples[0][0].len()
    }

    pub fn values(&self, time: usize, xi: usize) -> &[f64] {
        &self.samples[time][xi]
    }

    pub fn moments(&self, time: usize, xi: usize) -> MomentSummary {
        let x = self.values(time, xi);
        let m = mean_se(x);
        let second = jackknife_moments(x, 2, |s, n| s[1] / n - (s[0] / n).powi(2));
        let third = jackknife_moments(x, 3, |s, n| {
            let m1 = s[0] / n;
            s[2] / n - 3.0 * m1 * s[1] / n + 2.0 * m1.powi(3)
        });
        let fourth = jackknife_moments(x, 4, |s, n| {
            let m1 = s[0] / n;
            s[3] / n - 4.0 * m1 * s[2] / n + 6.0 * m1 * m1 * s[1] / n - 3.0 * m1.powi(4)
        });
        MomentSummary { mean: m, variance: second, third, fourth }
    }

    /// Empirical CDF of one battery point evaluated at `x`.
    pub fn ecdf(&self, time: usize, xi: usize, x: f64) -> f64 {
        let v = self.values(time, xi);
        v.iter().filter(|s| **s <= x).count() as f64 / v.len() as f64
    }
}

/// Comparison at one `(time, ξ, φ)` battery entry.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct WeakPoint {
    pub time: f64,
    pub xi: usize,
    pub functional: Functional,
    pub heterogeneous: Estimate,
    pub homogenized: Estimate,
    /// `E φ_het − E φ_hom`.
    pub difference: f64,
    /// `√(se_het² + se_hom²)`.
    pub combined_se: f64,
    /// Standard error of the path-wise difference, for coupled ensembles of equal size.
    pub paired_se: Option<f64>,
    pub ks: f64,
}

/// `d_φ` for one functional: the largest battery difference and the SE at that entry.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FunctionalDistance {
    pub functional: Functional,
    pub distance: f64,
    pub se: f64,
    /// `distance / max |E φ_hom|` over the battery.
    pub relative: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct WeakErrorReport {
    pub points: Vec<WeakPoint>,
    pub distances: Vec<FunctionalDistance>,
    pub max_ks: f64,
}

impl WeakErrorReport {
    pub fn distance(&self, f: Functional) -> Option<&FunctionalDistance> {
        self.distances.iter().find(|d| d.functional == f)
    }
}

/// Compares two ensembles on a shared `(time, ξ)` battery.
pub fn weak_error(a: &EnsembleStats, b: &EnsembleStats, functionals: &[Functional]) -> Result<WeakErrorReport> {
    if a.times.len() != b.times.len() || a.n_xi() != b.n_xi() {
        return Err(Error::Battery("ensembles use different (time, ξ) batteries".into()));
    }
    if a.times.iter().zip(&b.times).any(|(s, t)| (s - t).abs() > 1e-12 * (1.0 + s.abs())) {
        return Err(Error::Battery("sample times differ".into()));
    }
    let paired = a.n_paths() == b.n_paths();
    let mut points = Vec::new();
    let mut max_ks = 0.0f64;
    for (ti, t) in a.times.iter().enumerate() {
        for xi in 0..a.n_xi() {
            let (xa, xb) = (a.values(ti, xi), b.values(ti, xi));
            let ks = ks_distance(xa, xb)?;
            max_ks = max_ks.max(ks);
            for &f in functionals {
                let fa: Vec<f64> = xa.iter().map(|v| f.apply(*v)).collect();
                let fb: Vec<f64> = xb.iter().map(|v| f.apply(*v)).collect();
                let (ea, eb) = (mean_se(&fa), mean_se(&fb));
                let paired_se = paired.then(|| {
                    let d: Vec<f64> = fa.iter().zip(&fb).map(|(p, q)| p - q).collect();
                    mean_se(&d).se
                });
                points.push(WeakPoint {
                    time: *t,
                    xi,
                    functional: f,
                    heterogeneous: ea,
                    homogenized: eb,
                    difference: ea.value - eb.value,
                    combined_se: ea.se.hypot(eb.se),
                    paired_se,
                    ks,
                });
            }
        }
    }
    let distances = functionals
        .iter()
        .map(|&f| {
            let mine: Vec<&WeakPoint> = points.iter().filter(|p| p.functional == f).collect();
            let worst = mine
                .iter()
                .copied()
                .max_by(|p, q| p.difference.abs().total_cmp(&q.difference.abs()))
                .expect("nonempty battery");
            let scale = mine.iter().map(|p| p.homogenized.value.abs()).fold(0.0, f64::max);
            let distance = worst.difference.abs();
            FunctionalDistance {
                functional: f,
                distance,
                se: worst.combined_se,
                relative: if scale > 0.0 {
                    distance / scale
                } else if distance == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                },
            }
        })
        .collect();
    Ok(WeakErrorReport { points, distances, max_ks })
}

/// One row of a weak-error study over a decreasing sequence of ε.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct StudyRow {
    pub eps: f64,
    pub functional: Functional,
    pub distance: f64,
    pub se: f64,
    pub relative: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct StudyVerdict {
    pub functional: Functional,
    /// No step increases `d_φ` by more than `k` combined SEs.
    pub nonincreasing: bool,
    /// Relative distance at the smallest ε.
    pub final_relative: f64,
    /// Least-squares slope of `ln d_φ` against `ln ε` (reported, not asserted).
    pub observed_slope: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct WeakStudy {
    pub rows: Vec<StudyRow>,
    pub verdicts: Vec<StudyVerdict>,
}

/// Assembles per-ε reports (ordered by decreasing ε) into rows and verdicts.
pub fn weak_study(eps: &[f64], reports: &[WeakErrorReport], k: f64) -> Result<WeakStudy> {
    if eps.len() != reports.len() || eps.is_empty() {
        return Err(Error::Battery("one report per ε is required".into()));
    }
    let mut rows = Vec::new();
    for (e, r) in eps.iter().zip(reports) {
        for d in &r.distances {
            rows.push(StudyRow {
                eps: *e,
                functional: d.functional,
                distance: d.distance,
                se: d.se,
                relative: d.relative,
            });
        }
    }
    let verdicts = reports[0]
        .distances
        .iter()
        .map(|d0| {
            let f = d0.functional;
            let seq: Vec<&StudyRow> = rows.iter().filter(|r| r.functional == f).collect();
            let nonincreasing = seq.windows(2).all(|w| w[1].distance <= w[0].distance + k * w[0].se.hypot(w[1].se));
            let positive: Vec<(f64, f64)> =
                seq.iter().filter(|r| r.distance > 0.0).map(|r| (r.eps, r.distance)).collect();
            let observed_slope = if positive.len() >= 2 {
                let (x, y): (Vec<f64>, Vec<f64>) = positive.into_iter().unzip();
                log_log_slope(&x, &y)
            } else {
                f64::NAN
            };
            StudyVerdict {
                functional: f,
                nonincreasing,
                final_relative: seq.last().map_or(f64::NAN, |r| r.relative),
                observed_slope,
            }
        })
        .collect();
    Ok(WeakStudy { rows, verdicts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian_stats(seed: u64, paths: usize) -> EnsembleStats {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..3)
            .map(|t| {
                (0..2)
                    .map(|j| {
                        (0..paths)
                            .map(|_| 1.0 + 0.3 * j as f64 + (1.0 + t as f64) * rng.sample::<f64, _>(StandardNormal))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        EnsembleStats::new(vec![0.5, 1.0, 1.5], samples).unwrap()
    }

    #[test]
    fn identical_ensembles_have_zero_distance() {
        let s = gaussian_stats(1, 200);
        let r = weak_error(&s, &s, &Functional::BATTERY).unwrap();
        assert!(r.distances.iter().all(|d| d.distance == 0.0));
        assert_eq!(r.max_ks, 0.0);
    }

    #[test]
    fn same_law_ensembles_sit_inside_three_se() {
        let a = gaussian_stats(2, 4000);
        let b = gaussian_stats(3, 4000);
        let r = weak_error(&a, &b, &Functional::BATTERY).unwrap();
        let outside = r.points.iter().filter(|p| p.difference.abs() > 3.0 * p.combined_se).count();
        assert!(outside <= 1, "{outside} of {}", r.points.len());
    }

    #[test]
    fn mismatched_batteries_are_rejected() {
        let a = gaussian_stats(2, 50);
        let b = EnsembleStats::new(vec![0.5], vec![vec![vec![0.0, 1.0]]]).unwrap();
        assert!(weak_error(&a, &b, &[Functional::Identity]).is_err());
        assert!(EnsembleStats::new(vec![0.0], vec![vec![vec![0.0, 1.0], vec![1.0]]]).is_err());
    }

    #[test]
    fn moments_of_a_known_sample() {
        let s = EnsembleStats::new(vec![0.0], vec![vec![vec![-1.0, 1.0, -1.0, 1.0]]]).unwrap();
        let m = s.moments(0, 0);
        assert!(m.mean.value.abs() < 1e-15);
        assert!((m.variance.value - 1.0).abs() < 1e-15);
        assert!(m.third.value.abs() < 1e-15);
        assert!((m.fourth.value - 1.0).abs() < 1e-15);
        assert_eq!(s.ecdf(0, 0, 0.0), 0.5);
    }

    #[test]
    fn functional_derivatives_match_differences() {
        for f in Functional::BATTERY {
            for x in [-0.7, 0.2, 1.3] {
                let h = 1e-5;
                let d1 = (f.apply(x + h) - f.apply(x - h)) / (2.0 * h);
                let d2 = (f.apply(x + h) - 2.0 * f.apply(x) + f.apply(x - h)) / (h * h);
                assert!((d1 - f.first_derivative(x)).abs() < 1e-8);
                assert!((d2 - f.second_derivative(x)).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn study_verdicts() {
        let mk = |d: f64| WeakErrorReport {
            points: vec![],
            distances: vec![FunctionalDistance {
                functional: Functional::Identity,
                distance: d,
                se: 0.001,
                relative: d,
            }],
            max_ks: 0.0,
        };
        let s = weak_study(&[0.25, 0.125, 0.0625], &[mk(0.08), mk(0.04), mk(0.02)], 3.0).unwrap();
        assert!(s.verdicts[0].nonincreasing);
        assert!((s.verdicts[0].observed_slope - 1.0).abs() < 1e-12);
        let bad = weak_study(&[0.25, 0.125], &[mk(0.02), mk(0.08)], 3.0).unwrap();
        assert!(!bad.verdicts[0].nonincreasing);
    }

    proptest! {
        #[test]
        fn weak_error_is_symmetric(seed_a in 0u64..1000, seed_b in 0u64..1000) {
            let a = gaussian_stats(seed_a, 30);
            let b = gaussian_stats(seed_b, 30);
            let ab = weak_error(&a, &b, &Functional::BATTERY).unwrap();
            let ba = weak_error(&b, &a, &Functional::BATTERY).unwrap();
            for (x, y) in ab.distances.iter().zip(&ba.distances) {
                prop_assert!((x.distance - y.distance).abs() < 1e-14);
                prop_assert!(x.distance >= 0.0);
            }
        }
    }
}
