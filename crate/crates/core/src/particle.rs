//! Particle simulation of the fast-oscillating jump diffusion and the α-stable signal.

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::coefficients::{CoefficientSetI, CoefficientSetII, Epsilon};
use crate::error::{Error, Result};
use crate::kernel::IntegrableKernel;
use crate::quadrature::{adaptive, AdaptiveOptions};
use crate::spectral::{check_alpha, PeriodicField};
use crate::stats::{variance_jackknife, Estimate};

/// Stable increments are clipped to this magnitude.
pub const STABLE_TRUNCATION: f64 = 1e6;

/// Default ratio `dt / ε²` for the jump diffusion.
pub const DEFAULT_DT_SAFETY: f64 = 0.1;

/// Reproducible stream `index` of the generator seeded by `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Standard symmetric α-stable draw (characteristic function `e^{−|θ|^α}`) by the
/// Chambers–Mallows–Stuck construction.
pub fn standard_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let u = PI * (rng.random::<f64>() - 0.5);
    if (alpha - 1.0).abs() < 1e-12 {
        return u.tan();
    }
    let w: f64 = Exp1.sample(rng);
    (alpha * u).sin() / u.cos().powf(1.0 / alpha) * (((1.0 - alpha) * u).cos() / w).powf((1.0 - alpha) / alpha)
}

/// Increment of the standard symmetric α-stable process over `dt`, clipped at
/// [`STABLE_TRUNCATION`]. The flag reports whether clipping happened.
pub fn sample_stable_increment<R: Rng + ?Sized>(alpha: f64, dt: f64, rng: &mut R) -> Result<(f64, bool)> {
    check_alpha(alpha)?;
    if !(dt > 0.0) {
        return Err(Error::param("dt", format!("{dt} must be positive")));
    }
    let x = dt.powf(1.0 / alpha) * standard_stable(alpha, rng);
    if x.abs() > STABLE_TRUNCATION || !x.is_finite() {
        let s = if x.is_nan() { 0.0 } else { x.signum() };
        return Ok((s * STABLE_TRUNCATION, true));
    }
    Ok((x, false))
}

/// CDF at `x` of the symmetric α-stable law at time `t`, by Fourier inversion with the
/// power-law tail used beyond 50 scale units.
pub fn stable_cdf(x: f64, alpha: f64, t: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let scale = t.powf(1.0 / alpha);
    let z = x / scale;
    if (alpha - 1.0).abs() < 1e-12 {
        return Ok(0.5 + z.atan() / PI);
    }
    if z.abs() > 50.0 {
        let tail = gamma(alpha) * (PI * alpha / 2.0).sin() / PI * z.abs().powf(-alpha);
        return Ok(if z > 0.0 { 1.0 - tail } else { tail });
    }
    let top = 40f64.powf(1.0 / alpha);
    let step = if z.abs() > 0.0 { (PI / z.abs()).min(1.0) } else { 1.0 };
    let bps: Vec<f64> = (1..).map(|k| k as f64 * step).take_while(|b| *b < top).collect();
    let opts = AdaptiveOptions { rel_tol: 1e-10, abs_tol: 1e-12, max_intervals: 50_000 };
    let (v, _) =
        adaptive(|th| if th == 0.0 { z } else { (z * th).sin() * (-th.powf(alpha)).exp() / th }, 0.0, top, &bps, opts)?;
    Ok(0.5 + v / PI)
}

/// Periodic coefficient tabulated on a fine grid for `O(1)` lookups by linear interpolation.
#[derive(Clone, Debug)]
pub struct CellTable {
    values: Vec<f64>,
}

impl CellTable {
    pub const DEFAULT_POINTS: usize = 4096;

    pub fn new(field: &PeriodicField, points: usize) -> Self {
        let ys: Vec<f64> = (0..points).map(|j| j as f64 / points as f64).collect();
        let mut values = field.evaluate(&ys);
        values.push(values[0]);
        Self { values }
    }

    pub fn at(&self, y: f64) -> f64 {
        let n = self.values.len() - 1;
        let s = (y - y.floor()) * n as f64;
        let j = (s as usize).min(n - 1);
        let w = s - j as f64;
        self.values[j] * (1.0 - w) + self.values[j + 1] * w
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b))
    }
}

/// Position and thinning clock of one jump-diffusion particle.
#[derive(Clone, Copy, Debug)]
pub struct JumpState {
    pub x: f64,
    pub t: f64,
    next_proposal: f64,
    pub jumps: u64,
}

/// Euler scheme for `dx = ε⁻¹b(x/ε)dt + √(2a(x/ε))dw` plus jumps `εZ`, `Z ~ c/a₁`, at
/// intensity `λ(x/ε)a₁/ε²`, realized by thinning at the bound `λ_max a₁/ε²`.
#[derive(Clone, Debug)]
pub struct JumpDiffusionDynamics {
    eps: f64,
    drift: CellTable,
    amplitude: CellTable,
    lambda: CellTable,
    lambda_max: f64,
    proposal_rate: f64,
    kernel: IntegrableKernel,
}

impl JumpDiffusionDynamics {
    pub fn new(set: &CoefficientSetI, eps: Epsilon) -> Self {
        let e = eps.value();
        let pts = CellTable::DEFAULT_POINTS;
        let lambda = CellTable::new(&set.lambda, pts);
        let lambda_max = lambda.max().max(set.alpha2);
        Self {
            eps: e,
            drift: CellTable::new(&set.b.scale(1.0 / e), pts),
            amplitude: CellTable::new(&set.a.map(|a| (2.0 * a.max(0.0)).sqrt()), pts),
            proposal_rate: lambda_max * set.kernel.mass / (e * e),
            lambda,
            lambda_max,
            kernel: set.kernel,
        }
    }

    pub fn proposal_rate(&self) -> f64 {
        self.proposal_rate
    }

    pub fn start<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> JumpState {
        JumpState { x, t: 0.0, next_proposal: self.next_gap(rng), jumps: 0 }
    }

    fn next_gap<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.proposal_rate > 0.0 {
            let e: f64 = Exp1.sample(rng);
            e / self.proposal_rate
        } else {
            f64::INFINITY
        }
    }

    /// Advances by `dt`; accepted jump sizes (in cell units) are passed to `on_jump`.
    pub fn step<R: Rng + ?Sized>(&self, s: &mut JumpState, dt: f64, rng: &mut R, mut on_jump: impl FnMut(f64)) {
        let y = s.x / self.eps;
        let g: f64 = rng.sample(StandardNormal);
        s.x += self.drift.at(y) * dt + self.amplitude.at(y) * dt.sqrt() * g;
        let t_new = s.t + dt;
        while s.next_proposal <= t_new {
            let accept = rng.random::<f64>() * self.lambda_max < self.lambda.at(s.x / self.eps);
            if accept {
                let z = self.kernel.sample(rng);
                s.x += self.eps * z;
                s.jumps += 1;
                on_jump(z);
            }
            s.next_proposal += self.next_gap(rng);
        }
        s.t = t_new;
    }
}

/// Drift scaling of the α-stable signal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalDrift {
    /// `ε⁻¹d(x/ε)`, as the signal equation is printed.
    Literal,
    /// `ε^{1−α}d(x/ε)`, matching the drift of the heterogeneous operator.
    GeneratorConsistent,
}

/// Euler scheme for `dx = κ_ε d(x/ε)dt + δ(x/ε)dL^α` with `κ_ε` set by [`SignalDrift`].
#[derive(Clone, Debug)]
pub struct StableDynamics {
    eps: f64,
    alpha: f64,
    drift: CellTable,
    delta: CellTable,
}

impl StableDynamics {
    pub fn new(set: &CoefficientSetII, eps: Epsilon, drift: SignalDrift) -> Self {
        let e = eps.value();
        let k = match drift {
            SignalDrift::Literal => 1.0 / e,
            SignalDrift::GeneratorConsistent => e.powf(1.0 - set.alpha),
        };
        let pts = CellTable::DEFAULT_POINTS;
        Self {
            eps: e,
            alpha: set.alpha,
            drift: CellTable::new(&set.d.scale(k), pts),
            delta: CellTable::new(&set.delta, pts),
        }
    }

    /// Returns whether the stable increment was clipped.
    pub fn step<R: Rng + ?Sized>(&self, x: &mut f64, dt: f64, rng: &mut R) -> bool {
        let y = *x / self.eps;
        let (dl, clipped) = sample_stable_increment(self.alpha, dt, rng).unwrap_or((0.0, false));
        *x += self.drift.at(y) * dt + self.delta.at(y) * dl;
        clipped
    }
}

/// Time-stepping parameters shared by the particle simulators.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ParticleConfig {
    pub t_end: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Number of equally spaced sample times in `(0, t_end]`.
    pub n_snapshots: usize,
    pub dt_safety: f64,
    pub x0: f64,
    /// Keep every accepted jump size (in cell units); used by distribution tests.
    pub record_jump_sizes: bool,
}

impl ParticleConfig {
    pub fn new(t_end: f64, dt: f64, n_paths: usize, seed: u64) -> Self {
        Self {
            t_end,
            dt,
            n_paths,
            seed,
            n_snapshots: 1,
            dt_safety: DEFAULT_DT_SAFETY,
            x0: 0.0,
            record_jump_sizes: false,
        }
    }

    fn schedule(&self) -> Result<(usize, f64, Vec<usize>)> {
        if !(self.t_end > 0.0) || self.n_paths == 0 || self.n_snapshots == 0 {
            return Err(Error::param("particle config", "t_end, n_paths and n_snapshots must be positive"));
        }
        let steps = (self.t_end / self.dt).ceil() as usize;
        let dt = self.t_end / steps as f64;
        let marks = (1..=self.n_snapshots).map(|k| (k * steps + self.n_snapshots / 2) / self.n_snapshots).collect();
        Ok((steps, dt, marks))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ParticleEnsemble {
    pub times: Vec<f64>,
    /// `positions[time][path]`
    pub positions: Vec<Vec<f64>>,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    /// Accepted jumps per path (zero for the stable signal).
    pub jumps: Vec<u64>,
    pub jump_sizes: Vec<f64>,
    /// Number of clipped stable increments.
    pub truncations: u64,
}

/// One row of the ensemble summary table.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SummaryRow {
    pub time: f64,
    pub mean: f64,
    pub var: f64,
    pub se: f64,
}

impl ParticleEnsemble {
    pub fn n_paths(&self) -> usize {
        self.positions.first().map_or(0, |p| p.len())
    }

    pub fn terminal(&self) -> &[f64] {
        self.positions.last().expect("at least one snapshot")
    }

    /// Mean, variance and the standard error of the mean per sample time.
    pub fn summary(&self) -> Vec<SummaryRow> {
        self.times
            .iter()
            .zip(&self.positions)
            .map(|(t, p)| {
                let m = crate::stats::mean_se(p);
                SummaryRow { time: *t, mean: m.value, var: crate::stats::variance(p), se: m.se }
            })
            .collect()
    }

    /// Little-endian layout: `u64 n_paths`, `u64 n_times`, `n_times` f64 times, then
    /// `n_times × n_paths` f64 positions, time-major.
    pub fn write_binary(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(&(self.n_paths() as u64).to_le_bytes())?;
        w.write_all(&(self.times.len() as u64).to_le_bytes())?;
        for t in &self.times {
            w.write_all(&t.to_le_bytes())?;
        }
        for row in &self.positions {
            for x in row {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

struct PathRecord {
    snapshots: Vec<f64>,
    jumps: u64,
    sizes: Vec<f64>,
    truncations: u64,
}

fn assemble(cfg: &ParticleConfig, dt: f64, marks: &[usize], paths: Vec<PathRecord>) -> Result<ParticleEnsemble> {
    let mut positions = vec![Vec::with_capacity(paths.len()); marks.len()];
    let mut jumps = Vec::with_capacity(paths.len());
    let mut jump_sizes = Vec::new();
    let mut truncations = 0;
    for p in paths {
        for (k, x) in p.snapshots.into_iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::NonFinite(format!("particle position at snapshot {k}")));
            }
            positions[k].push(x);
        }
        jumps.push(p.jumps);
        jump_sizes.extend(p.sizes);
        truncations += p.truncations;
    }
    Ok(ParticleEnsemble {
        times: marks.iter().map(|m| *m as f64 * dt).collect(),
        positions,
        dt,
        t_end: cfg.t_end,
        seed: cfg.seed,
        jumps,
        jump_sizes,
        truncations,
    })
}

/// Simulates the jump diffusion; requires `dt ≤ dt_safety·ε²`.
pub fn simulate_jump_diffusion_i(
    set: &CoefficientSetI,
    eps: Epsilon,
    cfg: &ParticleConfig,
) -> Result<ParticleEnsemble> {
    let limit = cfg.dt_safety * eps.value().powi(2);
    if cfg.dt > limit * (1.0 + 1e-12) {
        return Err(Error::TimeStep { dt: cfg.dt, limit });
    }
    let (steps, dt, marks) = cfg.schedule()?;
    let dynamics = JumpDiffusionDynamics::new(set, eps);
    let paths: Vec<PathRecord> = (0..cfg.n_paths)
        .into_par_iter()
        .with_min_len(16)
        .map(|p| {
            let mut rng = stream(cfg.seed, p as u64);
            let mut s = dynamics.start(cfg.x0, &mut rng);
            let mut snapshots = Vec::with_capacity(marks.len());
            let mut sizes = Vec::new();
            let mut next = 0;
            for k in 1..=steps {
                dynamics.step(&mut s, dt, &mut rng, |z| {
                    if cfg.record_jump_sizes {
                        sizes.push(z)
                    }
                });
                while next < marks.len() && marks[next] == k {
                    snapshots.push(s.x);
                    next += 1;
                }
            }
            PathRecord { snapshots, jumps: s.jumps, sizes, truncations: 0 }
        })
        .collect();
    assemble(cfg, dt, &marks, paths)
}

/// Simulates the α-stable signal; requires `dt ≤ dt_safety·ε`.
pub fn simulate_signal_ii(
    set: &CoefficientSetII,
    eps: Epsilon,
    cfg: &ParticleConfig,
    drift: SignalDrift,
) -> Result<ParticleEnsemble> {
    let limit = cfg.dt_safety * eps.value();
    if cfg.dt > limit * (1.0 + 1e-12) {
        return Err(Error::TimeStep { dt: cfg.dt, limit });
    }
    let (steps, dt, marks) = cfg.schedule()?;
    let dynamics = StableDynamics::new(set, eps, drift);
    let paths: Vec<PathRecord> = (0..cfg.n_paths)
        .into_par_iter()
        .with_min_len(16)
        .map(|p| {
            let mut rng = stream(cfg.seed, p as u64);
            let mut x = cfg.x0;
            let mut snapshots = Vec::with_capacity(marks.len());
            let mut truncations = 0;
            let mut next = 0;
            for k in 1..=steps {
                truncations += dynamics.step(&mut x, dt, &mut rng) as u64;
                while next < marks.len() && marks[next] == k {
                    snapshots.push(x);
                    next += 1;
                }
            }
            PathRecord { snapshots, jumps: 0, sizes: Vec::new(), truncations }
        })
        .collect();
    assemble(cfg, dt, &marks, paths)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct QEstimate {
    pub q_hat: Estimate,
    pub eps: f64,
    pub t_end: f64,
    pub dt: f64,
    pub n_paths: usize,
}

/// `Q̂ = Var(x_T)/(2T)` with a jackknife standard error.
pub fn estimate_q_monte_carlo(
    set: &CoefficientSetI,
    eps: Epsilon,
    t_end: f64,
    n_paths: usize,
    seed: u64,
    dt_safety: f64,
) -> Result<QEstimate> {
    let mut cfg = ParticleConfig::new(t_end, dt_safety * eps.value().powi(2), n_paths, seed);
    cfg.dt_safety = dt_safety;
    let ens = simulate_jump_diffusion_i(set, eps, &cfg)?;
    let v = variance_jackknife(ens.terminal());
    Ok(QEstimate {
        q_hat: Estimate { value: v.value / (2.0 * t_end), se: v.se / (2.0 * t_end) },
        eps: eps.value(),
        t_end,
        dt: ens.dt,
        n_paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::spectral::TorusGrid;
    use crate::stats::{
        empirical_characteristic, ks_critical, ks_critical_one_sample, ks_distance, ks_one_sample, mean_se, median,
    };

    fn eps(k: u32) -> Epsilon {
        Epsilon::from_reciprocal(k).unwrap()
    }

    fn constant_i(a: f64, lambda: f64) -> CoefficientSetI {
        let g = TorusGrid::new(16).unwrap();
        CoefficientSetI::new(
            PeriodicField::constant(g, a),
            PeriodicField::constant(g, 0.0),
            PeriodicField::constant(g, lambda),
            PeriodicField::constant(g, 1.0),
            IntegrableKernel::uniform(1.0, 1.0).unwrap(),
        )
        .unwrap()
    }

    fn draws(alpha: f64, dt: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream(seed, 0);
        (0..n).map(|_| sample_stable_increment(alpha, dt, &mut rng).unwrap().0).collect()
    }

    #[test]
    fn stable_characteristic_function_median_and_scaling() {
        let x = draws(1.5, 1.0, 200_000, 1);
        let c = empirical_characteristic(&x, 1.0);
        assert!(c.brackets((-1.0f64).exp(), 3.0), "{c:?}");
        let med = median(&x);
        // density at 0 of the standard law is Γ(1 + 1/α)/π
        let f0 = gamma(1.0 + 1.0 / 1.5) / PI;
        let se = 1.0 / (2.0 * f0 * (x.len() as f64).sqrt());
        assert!(med.abs() < 3.0 * se);
        let a = draws(1.5, 2.0, 100_000, 2);
        let b: Vec<f64> = draws(1.5, 1.0, 100_000, 3).iter().map(|v| v * 2f64.powf(1.0 / 1.5)).collect();
        assert!(ks_distance(&a, &b).unwrap() < ks_critical(a.len(), b.len(), 0.01));
        assert!(sample_stable_increment(2.0, 1.0, &mut stream(0, 0)).is_err());
        assert!(sample_stable_increment(1.0, 0.0, &mut stream(0, 0)).is_err());
    }

    #[test]
    fn stable_cdf_against_cauchy_and_samples() {
        let x = draws(1.2, 0.7, 5000, 4);
        let d = ks_one_sample(&x, |v| stable_cdf(v, 1.2, 0.7).unwrap()).unwrap();
        assert!(d < ks_critical_one_sample(x.len(), 0.01), "{d}");
        // near α = 1 the inversion integral approaches the Cauchy law
        let near = stable_cdf(0.8, 1.0 + 1e-6, 1.0).unwrap();
        assert!((near - (0.5 + 0.8f64.atan() / PI)).abs() < 1e-5);
        assert!((stable_cdf(0.0, 1.7, 2.0).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pure_diffusion_variance() {
        let set = constant_i(1.0, 1e-12);
        let mut cfg = ParticleConfig::new(1.0, 0.1 / 16.0, 4000, 7);
        cfg.n_snapshots = 2;
        let ens = simulate_jump_diffusion_i(&set, eps(4), &cfg).unwrap();
        assert_eq!(ens.times.len(), 2);
        let v = variance_jackknife(ens.terminal());
        assert!(Estimate { value: v.value / 2.0, se: v.se / 2.0 }.brackets(1.0, 3.0), "{v:?}");
    }

    #[test]
    fn pure_jump_variance_poisson_counts_and_jump_law() {
        use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, DiscreteCDF, Poisson};
        let set = constant_i(1e-12, 2.0);
        let e = eps(4);
        let t = 0.5;
        let mut cfg = ParticleConfig::new(t, 0.1 / 16.0, 10_000, 8);
        cfg.record_jump_sizes = true;
        let ens = simulate_jump_diffusion_i(&set, e, &cfg).unwrap();
        let v = variance_jackknife(ens.terminal());
        let q = Estimate { value: v.value / (2.0 * t), se: v.se / (2.0 * t) };
        assert!(q.brackets(1.0 / 3.0, 3.0), "{q:?}");

        let mean_count = 2.0 * set.kernel.mass * t / e.value().powi(2);
        let pois = Poisson::new(mean_count).unwrap();
        let lo = (mean_count - 3.0 * mean_count.sqrt()).floor() as u64;
        let hi = (mean_count + 3.0 * mean_count.sqrt()).ceil() as u64;
        let mut observed = vec![0.0; (hi - lo + 3) as usize];
        let mut expected = vec![0.0; observed.len()];
        for c in &ens.jumps {
            let bin = if *c < lo {
                0
            } else if *c > hi {
                observed.len() - 1
            } else {
                (c - lo + 1) as usize
            };
            observed[bin] += 1.0;
        }
        let n = ens.jumps.len() as f64;
        expected[0] = n * pois.cdf(lo - 1);
        for k in lo..=hi {
            expected[(k - lo + 1) as usize] = n * pois.pmf(k);
        }
        *expected.last_mut().unwrap() = n * (1.0 - pois.cdf(hi));
        let chi2: f64 = observed.iter().zip(&expected).map(|(o, e)| (o - e).powi(2) / e).sum();
        let crit = ChiSquared::new((observed.len() - 1) as f64).unwrap().inverse_cdf(0.99);
        assert!(chi2 < crit, "{chi2} vs {crit}");

        let sizes: Vec<f64> = ens.jump_sizes.iter().take(20_000).copied().collect();
        let d = ks_one_sample(&sizes, |z| set.kernel.jump_cdf(z)).unwrap();
        assert!(d < ks_critical_one_sample(sizes.len(), 0.01));
    }

    #[test]
    fn reproducible_and_rejects_large_steps() {
        let set = fixtures::varcoef_1(32).unwrap();
        let cfg = ParticleConfig::new(0.05, 0.1 / 64.0, 50, 3);
        let a = simulate_jump_diffusion_i(&set, eps(8), &cfg).unwrap();
        let b = simulate_jump_diffusion_i(&set, eps(8), &cfg).unwrap();
        assert_eq!(a.positions, b.positions);
        let bad = ParticleConfig::new(0.05, 0.01, 50, 3);
        assert!(matches!(simulate_jump_diffusion_i(&set, eps(8), &bad), Err(Error::TimeStep { .. })));
        let mut buf = Vec::new();
        a.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 8 + 8 * 50);
    }

    #[test]
    fn stable_signal_laws() {
        let g = TorusGrid::new(16).unwrap();
        let z = PeriodicField::constant(g, 0.0);
        let mk = |s: f64| {
            CoefficientSetII::new(
                PeriodicField::constant(g, s),
                z.clone(),
                z.clone(),
                z.clone(),
                z.clone(),
                z.clone(),
                1.5,
            )
            .unwrap()
        };
        let cfg = ParticleConfig::new(1.0, 0.025, 3000, 11);
        let ens = simulate_signal_ii(&mk(1.0), eps(4), &cfg, SignalDrift::GeneratorConsistent).unwrap();
        let d = ks_one_sample(ens.terminal(), |v| stable_cdf(v, 1.5, 1.0).unwrap()).unwrap();
        assert!(d < ks_critical_one_sample(3000, 0.01), "{d}");
        let scaled =
            simulate_signal_ii(&mk(0.5), eps(4), &ParticleConfig { seed: 12, ..cfg }, SignalDrift::Literal).unwrap();
        let back: Vec<f64> = scaled.terminal().iter().map(|v| v * 2.0).collect();
        assert!(ks_distance(&back, ens.terminal()).unwrap() < ks_critical(3000, 3000, 0.01));
        let m = mean_se(&ens.terminal().iter().map(|v| v.clamp(-5.0, 5.0)).collect::<Vec<_>>());
        assert!(m.brackets(0.0, 3.0));
    }
}
