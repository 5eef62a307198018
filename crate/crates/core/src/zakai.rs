//! Filtering with fast-oscillating observation functions: heterogeneous and homogenized
//! Zakai equations against a bootstrap particle filter.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::{solve_cell_i, solve_cell_ii, CellSolutionI, CellSolutionII};
use crate::coefficients::{CoefficientSetI, CoefficientSetII, Epsilon};
use crate::error::{Error, Result};
use crate::operators::{assemble_t_eps, assemble_v_eps, EffectiveStable, LineGrid, LineOperator};
use crate::particle::{stream, CellTable, JumpDiffusionDynamics, SignalDrift, StableDynamics};
use crate::spde::Part;
use crate::spectral::{self, fractional_symbol, PeriodicField};
use crate::stats::{mean_se, Estimate};

/// Which increment drives the multiplicative term of the Zakai equation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DrivingNoise {
    /// Observation increments `Δy`, the filtering reading.
    Observation,
    /// The scenario's observation-noise increments `ΔW`, as the equation is printed.
    Literal,
}

/// Signal dynamics and observation function for one part.
#[derive(Clone, Debug)]
pub enum SignalModel {
    JumpDiffusion {
        dynamics: JumpDiffusionDynamics,
        sigma: CellTable,
        eps: f64,
    },
    Stable {
        dynamics: StableDynamics,
        sigma: CellTable,
        eps: f64,
    },
    /// `dx = √(2a)dw`, `h(x) = slope·x`; linear-Gaussian reference model.
    Linear {
        diffusion: f64,
        slope: f64,
    },
}

impl SignalModel {
    pub fn part_i(set: &CoefficientSetI, eps: Epsilon) -> Self {
        SignalModel::JumpDiffusion {
            dynamics: JumpDiffusionDynamics::new(set, eps),
            sigma: CellTable::new(&set.sigma, CellTable::DEFAULT_POINTS),
            eps: eps.value(),
        }
    }

    pub fn part_ii(set: &CoefficientSetII, eps: Epsilon, drift: SignalDrift) -> Self {
        SignalModel::Stable {
            dynamics: StableDynamics::new(set, eps, drift),
            sigma: CellTable::new(&set.sigma, CellTable::DEFAULT_POINTS),
            eps: eps.value(),
        }
    }

    pub fn observation(&self, x: f64) -> f64 {
        match self {
            SignalModel::JumpDiffusion { sigma, eps, .. } | SignalModel::Stable { sigma, eps, .. } => sigma.at(x / eps),
            SignalModel::Linear { slope, .. } => slope * x,
        }
    }

    /// Advances one position by `dt`. The thinning clock is redrawn on entry, which is
    /// exact because proposal gaps are exponential.
    pub fn advance(&self, x: &mut f64, dt: f64, rng: &mut ChaCha8Rng) {
        match self {
            SignalModel::JumpDiffusion { dynamics, .. } => {
                let mut s = dynamics.start(*x, rng);
                dynamics.step(&mut s, dt, rng, |_| {});
                *x = s.x;
            }
            SignalModel::Stable { dynamics, .. } => {
                dynamics.step(x, dt, rng);
            }
            SignalModel::Linear { diffusion, .. } => {
                *x += (2.0 * diffusion * dt).sqrt() * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FilterScenario {
    pub part: Part,
    pub eps: f64,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub index: u64,
    /// Signal at `t_k = k·dt`, `k = 0..=steps`.
    pub signal: Vec<f64>,
    /// `Δy_k = σ(x_{t_k}/ε)dt + ΔW_k`.
    pub dy: Vec<f64>,
    pub dw: Vec<f64>,
}

impl FilterScenario {
    pub fn steps(&self) -> usize {
        self.dy.len()
    }
}

/// Simulates the signal with `substeps` Euler steps per observation step and synthesizes
/// observations; `x₀ ~ N(0, prior_std²)`.
pub fn generate_scenario(
    model: &SignalModel,
    part: Part,
    eps: f64,
    t_end: f64,
    dt: f64,
    substeps: usize,
    prior_std: f64,
    seed: u64,
    index: u64,
) -> Result<FilterScenario> {
    if !(dt > 0.0 && t_end > 0.0) || substeps == 0 {
        return Err(Error::param("scenario", "dt, t_end and substeps must be positive"));
    }
    let steps = (t_end / dt).round() as usize;
    if steps == 0 || ((steps as f64) * dt - t_end).abs() > 1e-9 * t_end {
        return Err(Error::param("dt", format!("t_end = {t_end} is not a multiple of dt = {dt}")));
    }
    let mut rng = stream(seed, index);
    let mut noise = stream(seed, index | (1 << 42));
    let mut x = prior_std * rng.sample::<f64, _>(StandardNormal);
    let mut signal = vec![x];
    let mut dy = Vec::with_capacity(steps);
    let mut dw = Vec::with_capacity(steps);
    let h = dt / substeps as f64;
    for _ in 0..steps {
        let w = dt.sqrt() * noise.sample::<f64, _>(StandardNormal);
        dy.push(model.observation(x) * dt + w);
        dw.push(w);
        for _ in 0..substeps {
            model.advance(&mut x, h, &mut rng);
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("signal".into()));
        }
        signal.push(x);
    }
    Ok(FilterScenario { part, eps, dt, t_end, seed, index, signal, dy, dw })
}

/// Normalized posterior on the window grid at the output times.
#[derive(Clone, Debug, Serialize)]
pub struct PosteriorEstimate {
    pub method: String,
    pub times: Vec<f64>,
    pub density: Vec<Vec<f64>>,
    /// Unnormalized mass per output time (empty for the particle filter).
    pub mass: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Monte-Carlo standard error of the mean (particle filter only).
    pub mean_se: Vec<f64>,
    pub clipped_mass: f64,
    /// Most negative normalized value before clipping.
    pub min_value: f64,
}

/// Normalizes `u`, clipping values in `[−tol, 0)`; larger negativity is an error.
pub fn normalize_density(grid: LineGrid, u: &[f64], tol: f64) -> Result<(Vec<f64>, f64, f64)> {
    let mass = grid.integral(u);
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(Error::NonFinite(format!("posterior mass {mass}")));
    }
    let mut p: Vec<f64> = u.iter().map(|v| v / mass).collect();
    let min = p.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -tol {
        return Err(Error::Negativity(min));
    }
    let mut clipped = 0.0;
    for v in p.iter_mut().filter(|v| **v < 0.0) {
        clipped -= *v * grid.dx();
        *v = 0.0;
    }
    let total = grid.integral(&p);
    p.iter_mut().for_each(|v| *v /= total);
    Ok((p, mass, clipped))
}

fn moments(grid: LineGrid, p: &[f64]) -> (f64, f64) {
    let x = grid.points();
    let m = grid.inner(&x, p);
    let v = x.iter().zip(p).map(|(x, p)| (x - m).powi(2) * p).sum::<f64>() * grid.dx();
    (m, v)
}

fn output_marks(steps: usize, n_outputs: usize) -> Vec<usize> {
    (1..=n_outputs).map(|k| (k * steps + n_outputs / 2) / n_outputs).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZakaiSettings {
    pub n_outputs: usize,
    pub negativity_tol: f64,
    pub noise: DrivingNoise,
    pub prior_std: f64,
}

impl Default for ZakaiSettings {
    fn default() -> Self {
        Self { n_outputs: 5, negativity_tol: 1e-9, noise: DrivingNoise::Observation, prior_std: 0.1 }
    }
}

fn driving(s: &FilterScenario, noise: DrivingNoise, k: usize) -> f64 {
    match noise {
        DrivingNoise::Observation => s.dy[k],
        DrivingNoise::Literal => s.dw[k],
    }
}

fn check_batch(scenarios: &[FilterScenario]) -> Result<(usize, f64)> {
    let first = scenarios.first().ok_or_else(|| Error::Battery("no scenarios".into()))?;
    if scenarios.iter().any(|s| s.steps() != first.steps() || s.dt != first.dt) {
        return Err(Error::Battery("scenarios must share dt and length".into()));
    }
    Ok((first.steps(), first.dt))
}

/// Semi-implicit heterogeneous Zakai solver: `(I − dt·A*)u_{n+1} = u_n + σ²u_n dt + σu_nΔ`,
/// with `A*` the adjoint signal generator and `Δ` chosen by [`DrivingNoise`]. All
/// scenarios advance together as columns of one matrix.
pub struct HeterogeneousZakai {
    grid: LineGrid,
    resolvent: DMatrix<f64>,
    sigma: Vec<f64>,
    dt: f64,
}

impl HeterogeneousZakai {
    pub fn new(generator: &dyn LineOperator, sigma: Vec<f64>, dt: f64) -> Result<Self> {
        let grid = generator.grid();
        let n = grid.n();
        let adjoint = generator.to_dense().transpose();
        let m = DMatrix::identity(n, n) - adjoint * dt;
        let resolvent = m.lu().try_inverse().ok_or_else(|| Error::Singular("Zakai resolvent".into()))?;
        Ok(Self { grid, resolvent, sigma, dt })
    }

    pub fn part_i(set: &CoefficientSetI, eps: Epsilon, grid: LineGrid, dt: f64) -> Result<Self> {
        let op = assemble_t_eps(set, eps, grid)?;
        Self::new(&op, grid.sample_cell_field(&set.sigma, eps), dt)
    }

    /// Signal generator with `g = e = f = 0`; the `σ²` term is added explicitly.
    pub fn part_ii(set: &CoefficientSetII, eps: Epsilon, grid: LineGrid, dt: f64) -> Result<Self> {
        let op = assemble_v_eps(&zakai_signal_set(set), eps, grid)?;
        Self::new(&op, grid.sample_cell_field(&set.sigma, eps), dt)
    }

    pub fn solve(
        &self,
        scenarios: &[FilterScenario],
        prior: &[f64],
        settings: &ZakaiSettings,
    ) -> Result<Vec<PosteriorEstimate>> {
        let (steps, dt) = check_batch(scenarios)?;
        if (dt - self.dt).abs() > 1e-15 {
            return Err(Error::param("dt", "solver and scenarios use different steps"));
        }
        let n = self.grid.n();
        let ns = scenarios.len();
        let marks = output_marks(steps, settings.n_outputs);
        let mut u = DMatrix::from_fn(n, ns, |i, _| prior[i]);
        let mut scratch = DMatrix::zeros(n, ns);
        let mut out: Vec<PosteriorEstimate> = (0..ns).map(|_| empty_estimate("zakai-heterogeneous")).collect();
        let s2: Vec<f64> = self.sigma.iter().map(|s| s * s * dt).collect();
        let mut next = 0;
        for k in 0..steps {
            for (j, mut col) in u.column_iter_mut().enumerate() {
                let d = driving(&scenarios[j], settings.noise, k);
                for ((v, s), q) in col.iter_mut().zip(&self.sigma).zip(&s2) {
                    *v *= 1.0 + q + s * d;
                }
            }
            self.resolvent.mul_to(&u, &mut scratch);
            std::mem::swap(&mut u, &mut scratch);
            while next < marks.len() && marks[next] == k + 1 {
                for (j, est) in out.iter_mut().enumerate() {
                    record(self.grid, est, (k + 1) as f64 * dt, u.column(j).as_slice(), settings.negativity_tol)?;
                }
                next += 1;
            }
        }
        Ok(out)
    }
}

fn empty_estimate(method: &str) -> PosteriorEstimate {
    PosteriorEstimate {
        method: method.into(),
        times: vec![],
        density: vec![],
        mass: vec![],
        mean: vec![],
        variance: vec![],
        mean_se: vec![],
        clipped_mass: 0.0,
        min_value: 0.0,
    }
}

fn record(grid: LineGrid, est: &mut PosteriorEstimate, t: f64, u: &[f64], tol: f64) -> Result<()> {
    let min = u.iter().cloned().fold(0.0, f64::min) / grid.integral(u);
    est.min_value = est.min_value.min(min);
    let (p, mass, clipped) = normalize_density(grid, u, tol)?;
    let (m, v) = moments(grid, &p);
    est.times.push(t);
    est.mass.push(mass);
    est.mean.push(m);
    est.variance.push(v);
    est.density.push(p);
    est.clipped_mass += clipped;
    Ok(())
}

/// Part II Zakai coefficients: `g = e = 0`, `f = σ²`.
pub fn zakai_set_ii(set: &CoefficientSetII) -> CoefficientSetII {
    let zero = PeriodicField::constant(set.grid(), 0.0);
    CoefficientSetII { g: zero.clone(), e: zero, f: set.sigma.mul(&set.sigma), ..set.clone() }
}

fn zakai_signal_set(set: &CoefficientSetII) -> CoefficientSetII {
    let zero = PeriodicField::constant(set.grid(), 0.0);
    CoefficientSetII { g: zero.clone(), e: zero.clone(), f: zero, ..set.clone() }
}

/// Homogenized Zakai solver: exact Fourier step of `c₂u'' + c₁u' + c₀u` (or the stable
/// analog), then the factor `1 + σ̄Δ`.
pub struct HomogenizedZakai {
    grid: LineGrid,
    table: Vec<Complex64>,
    sigma_bar: f64,
    dt: f64,
}

impl HomogenizedZakai {
    fn from_symbol(grid: LineGrid, sigma_bar: f64, dt: f64, s: impl Fn(f64) -> Complex64) -> Self {
        let n = grid.n();
        let table = grid
            .wavenumbers()
            .iter()
            .enumerate()
            .map(|(k, w)| {
                let v = s(*w);
                let v = if k == n / 2 { Complex64::new(v.re, 0.0) } else { v };
                (v * dt).exp()
            })
            .collect();
        Self { grid, table, sigma_bar, dt }
    }

    /// `Q₁u'' + (∫mσ²)u` with noise coefficient `σ̄`.
    pub fn part_i(cell: &CellSolutionI, grid: LineGrid, dt: f64) -> Self {
        let (q1, c0) = (cell.q1, cell.sigma_sq_bar);
        Self::from_symbol(grid, cell.sigma_bar, dt, move |w| Complex64::new(-q1 * w * w + c0, 0.0))
    }

    /// Adjoint of the homogenized stable generator plus `∫m₁σ²`; `cell` must come from
    /// [`zakai_set_ii`].
    pub fn part_ii(cell: &CellSolutionII, alpha: f64, grid: LineGrid, dt: f64) -> Self {
        let op = EffectiveStable::new(grid, alpha, cell);
        let fl = fractional_symbol(alpha);
        let (d, g, f) = (op.delta_bar_alpha, op.g_bar, op.f_bar);
        Self::from_symbol(grid, cell.effective.sigma_bar, dt, move |w| -d * fl(w) + Complex64::new(f, -g * w))
    }

    pub fn solve(
        &self,
        scenarios: &[FilterScenario],
        prior: &[f64],
        settings: &ZakaiSettings,
    ) -> Result<Vec<PosteriorEstimate>> {
        let (steps, dt) = check_batch(scenarios)?;
        if (dt - self.dt).abs() > 1e-15 {
            return Err(Error::param("dt", "solver and scenarios use different steps"));
        }
        let marks = output_marks(steps, settings.n_outputs);
        let c0 = spectral::forward(prior);
        scenarios
            .iter()
            .map(|s| {
                let mut c = c0.clone();
                let mut est = empty_estimate("zakai-homogenized");
                let mut next = 0;
                for k in 0..steps {
                    let f = 1.0 + self.sigma_bar * driving(s, settings.noise, k);
                    c.iter_mut().zip(&self.table).for_each(|(c, t)| *c *= t * f);
                    while next < marks.len() && marks[next] == k + 1 {
                        record(
                            self.grid,
                            &mut est,
                            (k + 1) as f64 * dt,
                            &spectral::inverse(&c),
                            settings.negativity_tol,
                        )?;
                        next += 1;
                    }
                }
                Ok(est)
            })
            .collect()
    }
}

/// Bootstrap particle filter: weights `exp(σΔy − ½σ²dt)` evaluated before each
/// propagation, systematic resampling when the effective sample size drops below `n/2`,
/// densities binned onto `grid` (positions wrapped into the window).
pub fn particle_filter_oracle(
    model: &SignalModel,
    scenario: &FilterScenario,
    grid: LineGrid,
    n_particles: usize,
    substeps: usize,
    settings: &ZakaiSettings,
    seed: u64,
) -> Result<PosteriorEstimate> {
    if n_particles < 1000 {
        return Err(Error::param("n_particles", format!("{n_particles} < 1000")));
    }
    let mut rng = stream(seed, scenario.index | (1 << 43));
    let mut x: Vec<f64> = (0..n_particles).map(|_| settings.prior_std * rng.sample::<f64, _>(StandardNormal)).collect();
    let mut logw = vec![0.0; n_particles];
    let steps = scenario.steps();
    let dt = scenario.dt;
    let h = dt / substeps.max(1) as f64;
    let marks = output_marks(steps, settings.n_outputs);
    let mut est = empty_estimate("particle-filter");
    let mut next = 0;
    let mut w = vec![0.0; n_particles];
    for k in 0..steps {
        let dy = scenario.dy[k];
        for (l, xi) in logw.iter_mut().zip(&x) {
            let s = model.observation(*xi);
            *l += s * dy - 0.5 * s * s * dt;
        }
        for xi in x.iter_mut() {
            for _ in 0..substeps.max(1) {
                model.advance(xi, h, &mut rng);
            }
        }
        let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return Err(Error::WeightCollapse(k));
        }
        w.iter_mut().zip(&logw).for_each(|(w, l)| *w = (l - top).exp());
        let sum: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= sum);
        let ess = 1.0 / w.iter().map(|v| v * v).sum::<f64>();
        while next < marks.len() && marks[next] == k + 1 {
            let m: f64 = w.iter().zip(&x).map(|(w, x)| w * x).sum();
            let v: f64 = w.iter().zip(&x).map(|(w, x)| w * (x - m).powi(2)).sum();
            est.times.push((k + 1) as f64 * dt);
            est.mean.push(m);
            est.variance.push(v);
            est.mean_se.push((v / ess).sqrt());
            est.density.push(bin_density(grid, &x, &w));
            next += 1;
        }
        if ess < 0.5 * n_particles as f64 {
            x = systematic_resample(&x, &w, rng.random::<f64>());
            logw.iter_mut().for_each(|l| *l = 0.0);
        } else {
            logw.iter_mut().zip(&w).for_each(|(l, w)| *l = w.ln());
        }
    }
    Ok(est)
}

/// Systematic resampling with one uniform offset `u ∈ [0, 1)`.
pub fn systematic_resample(x: &[f64], w: &[f64], u: f64) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n);
    let mut cum = w[0];
    let mut i = 0;
    for j in 0..n {
        let target = (j as f64 + u) / n as f64;
        while cum < target && i + 1 < n {
            i += 1;
            cum += w[i];
        }
        out.push(x[i]);
    }
    out
}

fn bin_density(grid: LineGrid, x: &[f64], w: &[f64]) -> Vec<f64> {
    let mut d = vec![0.0; grid.n()];
    let (lo, period, dx) = (-grid.half_width(), grid.period(), grid.dx());
    for (x, w) in x.iter().zip(w) {
        let s = (x - lo).rem_euclid(period) / dx + 0.5;
        let j = (s.floor() as usize) % grid.n();
        d[j] += w / dx;
    }
    d
}

/// Per-time comparison of two posteriors.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PosteriorGap {
    pub time: f64,
    pub l1: f64,
    pub mean_gap: f64,
    pub variance_gap: f64,
}

pub fn posterior_distance(grid: LineGrid, a: &PosteriorEstimate, b: &PosteriorEstimate) -> Result<Vec<PosteriorGap>> {
    if a.times.len() != b.times.len() || a.times.iter().zip(&b.times).any(|(s, t)| (s - t).abs() > 1e-12) {
        return Err(Error::Battery("posteriors use different output times".into()));
    }
    Ok((0..a.times.len())
        .map(|k| PosteriorGap {
            time: a.times[k],
            l1: a.density[k].iter().zip(&b.density[k]).map(|(p, q)| (p - q).abs()).sum::<f64>() * grid.dx(),
            mean_gap: a.mean[k] - b.mean[k],
            variance_gap: a.variance[k] - b.variance[k],
        })
        .collect())
}

/// Parameters for a batch of filtering scenarios.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterExperiment {
    pub eps_reciprocal: u32,
    pub t_end: f64,
    /// Observation step as a multiple of `ε²` (Part I) or `ε^α` (Part II).
    pub dt_factor: f64,
    pub n_scenarios: usize,
    pub n_particles: usize,
    /// Euler substeps per observation step for the signal and the particles.
    pub substeps: usize,
    pub half_width: f64,
    pub per_cell: usize,
    pub seed: u64,
    #[serde(default)]
    pub settings: ZakaiSettings,
}

/// Per-time paired statistics over scenarios.
#[derive(Clone, Debug, Serialize)]
pub struct FilterComparison {
    pub eps: f64,
    pub times: Vec<f64>,
    /// Mean over scenarios of `mean_het − mean_pf`.
    pub heterogeneous_vs_particle: Vec<Estimate>,
    /// Mean over scenarios of `mean_hom − mean_het`.
    pub homogenized_vs_heterogeneous: Vec<Estimate>,
    /// Root mean square of `mean_hom − mean_het` over scenarios and times.
    pub homogenized_gap_rms: f64,
    /// Time-averaged squared tracking error of the heterogeneous posterior mean and of the
    /// prior-evolution mean, per scenario.
    pub tracking_error: Vec<(f64, f64)>,
    pub clipped_mass: f64,
}

impl FilterComparison {
    pub fn het_particle_within(&self, k: f64) -> bool {
        self.heterogeneous_vs_particle.iter().all(|e| e.brackets(0.0, k))
    }

    pub fn hom_het_within(&self, k: f64) -> bool {
        self.homogenized_vs_heterogeneous.iter().all(|e| e.brackets(0.0, k))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FilterRun {
    pub scenarios: Vec<FilterScenario>,
    pub heterogeneous: Vec<PosteriorEstimate>,
    pub homogenized: Vec<PosteriorEstimate>,
    pub particle: Vec<PosteriorEstimate>,
    pub prior_evolution: PosteriorEstimate,
    pub comparison: FilterComparison,
}

/// Part I experiment: scenarios, both Zakai solvers, the particle filter and the
/// unfiltered evolution of the prior.
pub fn run_filter_experiment_i(set: &CoefficientSetI, exp: &FilterExperiment) -> Result<FilterRun> {
    let eps = Epsilon::from_reciprocal(exp.eps_reciprocal)?;
    let cell = solve_cell_i(set)?;
    let grid = LineGrid::with_cells(exp.half_width, eps, exp.per_cell)?;
    let dt = exp.dt_factor * eps.value().powi(2);
    let steps = (exp.t_end / dt).ceil() as usize;
    let dt = exp.t_end / steps as f64;
    let model = SignalModel::part_i(set, eps);
    let het = HeterogeneousZakai::part_i(set, eps, grid, dt)?;
    let hom = HomogenizedZakai::part_i(&cell, grid, dt);
    let silent = HeterogeneousZakai::new(&assemble_t_eps(set, eps, grid)?, vec![0.0; grid.n()], dt)?;
    run_filter(exp, Part::I, eps.value(), grid, dt, &model, &het, &hom, &silent)
}

/// Part II experiment with `g = e = 0`, `f = σ²` and the generator-consistent signal drift.
pub fn run_filter_experiment_ii(set: &CoefficientSetII, exp: &FilterExperiment) -> Result<FilterRun> {
    let eps = Epsilon::from_reciprocal(exp.eps_reciprocal)?;
    let zset = zakai_set_ii(set);
    let cell = solve_cell_ii(&zset)?;
    let grid = LineGrid::with_cells(exp.half_width, eps, exp.per_cell)?;
    let dt = exp.dt_factor * eps.value().powf(set.alpha);
    let steps = (exp.t_end / dt).ceil() as usize;
    let dt = exp.t_end / steps as f64;
    let model = SignalModel::part_ii(set, eps, SignalDrift::GeneratorConsistent);
    let het = HeterogeneousZakai::part_ii(set, eps, grid, dt)?;
    let hom = HomogenizedZakai::part_ii(&cell, set.alpha, grid, dt);
    let silent = HeterogeneousZakai::new(&assemble_v_eps(&zakai_signal_set(set), eps, grid)?, vec![0.0; grid.n()], dt)?;
    run_filter(exp, Part::II, eps.value(), grid, dt, &model, &het, &hom, &silent)
}

#[allow(clippy::too_many_arguments)]
fn run_filter(
    exp: &FilterExperiment,
    part: Part,
    eps: f64,
    grid: LineGrid,
    dt: f64,
    model: &SignalModel,
    het: &HeterogeneousZakai,
    hom: &HomogenizedZakai,
    silent: &HeterogeneousZakai,
) -> Result<FilterRun> {
    if exp.n_scenarios < 2 {
        return Err(Error::param("n_scenarios", "need at least two scenarios"));
    }
    let settings = &exp.settings;
    let steps = (exp.t_end / dt).round() as usize;
    let scenarios: Vec<FilterScenario> = (0..exp.n_scenarios)
        .into_par_iter()
        .map(|s| {
            generate_scenario(
                model,
                part,
                eps,
                steps as f64 * dt,
                dt,
                exp.substeps,
                settings.prior_std,
                exp.seed,
                s as u64,
            )
        })
        .collect::<Result<_>>()?;
    let prior = grid.sample(|x| (-(x * x) / (2.0 * settings.prior_std.powi(2))).exp());
    let heterogeneous = het.solve(&scenarios, &prior, settings)?;
    let homogenized = hom.solve(&scenarios, &prior, settings)?;
    let prior_evolution = silent.solve(&scenarios[..1], &prior, settings)?.remove(0);
    let particle: Vec<PosteriorEstimate> = scenarios
        .par_iter()
        .map(|s| particle_filter_oracle(model, s, grid, exp.n_particles, exp.substeps, settings, exp.seed))
        .collect::<Result<_>>()?;

    let times = heterogeneous[0].times.clone();
    let per_time = |f: &dyn Fn(usize, usize) -> f64| -> Vec<Estimate> {
        (0..times.len()).map(|k| mean_se(&(0..scenarios.len()).map(|s| f(s, k)).collect::<Vec<_>>())).collect()
    };
    let heterogeneous_vs_particle = per_time(&|s, k| heterogeneous[s].mean[k] - particle[s].mean[k]);
    let homogenized_vs_heterogeneous = per_time(&|s, k| homogenized[s].mean[k] - heterogeneous[s].mean[k]);
    let mut sq = 0.0;
    for s in 0..scenarios.len() {
        for k in 0..times.len() {
            sq += (homogenized[s].mean[k] - heterogeneous[s].mean[k]).powi(2);
        }
    }
    let homogenized_gap_rms = (sq / (scenarios.len() * times.len()) as f64).sqrt();
    let tracking_error = scenarios
        .iter()
        .zip(&heterogeneous)
        .map(|(sc, est)| {
            let mut e_post = 0.0;
            let mut e_prior = 0.0;
            for (k, t) in est.times.iter().enumerate() {
                let truth = sc.signal[(t / dt).round() as usize];
                e_post += (est.mean[k] - truth).powi(2);
                e_prior += (prior_evolution.mean[k] - truth).powi(2);
            }
            let n = est.times.len() as f64;
            (e_post / n, e_prior / n)
        })
        .collect();
    let clipped_mass = heterogeneous.iter().chain(&homogenized).map(|e| e.clipped_mass).sum();
    Ok(FilterRun {
        comparison: FilterComparison {
            eps,
            times,
            heterogeneous_vs_particle,
            homogenized_vs_heterogeneous,
            homogenized_gap_rms,
            tracking_error,
            clipped_mass,
        },
        scenarios,
        heterogeneous,
        homogenized,
        particle,
        prior_evolution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::spectral::TorusGrid;
    use crate::stats::{ks_critical_one_sample, ks_one_sample};
    use statrs::distribution::{ContinuousCDF, Normal};

    fn eps(k: u32) -> Epsilon {
        Epsilon::from_reciprocal(k).unwrap()
    }

    fn with_sigma(set: &CoefficientSetI, s: f64) -> CoefficientSetI {
        set.with_sigma(PeriodicField::constant(set.grid(), s))
    }

    #[test]
    fn silent_observations_are_pure_noise_and_reproducible() {
        let set = with_sigma(&fixtures::varcoef_1(32).unwrap(), 0.0);
        let model = SignalModel::part_i(&set, eps(4));
        let s = generate_scenario(&model, Part::I, 0.25, 1.0, 0.01, 2, 0.1, 4, 0).unwrap();
        let z: Vec<f64> = s.dy.iter().map(|v| v / 0.1).collect();
        let nd = Normal::new(0.0, 1.0).unwrap();
        assert!(ks_one_sample(&z, |v| nd.cdf(v)).unwrap() < ks_critical_one_sample(z.len(), 0.01));
        let again = generate_scenario(&model, Part::I, 0.25, 1.0, 0.01, 2, 0.1, 4, 0).unwrap();
        assert_eq!(s.signal, again.signal);
        assert_eq!(s.dy, again.dy);
    }

    #[test]
    fn observations_recover_the_observation_function() {
        let set = fixtures::varcoef_1(32).unwrap();
        let model = SignalModel::part_i(&set, eps(4));
        let s = generate_scenario(&model, Part::I, 0.25, 0.1, 0.001, 1, 0.1, 5, 1).unwrap();
        for k in 0..s.steps() {
            let h = (s.dy[k] - s.dw[k]) / s.dt;
            assert!((h - model.observation(s.signal[k])).abs() < 1e-9);
        }
        assert!(generate_scenario(&model, Part::I, 0.25, 0.1, 0.003, 1, 0.1, 5, 1).is_err());
    }

    fn small_experiment(k: u32) -> FilterExperiment {
        FilterExperiment {
            eps_reciprocal: k,
            t_end: 0.1,
            dt_factor: 0.1,
            n_scenarios: 4,
            n_particles: 1000,
            substeps: 2,
            half_width: 2.0,
            per_cell: 16,
            seed: 3,
            settings: ZakaiSettings::default(),
        }
    }

    #[test]
    fn constant_observation_function_carries_no_information() {
        let set = with_sigma(&fixtures::varcoef_1(32).unwrap(), 0.7);
        let run = run_filter_experiment_i(&set, &small_experiment(4)).unwrap();
        let grid = LineGrid::with_cells(2.0, eps(4), 16).unwrap();
        for est in &run.heterogeneous {
            for gap in posterior_distance(grid, est, &run.prior_evolution).unwrap() {
                assert!(gap.l1 < 1e-6 && gap.mean_gap.abs() < 1e-6, "{gap:?}");
            }
        }
        // homogenized filtering reduces to the unfiltered homogenized evolution
        let cell = solve_cell_i(&set).unwrap();
        let hom = HomogenizedZakai::part_i(&cell, grid, run.scenarios[0].dt);
        let quiet: Vec<FilterScenario> =
            run.scenarios.iter().map(|s| FilterScenario { dy: vec![0.0; s.steps()], ..s.clone() }).collect();
        let prior = grid.sample(|x| (-(x * x) / 0.02).exp());
        let base = hom.solve(&quiet[..1], &prior, &ZakaiSettings::default()).unwrap();
        for est in &run.homogenized {
            for gap in posterior_distance(grid, est, &base[0]).unwrap() {
                assert!(gap.l1 < 1e-6, "{gap:?}");
            }
        }
        // particle weights stay uniform, so no resampling noise enters
        let pf = &run.particle[0];
        assert!(pf.mean_se.iter().zip(&pf.variance).all(|(se, v)| (se * se * 1000.0 - v).abs() < 1e-9 * v.max(1e-12)));
    }

    #[test]
    fn constant_coefficients_filters_agree() {
        let set = fixtures::const_1(32).unwrap();
        let mut exp = small_experiment(8);
        exp.settings.prior_std = 0.3;
        let run = run_filter_experiment_i(&set, &exp).unwrap();
        let grid = LineGrid::with_cells(2.0, eps(8), 16).unwrap();
        for (a, b) in run.heterogeneous.iter().zip(&run.homogenized) {
            for gap in posterior_distance(grid, a, b).unwrap() {
                assert!(gap.l1 < 1e-2 && gap.mean_gap.abs() < 1e-2, "{gap:?}");
            }
        }
    }

    #[test]
    fn posterior_concentrates_without_dynamics() {
        let g = TorusGrid::new(32).unwrap();
        let base = fixtures::varcoef_1(32).unwrap();
        let set = CoefficientSetI::new(
            PeriodicField::constant(g, 1e-12),
            PeriodicField::constant(g, 0.0),
            PeriodicField::constant(g, 1e-12),
            base.sigma.scale(4.0),
            base.kernel,
        )
        .unwrap();
        let mut exp = small_experiment(2);
        exp.t_end = 1.0;
        exp.dt_factor = 0.01;
        exp.n_scenarios = 8;
        exp.settings.prior_std = 0.3;
        let run = run_filter_experiment_i(&set, &exp).unwrap();
        let avg: Vec<f64> = (0..run.comparison.times.len())
            .map(|k| run.heterogeneous.iter().map(|e| e.variance[k]).sum::<f64>() / run.heterogeneous.len() as f64)
            .collect();
        assert!(avg.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)), "{avg:?}");
    }

    #[test]
    fn particle_filter_matches_kalman_bucy() {
        let (a, h) = (0.5, 2.0);
        let model = SignalModel::Linear { diffusion: a, slope: h };
        let grid = LineGrid::new(4.0, 256).unwrap();
        let settings = ZakaiSettings { prior_std: 0.5, ..ZakaiSettings::default() };
        let dt = 1e-3;
        let sc = generate_scenario(&model, Part::I, 1.0, 0.5, dt, 1, 0.5, 11, 0).unwrap();
        let pf = particle_filter_oracle(&model, &sc, grid, 20_000, 1, &settings, 12).unwrap();
        // Kalman–Bucy: dm = P h (dy − h m dt), dP = (2a − h²P²)dt
        let (mut m, mut p) = (0.0, 0.25);
        let mut kb = Vec::new();
        for k in 0..sc.steps() {
            m += p * h * (sc.dy[k] - h * m * dt);
            p += (2.0 * a - h * h * p * p) * dt;
            kb.push((m, p));
        }
        for (t, (mean, se)) in pf.times.iter().zip(pf.mean.iter().zip(&pf.mean_se)) {
            let (m, _) = kb[(t / dt).round() as usize - 1];
            assert!((mean - m).abs() < 3.0 * se + 2e-3, "t {t}: {mean} vs {m} ± {se}");
        }
    }

    #[test]
    fn posterior_distance_examples() {
        let grid = LineGrid::new(4.0, 512).unwrap();
        let mk = |c: f64| {
            let u = grid.gaussian_bump(c, 0.3);
            let mut e = empty_estimate("t");
            record(grid, &mut e, 1.0, &u, 1e-9).unwrap();
            e
        };
        let a = mk(0.0);
        let d = posterior_distance(grid, &a, &a).unwrap();
        assert_eq!(d[0].l1, 0.0);
        assert_eq!(d[0].mean_gap, 0.0);
        let b = mk(0.4);
        let d = posterior_distance(grid, &b, &a).unwrap();
        assert!((d[0].mean_gap - 0.4).abs() < 1e-9);
        assert!(d[0].variance_gap.abs() < 1e-9);
    }

    #[test]
    fn normalization_rejects_negativity() {
        let grid = LineGrid::new(1.0, 8).unwrap();
        let (p, _, clipped) = normalize_density(grid, &[1.0, 1.0, -1e-12, 1.0, 1.0, 1.0, 1.0, 1.0], 1e-9).unwrap();
        assert!(p.iter().all(|v| *v >= 0.0) && clipped > 0.0);
        assert!((grid.integral(&p) - 1.0).abs() < 1e-12);
        assert!(matches!(
            normalize_density(grid, &[1.0, -0.5, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0], 1e-9),
            Err(Error::Negativity(_))
        ));
    }

    #[test]
    fn resampling_preserves_counts() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let r = systematic_resample(&x, &[0.0, 0.5, 0.0, 0.5], 0.3);
        assert_eq!(r, vec![1.0, 1.0, 3.0, 3.0]);
    }

    #[test]
    fn part_ii_filter_runs() {
        let set = fixtures::stable_1(32).unwrap();
        let mut exp = small_experiment(4);
        exp.n_scenarios = 2;
        let run = run_filter_experiment_ii(&set, &exp).unwrap();
        assert_eq!(run.heterogeneous.len(), 2);
        for e in run.heterogeneous.iter().chain(&run.homogenized) {
            assert!(e.mean.iter().all(|m| m.is_finite()));
        }
    }
}
