//! Ensembles of heterogeneous and homogenized SPDE paths driven by a scalar Brownian motion.
//!
//! The heterogeneous equations use a semi-implicit Euler–Maruyama step with a precomputed
//! dense resolvent, so whole ensembles advance by one matrix product per step. The
//! homogenized equations are diagonal in Fourier space and advance exactly.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cell::{CellSolutionI, CellSolutionII};
use crate::coefficients::{CoefficientSetI, CoefficientSetII, Epsilon};
use crate::error::{Error, Result};
use crate::operators::{assemble_t_eps, assemble_v_eps, EffectiveStable, LineGrid, LineOperator};
use crate::particle::stream;
use crate::spectral::{self, fractional_symbol};
use crate::stats::{variance_jackknife, EnsembleStats, Estimate, MartingaleInput};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    I,
    II,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseCoupling {
    Shared,
    Independent,
}

/// Time-step limit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    /// Part I: `min(0.1ε², 0.25Δx²/max a)`; Part II: `0.1ε^α`.
    Resolved,
    /// Part I: `0.1ε²` only; the semi-implicit step is unconditionally stable.
    FastScale,
}

/// Largest admissible `dt` for the heterogeneous step.
pub fn max_time_step(part: Part, eps: Epsilon, grid: LineGrid, a_max: f64, alpha: f64, rule: StepRule) -> f64 {
    let e = eps.value();
    match (part, rule) {
        (Part::I, StepRule::Resolved) => (0.1 * e * e).min(0.25 * grid.dx().powi(2) / a_max),
        (Part::I, StepRule::FastScale) => 0.1 * e * e,
        (Part::II, _) => 0.1 * e.powf(alpha),
    }
}

/// Initial profiles; all are concentrated in the middle half of the window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialDatum {
    GaussianBump {
        center: f64,
        width: f64,
    },
    DoubleBump {
        separation: f64,
        width: f64,
    },
    /// `½(tanh((x + r)/s) − tanh((x − r)/s))`
    SmoothedIndicator {
        radius: f64,
        smoothing: f64,
    },
}

impl InitialDatum {
    pub fn sample(&self, grid: LineGrid) -> Vec<f64> {
        match *self {
            InitialDatum::GaussianBump { center, width } => grid.gaussian_bump(center, width),
            InitialDatum::DoubleBump { separation, width } => {
                let a = grid.gaussian_bump(-0.5 * separation, width);
                let b = grid.gaussian_bump(0.5 * separation, width);
                a.iter().zip(&b).map(|(p, q)| p + q).collect()
            }
            InitialDatum::SmoothedIndicator { radius, smoothing } => {
                grid.sample(|x| 0.5 * (((x + radius) / smoothing).tanh() - ((x - radius) / smoothing).tanh()))
            }
        }
    }
}

/// Fraction of `∫|u|` lying outside `[−L/2, L/2]`.
pub fn boundary_mass(grid: LineGrid, u: &[f64]) -> f64 {
    let inner = 0.5 * grid.half_width();
    let total: f64 = u.iter().map(|v| v.abs()).sum();
    let outside: f64 = u.iter().enumerate().filter(|(j, _)| grid.point(*j).abs() > inner).map(|(_, v)| v.abs()).sum();
    if total > 0.0 {
        outside / total
    } else {
        0.0
    }
}

/// Named test function sampled on the grid.
#[derive(Clone, Debug, Serialize)]
pub struct TestFunction {
    pub name: String,
    pub values: Vec<f64>,
}

/// Bump, derivative of a bump and a wide bump, all centred at 0.
pub fn default_battery(grid: LineGrid) -> Vec<TestFunction> {
    let w = 0.25 * grid.half_width();
    let bump = grid.gaussian_bump(0.0, w);
    let slope: Vec<f64> = grid.points().iter().zip(&bump).map(|(x, b)| -x / (w * w) * b * w).collect();
    vec![
        TestFunction { name: "bump".into(), values: bump },
        TestFunction { name: "bump-derivative".into(), values: slope },
        TestFunction { name: "wide-bump".into(), values: grid.gaussian_bump(0.0, 0.4 * grid.half_width()) },
    ]
}

/// `(I − dt·A)u_{n+1} = u_n + σu_nΔW` with the resolvent stored densely.
#[derive(Clone, Debug)]
pub struct HeterogeneousStepper {
    resolvent: DMatrix<f64>,
    sigma: Vec<f64>,
    pub dt: f64,
}

impl HeterogeneousStepper {
    pub fn new(op: &dyn LineOperator, sigma: Vec<f64>, dt: f64) -> Result<Self> {
        let n = op.grid().n();
        let a = op.to_dense();
        let m = DMatrix::identity(n, n) - a * dt;
        let resolvent = m.lu().try_inverse().ok_or_else(|| Error::Singular("I − dt·A".into()))?;
        Ok(Self { resolvent, sigma, dt })
    }

    pub fn step(&self, u: &[f64], dw: f64) -> Vec<f64> {
        let rhs: Vec<f64> = u.iter().zip(&self.sigma).map(|(v, s)| v + s * v * dw).collect();
        (&self.resolvent * nalgebra::DVector::from_vec(rhs)).as_slice().to_vec()
    }

    /// One step for every column of `u` (column `p` uses `dw[p]`).
    pub fn step_batch(&self, u: &mut DMatrix<f64>, dw: &[f64], scratch: &mut DMatrix<f64>) {
        for (p, mut col) in u.column_iter_mut().enumerate() {
            for (v, s) in col.iter_mut().zip(&self.sigma) {
                *v += s * *v * dw[p];
            }
        }
        self.resolvent.mul_to(u, scratch);
        std::mem::swap(u, scratch);
    }
}

/// Exact Fourier semigroup of a constant-coefficient generator, then `(1 + σ̄ΔW)`.
#[derive(Clone, Debug)]
pub struct HomogenizedStepper {
    grid: LineGrid,
    /// `exp(dt·s_k)` with `s_k` the generator symbol (Nyquist slot real).
    table: Vec<Complex64>,
    symbol: Vec<Complex64>,
    pub sigma_bar: f64,
    pub dt: f64,
}

impl HomogenizedStepper {
    fn from_symbol(grid: LineGrid, sigma_bar: f64, dt: f64, s: impl Fn(f64) -> Complex64) -> Self {
        let n = grid.n();
        let symbol: Vec<Complex64> = grid
            .wavenumbers()
            .iter()
            .enumerate()
            .map(|(k, w)| {
                let v = s(*w);
                if k == n / 2 {
                    Complex64::new(v.re, 0.0)
                } else {
                    v
                }
            })
            .collect();
        let table = symbol.iter().map(|v| (v * dt).exp()).collect();
        Self { grid, table, symbol, sigma_bar, dt }
    }

    /// `Q u''`.
    pub fn diffusion(grid: LineGrid, q: f64, sigma_bar: f64, dt: f64) -> Result<Self> {
        if !(q > 0.0) {
            return Err(Error::param("Q", format!("must be positive, got {q}")));
        }
        Ok(Self::from_symbol(grid, sigma_bar, dt, |w| Complex64::new(-q * w * w, 0.0)))
    }

    /// `−δ̄α(−Δ)^{α/2}u + ḡu' + f̄u`.
    pub fn stable(op: &EffectiveStable, sigma_bar: f64, dt: f64) -> Self {
        let fl = fractional_symbol(op.alpha);
        let (d, g, f) = (op.delta_bar_alpha, op.g_bar, op.f_bar);
        Self::from_symbol(op.grid(), sigma_bar, dt, move |w| -d * fl(w) + Complex64::new(f, g * w))
    }

    pub fn grid(&self) -> LineGrid {
        self.grid
    }

    pub fn step(&self, u: &[f64], dw: f64) -> Vec<f64> {
        let mut c = spectral::forward(u);
        self.step_coefficients(&mut c, dw);
        spectral::inverse(&c)
    }

    pub fn step_coefficients(&self, c: &mut [Complex64], dw: f64) {
        let f = 1.0 + self.sigma_bar * dw;
        c.iter_mut().zip(&self.table).for_each(|(c, t)| *c *= t * f);
    }

    /// Adjoint of the generator applied to `xi`.
    pub fn generator_adjoint(&self, xi: &[f64]) -> Vec<f64> {
        let mut c = spectral::forward(xi);
        c.iter_mut().zip(&self.symbol).for_each(|(c, s)| *c *= s.conj());
        spectral::inverse(&c)
    }
}

/// `⟨u, ζ⟩` from Fourier coefficients: `period·Re Σ û_k conj(ζ̂_k)`.
fn spectral_weights(grid: LineGrid, zeta: &[f64]) -> Vec<Complex64> {
    spectral::forward(zeta).into_iter().map(|c| c.conj() * grid.period()).collect()
}

fn spectral_pairing(c: &[Complex64], w: &[Complex64]) -> f64 {
    c.iter().zip(w).map(|(a, b)| (a * b).re).sum()
}

#[derive(Clone, Debug, Serialize)]
pub struct SpdeConfig {
    pub part: Part,
    pub eps: Epsilon,
    pub grid: LineGrid,
    /// Requested step; the run uses `T/⌈T/dt⌉`.
    pub dt: f64,
    pub t_end: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub initial: InitialDatum,
    pub coupling: NoiseCoupling,
    pub step_rule: StepRule,
    /// Equally spaced sample times in `(0, T]`.
    pub n_samples: usize,
    /// Homogenized pairings for the martingale diagnostic are stored every `record_stride` steps.
    pub record_stride: usize,
    /// Number of leading paths whose fields are kept.
    pub keep_paths: usize,
    /// `C` in the energy cap `C(1 + ‖u₀‖⁴)`.
    pub energy_constant: f64,
}

impl SpdeConfig {
    pub fn new(part: Part, eps: Epsilon, grid: LineGrid, dt: f64, t_end: f64, n_paths: usize, seed: u64) -> Self {
        Self {
            part,
            eps,
            grid,
            dt,
            t_end,
            n_paths,
            seed,
            initial: InitialDatum::GaussianBump { center: 0.0, width: 0.08 * grid.half_width() },
            coupling: NoiseCoupling::Shared,
            step_rule: StepRule::Resolved,
            n_samples: 5,
            record_stride: 1,
            keep_paths: 0,
            energy_constant: 10.0,
        }
    }
}

/// Coefficients and cell solution for one part.
#[derive(Clone, Copy)]
pub enum SpdeModel<'a> {
    I { set: &'a CoefficientSetI, cell: &'a CellSolutionI },
    II { set: &'a CoefficientSetII, cell: &'a CellSolutionII },
}

impl SpdeModel<'_> {
    fn part(&self) -> Part {
        match self {
            SpdeModel::I { .. } => Part::I,
            SpdeModel::II { .. } => Part::II,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FieldPath {
    pub times: Vec<f64>,
    pub snapshots: Vec<Vec<f64>>,
    pub increments: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EnergyReport {
    pub constant: f64,
    pub initial_norm: f64,
    pub cap: f64,
    pub max_fourth_heterogeneous: f64,
    pub max_fourth_homogenized: f64,
    pub within_cap: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct EnsembleRun {
    pub dt: f64,
    pub n_steps: usize,
    pub battery: Vec<String>,
    pub heterogeneous: EnsembleStats,
    pub homogenized: EnsembleStats,
    /// One input per test function, built from the homogenized paths.
    #[serde(skip)]
    pub martingale: Vec<MartingaleInput>,
    pub heterogeneous_paths: Vec<FieldPath>,
    pub homogenized_paths: Vec<FieldPath>,
    pub energy: EnergyReport,
    /// Sample variance of the increments divided by `dt`.
    pub increment_variance_ratio: Estimate,
    pub boundary_mass: f64,
}

fn increments(seed: u64, path: usize, steps: usize, dt: f64, offset: u64) -> Vec<f64> {
    let mut rng = stream(seed, path as u64 + offset);
    (0..steps).map(|_| dt.sqrt() * rng.sample::<f64, _>(StandardNormal)).collect()
}

const INDEPENDENT_OFFSET: u64 = 1 << 40;

/// Runs heterogeneous and homogenized ensembles side by side with a common test battery.
pub fn run_ensemble(config: &SpdeConfig, model: SpdeModel<'_>, battery: &[TestFunction]) -> Result<EnsembleRun> {
    let grid = config.grid;
    let eps = config.eps;
    if model.part() != config.part {
        return Err(Error::Config("model and config disagree on the part".into()));
    }
    if config.n_paths < 2 || config.n_samples == 0 || config.record_stride == 0 || battery.is_empty() {
        return Err(Error::param("spde config", "need ≥ 2 paths, ≥ 1 sample, a positive stride and a battery"));
    }
    if !(config.t_end > 0.0) {
        return Err(Error::param("t_end", "must be positive"));
    }
    let (het_op, sigma_het, hom): (Box<dyn LineOperator>, Vec<f64>, HomogenizedStepper);
    let (a_max, alpha);
    let steps = (config.t_end / config.dt).ceil() as usize;
    let dt = config.t_end / steps as f64;
    match model {
        SpdeModel::I { set, cell } => {
            het_op = Box::new(assemble_t_eps(set, eps, grid)?);
            sigma_het = grid.sample_cell_field(&set.sigma, eps);
            hom = HomogenizedStepper::diffusion(grid, cell.q, cell.sigma_bar, dt)?;
            a_max = set.a.max();
            alpha = 2.0;
        }
        SpdeModel::II { set, cell } => {
            het_op = Box::new(assemble_v_eps(set, eps, grid)?);
            sigma_het = grid.sample_cell_field(&set.sigma, eps);
            hom =
                HomogenizedStepper::stable(&EffectiveStable::new(grid, set.alpha, cell), cell.effective.sigma_bar, dt);
            a_max = 1.0;
            alpha = set.alpha;
        }
    }
    let limit = max_time_step(config.part, eps, grid, a_max, alpha, config.step_rule);
    if config.dt > limit * (1.0 + 1e-12) {
        return Err(Error::TimeStep { dt: config.dt, limit });
    }
    let het = HeterogeneousStepper::new(het_op.as_ref(), sigma_het, dt)?;

    let n = grid.n();
    let np = config.n_paths;
    let u0 = config.initial.sample(grid);
    let u0_norm = grid.norm_l2(&u0);
    let marks: Vec<usize> =
        (1..=config.n_samples).map(|k| (k * steps + config.n_samples / 2) / config.n_samples).collect();
    let times: Vec<f64> = marks.iter().map(|m| *m as f64 * dt).collect();

    let dw: Vec<Vec<f64>> = (0..np).map(|p| increments(config.seed, p, steps, dt, 0)).collect();
    let dw_hom: Vec<Vec<f64>> = match config.coupling {
        NoiseCoupling::Shared => dw.clone(),
        NoiseCoupling::Independent => {
            (0..np).map(|p| increments(config.seed, p, steps, dt, INDEPENDENT_OFFSET)).collect()
        }
    };
    let all: Vec<f64> = dw.iter().flatten().map(|v| v / dt.sqrt()).collect();
    let increment_variance_ratio = variance_jackknife(&all);

    let nb = battery.len();
    let xi = DMatrix::from_fn(nb, n, |j, i| battery[j].values[i] * grid.dx());
    let w_xi: Vec<Vec<Complex64>> = battery.iter().map(|t| spectral_weights(grid, &t.values)).collect();
    let w_adj: Vec<Vec<Complex64>> =
        battery.iter().map(|t| spectral_weights(grid, &hom.generator_adjoint(&t.values))).collect();

    let mut u = DMatrix::from_fn(n, np, |i, _| u0[i]);
    let mut scratch = DMatrix::zeros(n, np);
    let c0 = spectral::forward(&u0);
    let mut c: Vec<Vec<Complex64>> = vec![c0; np];

    let mut het_samples = Vec::with_capacity(marks.len());
    let mut hom_samples = Vec::with_capacity(marks.len());
    let fine_count = steps / config.record_stride + 1;
    let mut fine_times = Vec::with_capacity(fine_count);
    let mut fine_pair = vec![vec![Vec::with_capacity(fine_count); np]; nb];
    let mut fine_adj = vec![vec![Vec::with_capacity(fine_count); np]; nb];
    let keep = config.keep_paths.min(np);
    let mut het_paths: Vec<FieldPath> = (0..keep)
        .map(|p| FieldPath { times: times.clone(), snapshots: Vec::new(), increments: dw[p].clone() })
        .collect();
    let mut hom_paths: Vec<FieldPath> = (0..keep)
        .map(|p| FieldPath { times: times.clone(), snapshots: Vec::new(), increments: dw_hom[p].clone() })
        .collect();
    let (mut max_het, mut max_hom) = (u0_norm.powi(4), u0_norm.powi(4));
    let cap = config.energy_constant * (1.0 + u0_norm.powi(4));

    let mut record_fine = |k: usize, c: &[Vec<Complex64>]| {
        fine_times.push(k as f64 * dt);
        for j in 0..nb {
            for p in 0..np {
                fine_pair[j][p].push(spectral_pairing(&c[p], &w_xi[j]));
                fine_adj[j][p].push(spectral_pairing(&c[p], &w_adj[j]));
            }
        }
    };
    record_fine(0, &c);

    let mut next = 0;
    let mut step_dw = vec![0.0; np];
    for k in 1..=steps {
        for p in 0..np {
            step_dw[p] = dw[p][k - 1];
        }
        het.step_batch(&mut u, &step_dw, &mut scratch);
        for p in 0..np {
            hom.step_coefficients(&mut c[p], dw_hom[p][k - 1]);
        }
        if k % config.record_stride == 0 {
            record_fine(k, &c);
        }
        while next < marks.len() && marks[next] == k {
            let pairs = &xi * &u;
            het_samples.push((0..nb).map(|j| pairs.row(j).iter().copied().collect()).collect::<Vec<Vec<f64>>>());
            hom_samples.push(
                (0..nb)
                    .map(|j| (0..np).map(|p| spectral_pairing(&c[p], &w_xi[j])).collect())
                    .collect::<Vec<Vec<f64>>>(),
            );
            for p in 0..np {
                let e_het = grid.norm_l2(u.column(p).as_slice()).powi(4);
                let e_hom = (grid.period() * c[p].iter().map(|z| z.norm_sqr()).sum::<f64>()).powi(2);
                if !e_het.is_finite() || !e_hom.is_finite() {
                    return Err(Error::NonFinite(format!("field norm on path {p} at t = {}", k as f64 * dt)));
                }
                max_het = max_het.max(e_het);
                max_hom = max_hom.max(e_hom);
            }
            for p in 0..keep {
                het_paths[p].snapshots.push(u.column(p).as_slice().to_vec());
                hom_paths[p].snapshots.push(spectral::inverse(&c[p]));
            }
            next += 1;
        }
    }

    let sigma_bar = hom.sigma_bar;
    let martingale = (0..nb)
        .map(|j| MartingaleInput {
            times: fine_times.clone(),
            pairing: std::mem::take(&mut fine_pair[j]),
            drift_pairing: std::mem::take(&mut fine_adj[j]),
            sigma_bar,
        })
        .collect();
    Ok(EnsembleRun {
        dt,
        n_steps: steps,
        battery: battery.iter().map(|t| t.name.clone()).collect(),
        heterogeneous: EnsembleStats::new(times.clone(), het_samples)?,
        homogenized: EnsembleStats::new(times, hom_samples)?,
        martingale,
        heterogeneous_paths: het_paths,
        homogenized_paths: hom_paths,
        energy: EnergyReport {
            constant: config.energy_constant,
            initial_norm: u0_norm,
            cap,
            max_fourth_heterogeneous: max_het,
            max_fourth_homogenized: max_hom,
            within_cap: max_het <= cap && max_hom <= cap,
        },
        increment_variance_ratio,
        boundary_mass: boundary_mass(grid, &u0),
    })
}
