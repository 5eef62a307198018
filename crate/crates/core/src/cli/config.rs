//! Strict TOML run configuration. Every table rejects unknown keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cell::{center_drift_i, center_drift_ii};
use crate::coefficients::{CoefficientSetI, CoefficientSetII, FourierProfile};
use crate::error::{Error, Result};
use crate::fixtures;
use crate::kernel::{IntegrableKernel, KernelShape};
use crate::spde::{NoiseCoupling, Part, StepRule};
use crate::spectral::TorusGrid;
use crate::stats::Functional;
use crate::zakai::ZakaiSettings;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Optional; when present it must match the subcommand being run.
    pub command: Option<String>,
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub coefficients: CoefficientSource,
    #[serde(default)]
    pub residual: ResidualSection,
    #[serde(default)]
    pub oracle_q: OracleSection,
    #[serde(default)]
    pub converge: ConvergeSection,
    #[serde(default)]
    pub zakai: ZakaiSection,
    #[serde(default)]
    pub tolerances: Tolerances,
}

mod defaults {
    pub fn seed() -> u64 {
        2024
    }
    pub fn grid() -> usize {
        64
    }
    pub fn one() -> f64 {
        1.0
    }
    pub fn yes() -> bool {
        true
    }
}

/// Exactly one of `builtin`, `random_seed`, `inline_i`, `inline_ii`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSource {
    pub part: Option<Part>,
    pub builtin: Option<String>,
    pub random_seed: Option<u64>,
    pub inline_i: Option<InlineI>,
    pub inline_ii: Option<InlineII>,
    /// Cell grid size (power of two).
    #[serde(default = "defaults::grid")]
    pub grid: usize,
}

impl Default for CoefficientSource {
    fn default() -> Self {
        Self { part: None, builtin: None, random_seed: None, inline_i: None, inline_ii: None, grid: defaults::grid() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineI {
    pub a: FourierProfile,
    #[serde(default)]
    pub b: FourierProfile,
    pub lambda: FourierProfile,
    pub sigma: FourierProfile,
    pub kernel: KernelShape,
    #[serde(default = "defaults::one")]
    pub kernel_mass: f64,
    /// Shift `b` by a constant so that `∫ b m = 0`.
    #[serde(default = "defaults::yes")]
    pub center_drift: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineII {
    pub delta: FourierProfile,
    #[serde(default)]
    pub d: FourierProfile,
    #[serde(default)]
    pub g: FourierProfile,
    #[serde(default)]
    pub e: FourierProfile,
    #[serde(default)]
    pub f: FourierProfile,
    pub sigma: FourierProfile,
    pub alpha: f64,
    #[serde(default = "defaults::yes")]
    pub center_drift: bool,
}

pub enum Coefficients {
    I(CoefficientSetI),
    II(CoefficientSetII),
}

impl Coefficients {
    pub fn part(&self) -> Part {
        match self {
            Coefficients::I(_) => Part::I,
            Coefficients::II(_) => Part::II,
        }
    }
}

impl CoefficientSource {
    pub fn part(&self) -> Result<Part> {
        let inferred = match (&self.builtin, &self.inline_i, &self.inline_ii) {
            (Some(name), _, _) if fixtures::FIXTURES_II.contains(&name.as_str()) => Some(Part::II),
            (Some(_), _, _) | (_, Some(_), _) => Some(Part::I),
            (_, _, Some(_)) => Some(Part::II),
            _ => None,
        };
        match (self.part, inferred) {
            (Some(p), Some(q)) if p != q => {
                Err(Error::Config(format!("coefficients.part = {p:?} conflicts with the source ({q:?})")))
            }
            (Some(p), _) | (None, Some(p)) => Ok(p),
            (None, None) => Ok(Part::I),
        }
    }

    /// Builds the coefficient set. Assumption checks are left to the caller.
    pub fn build(&self) -> Result<Coefficients> {
        let count =
            [self.builtin.is_some(), self.random_seed.is_some(), self.inline_i.is_some(), self.inline_ii.is_some()]
                .iter()
                .filter(|b| **b)
                .count();
        if count > 1 {
            return Err(Error::Config("set only one of builtin, random_seed, inline_i, inline_ii".into()));
        }
        let part = self.part()?;
        let n = self.grid;
        if let Some(name) = &self.builtin {
            return Ok(match part {
                Part::I => Coefficients::I(fixtures::fixture_i(name, n)?),
                Part::II => Coefficients::II(fixtures::fixture_ii(name, n)?),
            });
        }
        if let Some(seed) = self.random_seed {
            return Ok(match part {
                Part::I => Coefficients::I(fixtures::random_admissible_i(n, seed)?),
                Part::II => Coefficients::II(fixtures::random_admissible_ii(n, seed)?),
            });
        }
        let g = TorusGrid::new(n)?;
        if let Some(s) = &self.inline_i {
            let kernel = IntegrableKernel::new(s.kernel, s.kernel_mass)?;
            let set =
                CoefficientSetI::new(s.a.sample(g), s.b.sample(g), s.lambda.sample(g), s.sigma.sample(g), kernel)?;
            let valid = crate::coefficients::validate_i(&set);
            let set = if s.center_drift && valid.passed() { center_drift_i(&set)? } else { set };
            return Ok(Coefficients::I(set));
        }
        if let Some(s) = &self.inline_ii {
            let set = CoefficientSetII::new(
                s.delta.sample(g),
                s.d.sample(g),
                s.g.sample(g),
                s.e.sample(g),
                s.f.sample(g),
                s.sigma.sample(g),
                s.alpha,
            )?;
            let valid = crate::coefficients::validate_ii(&set);
            let set = if s.center_drift && valid.passed() { center_drift_ii(&set)? } else { set };
            return Ok(Coefficients::II(set));
        }
        Ok(match part {
            Part::I => Coefficients::I(fixtures::const_1(n)?),
            Part::II => Coefficients::II(fixtures::stable_1(n)?),
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResidualSection {
    /// Reciprocals `1/ε`.
    pub eps: Vec<u32>,
    pub half_width: f64,
    pub per_cell: usize,
    pub bump_width: f64,
    /// Part II pairing function width and centre.
    pub pairing_width: f64,
    pub pairing_center: f64,
    pub dissipativity_trials: usize,
}

impl Default for ResidualSection {
    fn default() -> Self {
        Self {
            eps: vec![4, 8, 16],
            half_width: 2.0,
            per_cell: 32,
            bump_width: 0.3,
            pairing_width: 0.4,
            pairing_center: 0.1,
            dissipativity_trials: 100,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    pub eps: u32,
    pub t_end: f64,
    pub n_paths: usize,
    /// `dt = dt_safety·ε²`.
    pub dt_safety: f64,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self { eps: 16, t_end: 4.0, n_paths: 10_000, dt_safety: 0.005 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergeSection {
    pub eps: Vec<u32>,
    pub n_paths: usize,
    pub t_end: f64,
    pub half_width: f64,
    pub per_cell: usize,
    pub bump_width: f64,
    /// `dt = dt_factor·ε²` (Part I) or `dt_factor·ε^α` (Part II), capped by the step rule.
    pub dt_factor: f64,
    pub step_rule: StepRule,
    pub coupling: NoiseCoupling,
    pub functionals: Vec<Functional>,
    pub martingale: bool,
    pub martingale_grid: usize,
    pub record_stride: usize,
}

impl Default for ConvergeSection {
    fn default() -> Self {
        Self {
            eps: vec![4, 8, 16],
            n_paths: 2000,
            t_end: 0.25,
            half_width: 1.0,
            per_cell: 16,
            bump_width: 0.08,
            dt_factor: 0.1,
            step_rule: StepRule::FastScale,
            coupling: NoiseCoupling::Shared,
            functionals: vec![Functional::Identity, Functional::Square],
            martingale: true,
            martingale_grid: 5,
            record_stride: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZakaiSection {
    pub eps: Vec<u32>,
    pub t_end: f64,
    pub dt_factor: f64,
    pub n_scenarios: usize,
    pub n_particles: usize,
    pub substeps: usize,
    pub half_width: f64,
    pub per_cell: usize,
    pub settings: ZakaiSettings,
    /// Value of the constant observation function in the uninformative-observation check.
    pub constant_sigma: f64,
    pub write_densities: bool,
}

impl Default for ZakaiSection {
    fn default() -> Self {
        Self {
            eps: vec![8, 16],
            t_end: 0.25,
            dt_factor: 0.1,
            n_scenarios: 50,
            n_particles: 2000,
            substeps: 2,
            half_width: 3.0,
            per_cell: 32,
            settings: ZakaiSettings::default(),
            constant_sigma: 0.7,
            write_densities: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub closed_form: f64,
    pub q_agreement: f64,
    pub solvability: f64,
    pub q1_agreement: f64,
    pub cell_residual: f64,
    pub residual_floor: f64,
    pub residual_constant: f64,
    pub dissipativity: f64,
    pub se_multiple: f64,
    pub max_relative_se: f64,
    pub weak_relative: f64,
    pub uninformative: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            closed_form: 1e-10,
            q_agreement: 1e-8,
            solvability: 1e-8,
            q1_agreement: 1e-8,
            cell_residual: 1e-8,
            residual_floor: 1e-10,
            residual_constant: 1e-6,
            dissipativity: 1e-9,
            se_multiple: 3.0,
            max_relative_se: 0.05,
            weak_relative: 0.05,
            uninformative: 1e-6,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn check(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if self.jobs == Some(0) {
            return bad("jobs must be at least 1");
        }
        if !self.coefficients.grid.is_power_of_two() || self.coefficients.grid < 8 {
            return bad("coefficients.grid must be a power of two ≥ 8");
        }
        let r = &self.residual;
        if r.eps.is_empty() || r.eps.contains(&0) || !(r.half_width > 0.0) || r.per_cell < 4 || !(r.bump_width > 0.0) {
            return bad("residual: eps nonempty and positive, half_width > 0, per_cell ≥ 4, bump_width > 0");
        }
        let o = &self.oracle_q;
        if o.eps == 0 || !(o.t_end > 0.0) || o.n_paths < 2 || !(o.dt_safety > 0.0 && o.dt_safety <= 0.1) {
            return bad("oracle_q: eps ≥ 1, t_end > 0, n_paths ≥ 2, dt_safety in (0, 0.1]");
        }
        let c = &self.converge;
        if c.eps.contains(&0) || c.n_paths < 2 || !(c.t_end > 0.0) || !(c.dt_factor > 0.0) || c.functionals.is_empty() {
            return bad("converge: eps positive, n_paths ≥ 2, t_end > 0, dt_factor > 0, functionals nonempty");
        }
        if c.martingale_grid < 2
            || c.record_stride == 0
            || c.per_cell < 4
            || !(c.bump_width > 0.0)
            || !(c.half_width > 0.0)
        {
            return bad("converge: martingale_grid ≥ 2, record_stride ≥ 1, per_cell ≥ 4, widths positive");
        }
        let z = &self.zakai;
        if z.eps.is_empty() || z.eps.contains(&0) || z.n_scenarios < 2 || z.n_particles < 1000 || z.substeps == 0 {
            return bad("zakai: eps nonempty, n_scenarios ≥ 2, n_particles ≥ 1000, substeps ≥ 1");
        }
        if !(z.t_end > 0.0 && z.dt_factor > 0.0 && z.half_width > 0.0) || z.per_cell < 4 || z.settings.n_outputs == 0 {
            return bad("zakai: t_end, dt_factor, half_width positive; per_cell ≥ 4; n_outputs ≥ 1");
        }
        let t = &self.tolerances;
        let all = [
            t.closed_form,
            t.q_agreement,
            t.solvability,
            t.q1_agreement,
            t.cell_residual,
            t.residual_floor,
            t.residual_constant,
            t.dissipativity,
            t.se_multiple,
            t.max_relative_se,
            t.weak_relative,
            t.uninformative,
        ];
        if all.iter().any(|v| !(*v > 0.0)) {
            return bad("tolerances must be positive");
        }
        Ok(())
    }
}
