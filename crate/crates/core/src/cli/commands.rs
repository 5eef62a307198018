use std::path::Path;

use serde_json::json;

use super::config::{Coefficients, RunConfig};
use crate::cell::{solve_cell_i, solve_cell_ii, CellSolutionI, CellSolutionII};
use crate::coefficients::{validate_i, validate_ii, CoefficientSetI, Epsilon, ValidationReport};
use crate::error::{Error, Result};
use crate::operators::{dissipativity_check_i, dissipativity_check_ii, residual_part_i, residual_part_ii, LineGrid};
use crate::particle::estimate_q_monte_carlo;
use crate::report::{fmt_list, Summary, Table, Verdict};
use crate::row;
use crate::spde::{default_battery, run_ensemble, InitialDatum, Part, SpdeConfig, SpdeModel};
use crate::spectral::PeriodicField;
use crate::stats::{martingale_residual, weak_error, weak_study, Functional, MartingaleInput};
use crate::zakai::{
    posterior_distance, run_filter_experiment_i, run_filter_experiment_ii, FilterExperiment, FilterRun,
};

fn eps(k: u32) -> Result<Epsilon> {
    Epsilon::from_reciprocal(k)
}

fn build_validated(cfg: &RunConfig) -> Result<Coefficients> {
    let set = cfg.coefficients.build()?;
    validation(&set).into_result()?;
    Ok(set)
}

fn validation(set: &Coefficients) -> ValidationReport {
    match set {
        Coefficients::I(s) => validate_i(s),
        Coefficients::II(s) => validate_ii(s),
    }
}

fn is_constant(f: &PeriodicField) -> bool {
    f.max() - f.min() <= 1e-14 * f.max_abs().max(1.0)
}

fn constant_set(s: &CoefficientSetI) -> bool {
    is_constant(&s.a) && is_constant(&s.b) && is_constant(&s.lambda)
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

pub fn cell(cfg: &RunConfig, out: &Path) -> Result<Summary> {
    let t = &cfg.tolerances;
    let set = build_validated(cfg)?;
    let mut report = Table::new(&["quantity", "value", "threshold", "verdict"]);
    let mut verdicts = Vec::new();
    match &set {
        Coefficients::I(s) => {
            let c = solve_cell_i(s)?;
            write_fields_i(&c, out)?;
            for (name, v) in [
                ("Q", c.q),
                ("Q_alt", c.q_alt),
                ("Q1", c.q1),
                ("sigma_bar", c.sigma_bar),
                ("sigma_sq_bar", c.sigma_sq_bar),
                ("kernel_mass", c.kernel_mass),
                ("kernel_second_moment", c.kernel_second_moment),
                ("centering", c.centering),
            ] {
                report.push(row![name, v, "", ""])?;
            }
            if constant_set(s) {
                let closed = s.a.values()[0] + 0.5 * s.lambda.values()[0] * c.kernel_second_moment;
                let err = (c.q - closed).abs().max((c.m.max() - 1.0).abs()).max(c.chi.max_abs());
                verdicts.push(Verdict::new(
                    1,
                    "closed-form Q",
                    err <= t.closed_form,
                    err,
                    t.closed_form,
                    format!("Q = {closed:.16e}"),
                ));
                report.push(row!["Q_closed_form", closed, t.closed_form, err <= t.closed_form])?;
            }
            let q_rel = relative(c.q, c.q_alt);
            verdicts.push(Verdict::new(2, "two-route Q agreement", q_rel <= t.q_agreement, q_rel, t.q_agreement, ""));
            let l = c.solvability_l.abs();
            verdicts.push(Verdict::new(3, "solvability integral", l <= t.solvability, l, t.solvability, ""));
            let q1 = relative(c.q1, c.q);
            verdicts.push(Verdict::new(4, "Q1 equals Q", q1 <= t.q1_agreement, q1, t.q1_agreement, ""));
            let r = c.diagnostics.max_residual();
            verdicts.push(Verdict::new(0, "cell residuals", r <= t.cell_residual, r, t.cell_residual, ""));
            add_diagnostics(&mut report, &c.diagnostics)?;
        }
        Coefficients::II(s) => {
            let c = solve_cell_ii(s)?;
            write_fields_ii(&c, out)?;
            let e = c.effective;
            for (name, v) in [
                ("delta_bar_alpha", e.delta_bar_alpha),
                ("g_bar", e.g_bar),
                ("f_bar", e.f_bar),
                ("sigma_bar", e.sigma_bar),
                ("sigma_sq_bar", e.sigma_sq_bar),
                ("centering", c.centering),
            ] {
                report.push(row![name, v, "", ""])?;
            }
            let solv = c.diagnostics.solvability.values().fold(0.0, |a: f64, b| a.max(b.abs()));
            verdicts.push(Verdict::new(3, "solvability integrals", solv <= t.solvability, solv, t.solvability, ""));
            let r = c.diagnostics.max_residual();
            verdicts.push(Verdict::new(0, "cell residuals", r <= t.cell_residual, r, t.cell_residual, ""));
            add_diagnostics(&mut report, &c.diagnostics)?;
        }
    }
    for v in &verdicts {
        report.push(row![v.name.clone(), v.measured, v.threshold, v.passed])?;
    }
    report.write(&out.join("cell_report.csv"))?;
    Ok(Summary::new("cell", cfg.seed, verdicts, json!({ "part": set.part() })))
}

fn add_diagnostics(t: &mut Table, d: &crate::cell::Diagnostics) -> Result<()> {
    for (k, v) in &d.residuals {
        t.push(row![format!("residual {k}"), *v, "", ""])?;
    }
    for (k, v) in &d.solvability {
        t.push(row![format!("solvability {k}"), *v, "", ""])?;
    }
    Ok(())
}

fn write_fields_i(c: &CellSolutionI, out: &Path) -> Result<()> {
    let mut t = Table::new(&["y", "m", "chi", "h1", "h2", "chi1"]);
    let g = c.m.grid();
    for j in 0..g.n() {
        t.push(row![
            g.point(j),
            c.m.values()[j],
            c.chi.values()[j],
            c.h1.values()[j],
            c.h2.values()[j],
            c.chi1.values()[j]
        ])?;
    }
    t.write(&out.join("cell_fields.csv"))
}

fn write_fields_ii(c: &CellSolutionII, out: &Path) -> Result<()> {
    let mut t = Table::new(&["y", "m1", "h3"]);
    let g = c.m1.grid();
    for j in 0..g.n() {
        t.push(row![g.point(j), c.m1.values()[j], c.h3.values()[j]])?;
    }
    t.write(&out.join("cell_fields.csv"))
}

/// Every consecutive pair strictly decreases unless the earlier value already sits at the floor.
fn decreasing_beyond_floor(values: &[f64], floor: f64) -> bool {
    values.windows(2).all(|w| w[1] < w[0] || w[0] <= floor)
}

pub fn residual(cfg: &RunConfig, out: &Path) -> Result<Summary> {
    let r = &cfg.residual;
    let t = &cfg.tolerances;
    let set = build_validated(cfg)?;
    let mut table = Table::new(&["eps", "residual", "dissipativity_max"]);
    let mut residuals = Vec::new();
    let mut worst_form = f64::NEG_INFINITY;
    let mut constant = false;
    for &k in &r.eps {
        let e = eps(k)?;
        let grid = LineGrid::with_cells(r.half_width, e, r.per_cell)?;
        let xi = grid.gaussian_bump(0.0, r.bump_width);
        let (res, form) = match &set {
            Coefficients::I(s) => {
                let c = solve_cell_i(s)?;
                constant = constant_set(s);
                (
                    residual_part_i(&xi, &c, s, e, grid)?,
                    dissipativity_check_i(s, &c.m, e, grid, r.dissipativity_trials, cfg.seed)?,
                )
            }
            Coefficients::II(s) => {
                let c = solve_cell_ii(s)?;
                let psi = grid.gaussian_bump(r.pairing_center, r.pairing_width);
                (
                    residual_part_ii(&xi, &psi, &c, s, e, grid)?,
                    dissipativity_check_ii(s, &c.m1, e, grid, r.dissipativity_trials, cfg.seed)?,
                )
            }
        };
        table.push(row![1.0 / k as f64, res, form])?;
        residuals.push(res);
        worst_form = worst_form.max(form);
    }
    table.write(&out.join("residual.csv"))?;
    let mut verdicts = Vec::new();
    let dec = decreasing_beyond_floor(&residuals, t.residual_floor);
    let last = *residuals.last().unwrap_or(&f64::NAN);
    verdicts.push(Verdict::new(6, "residual decreasing in eps", dec, last, t.residual_floor, fmt_list(&residuals)));
    if constant {
        let max = residuals.iter().cloned().fold(0.0, f64::max);
        verdicts.push(Verdict::new(
            6,
            "constant-coefficient residual",
            max <= t.residual_constant,
            max,
            t.residual_constant,
            "",
        ));
    }
    verdicts.push(Verdict::new(
        10,
        "weighted form nonpositive",
        worst_form <= t.dissipativity,
        worst_form,
        t.dissipativity,
        "",
    ));
    Ok(Summary::new("residual", cfg.seed, verdicts, json!({ "part": set.part(), "residuals": residuals })))
}

pub fn oracle_q(cfg: &RunConfig, out: &Path) -> Result<Summary> {
    let o = &cfg.oracle_q;
    let t = &cfg.tolerances;
    let Coefficients::I(set) = build_validated(cfg)? else {
        return Err(Error::Config("oracle-q needs a Part I coefficient set".into()));
    };
    let cell = solve_cell_i(&set)?;
    let est = estimate_q_monte_carlo(&set, eps(o.eps)?, o.t_end, o.n_paths, cfg.seed, o.dt_safety)?;
    let q_hat = est.q_hat;
    let z = (q_hat.value - cell.q) / q_hat.se;
    let mut table = Table::new(&["eps", "t_end", "dt", "n_paths", "q", "q_hat", "se", "z"]);
    table.push(row![est.eps, est.t_end, est.dt, est.n_paths, cell.q, q_hat.value, q_hat.se, z])?;
    table.write(&out.join("oracle_q.csv"))?;
    let verdicts = vec![
        Verdict::new(
            5,
            "Q inside Monte-Carlo bracket",
            q_hat.brackets(cell.q, t.se_multiple),
            z.abs(),
            t.se_multiple,
            "",
        ),
        Verdict::new(
            5,
            "relative standard error",
            q_hat.se / cell.q <= t.max_relative_se,
            q_hat.se / cell.q,
            t.max_relative_se,
            "",
        ),
    ];
    Ok(Summary::new("oracle-q", cfg.seed, verdicts, json!({ "q": cell.q, "estimate": est })))
}

pub fn converge(cfg: &RunConfig, out: &Path) -> Result<Summary> {
    let c = &cfg.converge;
    let t = &cfg.tolerances;
    let set = build_validated(cfg)?;
    let needed = match set.part() {
        Part::I => 3,
        Part::II => 2,
    };
    if c.eps.len() < needed {
        return Err(Error::Config(format!(
            "converge: monotonicity needs at least {needed} eps values, got {}",
            c.eps.len()
        )));
    }
    if c.eps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("converge: eps reciprocals must increase".into()));
    }
    let (cell_i, cell_ii) = match &set {
        Coefficients::I(s) => (Some(solve_cell_i(s)?), None),
        Coefficients::II(s) => (None, Some(solve_cell_ii(s)?)),
    };
    let mut reports = Vec::new();
    let mut eps_values = Vec::new();
    let mut martingale: Vec<MartingaleInput> = Vec::new();
    let mut battery_names = Vec::new();
    let mut points = Table::new(&[
        "eps",
        "time",
        "xi",
        "functional",
        "heterogeneous",
        "heterogeneous_se",
        "homogenized",
        "homogenized_se",
        "difference",
        "combined_se",
        "paired_se",
        "ks",
    ]);
    let mut runs = Vec::new();
    for &k in &c.eps {
        let e = eps(k)?;
        let grid = LineGrid::with_cells(c.half_width, e, c.per_cell)?;
        let (dt, model) = match &set {
            Coefficients::I(s) => {
                (c.dt_factor * e.value().powi(2), SpdeModel::I { set: s, cell: cell_i.as_ref().unwrap() })
            }
            Coefficients::II(s) => {
                (c.dt_factor * e.value().powf(s.alpha), SpdeModel::II { set: s, cell: cell_ii.as_ref().unwrap() })
            }
        };
        let mut sc = SpdeConfig::new(set.part(), e, grid, dt, c.t_end, c.n_paths, cfg.seed);
        sc.step_rule = c.step_rule;
        sc.coupling = c.coupling;
        sc.record_stride = c.record_stride;
        sc.initial = InitialDatum::GaussianBump { center: 0.0, width: c.bump_width * c.half_width };
        let battery = default_battery(grid);
        let run = run_ensemble(&sc, model, &battery)?;
        let rep = weak_error(&run.heterogeneous, &run.homogenized, &c.functionals)?;
        for p in &rep.points {
            points.push(row![
                e.value(),
                p.time,
                battery[p.xi].name.clone(),
                p.functional.name(),
                p.heterogeneous.value,
                p.heterogeneous.se,
                p.homogenized.value,
                p.homogenized.se,
                p.difference,
                p.combined_se,
                p.paired_se.unwrap_or(f64::NAN),
                p.ks
            ])?;
        }
        runs.push(json!({
            "eps": e.value(),
            "dt": run.dt,
            "n_steps": run.n_steps,
            "energy": run.energy,
            "increment_variance_ratio": run.increment_variance_ratio,
            "boundary_mass": run.boundary_mass,
        }));
        if k == *c.eps.last().unwrap() {
            martingale = run.martingale;
            battery_names = run.battery;
        }
        eps_values.push(e.value());
        reports.push(rep);
    }
    points.write(&out.join("weak_points.csv"))?;
    let study = weak_study(&eps_values, &reports, t.se_multiple)?;
    let mut table = Table::new(&["eps", "functional", "distance", "se", "relative"]);
    for row in &study.rows {
        table.push(row![row.eps, row.functional.name(), row.distance, row.se, row.relative])?;
    }
    table.write(&out.join("weak_error.csv"))?;
    let mut verdicts = Vec::new();
    for v in &study.verdicts {
        let name = format!("weak distance {} nonincreasing", v.functional.name());
        verdicts.push(Verdict::new(
            7,
            &name,
            v.nonincreasing,
            v.final_relative,
            t.se_multiple,
            format!("observed slope {:.3}", v.observed_slope),
        ));
        let name = format!("weak distance {} at smallest eps", v.functional.name());
        verdicts.push(Verdict::new(
            7,
            &name,
            v.final_relative <= t.weak_relative,
            v.final_relative,
            t.weak_relative,
            "",
        ));
    }
    if c.martingale {
        let mut mt = Table::new(&["xi", "functional", "control", "s", "t", "mean", "se"]);
        for (xi, input) in martingale.iter().enumerate() {
            let control = MartingaleInput {
                drift_pairing: input.drift_pairing.iter().map(|r| r.iter().map(|v| 1.5 * v).collect()).collect(),
                ..input.clone()
            };
            for phi in [Functional::Identity, Functional::Square] {
                let good = martingale_residual(input, phi, c.martingale_grid)?;
                let bad = martingale_residual(&control, phi, c.martingale_grid)?;
                for (label, rep) in [("none", &good), ("drift x1.5", &bad)] {
                    for en in &rep.entries {
                        mt.push(row![battery_names[xi].clone(), phi.name(), label, en.s, en.t, en.mean, en.se])?;
                    }
                }
                let name = format!("martingale {} {}", battery_names[xi], phi.name());
                verdicts.push(Verdict::new(8, &name, good.within(t.se_multiple), good.max_z, t.se_multiple, ""));
                let name = format!("martingale control {} {}", battery_names[xi], phi.name());
                verdicts.push(Verdict::new(
                    8,
                    &name,
                    !bad.within(t.se_multiple),
                    bad.max_z,
                    t.se_multiple,
                    "must exceed",
                ));
            }
        }
        mt.write(&out.join("martingale.csv"))?;
    }
    Ok(Summary::new("converge", cfg.seed, verdicts, json!({ "part": set.part(), "runs": runs })))
}

pub fn zakai(cfg: &RunConfig, out: &Path) -> Result<Summary> {
    let z = &cfg.zakai;
    let t = &cfg.tolerances;
    let set = build_validated(cfg)?;
    let experiment = |k: u32, n_scenarios: usize| FilterExperiment {
        eps_reciprocal: k,
        t_end: z.t_end,
        dt_factor: z.dt_factor,
        n_scenarios,
        n_particles: z.n_particles,
        substeps: z.substeps,
        half_width: z.half_width,
        per_cell: z.per_cell,
        seed: cfg.seed,
        settings: z.settings.clone(),
    };
    let run = |exp: &FilterExperiment, set: &Coefficients| -> Result<FilterRun> {
        match set {
            Coefficients::I(s) => run_filter_experiment_i(s, exp),
            Coefficients::II(s) => run_filter_experiment_ii(s, exp),
        }
    };
    let mut table = Table::new(&["eps", "scenario", "time", "method", "mean", "variance", "l1_to_particle"]);
    let mut stats = Table::new(&["eps", "time", "het_minus_particle", "se", "hom_minus_het", "se"]);
    let mut densities = Table::new(&["eps", "scenario", "time", "method", "x", "density"]);
    let mut verdicts = Vec::new();
    let mut gaps = Vec::new();
    let mut details = Vec::new();
    for (i, &k) in z.eps.iter().enumerate() {
        let exp = experiment(k, z.n_scenarios);
        let r = run(&exp, &set)?;
        let grid = LineGrid::with_cells(z.half_width, eps(k)?, z.per_cell)?;
        for (s, pf) in r.particle.iter().enumerate() {
            for est in [&r.heterogeneous[s], &r.homogenized[s], pf] {
                let gaps = posterior_distance(grid, est, pf)?;
                for (j, g) in gaps.iter().enumerate() {
                    table.push(row![exp_eps(k), s, g.time, est.method.clone(), est.mean[j], est.variance[j], g.l1])?;
                    if z.write_densities {
                        for (x, p) in grid.points().iter().zip(&est.density[j]) {
                            densities.push(row![exp_eps(k), s, g.time, est.method.clone(), *x, *p])?;
                        }
                    }
                }
            }
        }
        let c = &r.comparison;
        for (j, time) in c.times.iter().enumerate() {
            let (a, b) = (c.heterogeneous_vs_particle[j], c.homogenized_vs_heterogeneous[j]);
            stats.push(row![exp_eps(k), *time, a.value, a.se, b.value, b.se])?;
        }
        if i == 0 {
            let z_het = max_z(&c.heterogeneous_vs_particle);
            verdicts.push(Verdict::new(
                11,
                "heterogeneous Zakai vs particle filter",
                c.het_particle_within(t.se_multiple),
                z_het,
                t.se_multiple,
                format!("eps 1/{k}"),
            ));
            let z_hom = max_z(&c.homogenized_vs_heterogeneous);
            verdicts.push(Verdict::new(
                11,
                "homogenized vs heterogeneous Zakai",
                c.hom_het_within(t.se_multiple),
                z_hom,
                t.se_multiple,
                format!("eps 1/{k}"),
            ));
        }
        gaps.push(c.homogenized_gap_rms);
        let (post, prior) = c.tracking_error.iter().fold((0.0, 0.0), |a, e| (a.0 + e.0, a.1 + e.1));
        details.push(json!({ "eps": exp_eps(k), "gap_rms": c.homogenized_gap_rms, "tracking_posterior": post, "tracking_prior": prior, "clipped_mass": c.clipped_mass }));
    }
    if gaps.len() >= 2 {
        let shrinking = gaps.windows(2).all(|w| w[1] < w[0]);
        verdicts.push(Verdict::new(
            11,
            "homogenization gap shrinking",
            shrinking,
            *gaps.last().unwrap(),
            gaps[0],
            fmt_list(&gaps),
        ));
    }
    let quiet = match &set {
        Coefficients::I(s) => Coefficients::I(s.with_sigma(PeriodicField::constant(s.grid(), z.constant_sigma))),
        Coefficients::II(s) => {
            let mut s = s.clone();
            s.sigma = PeriodicField::constant(s.grid(), z.constant_sigma);
            Coefficients::II(s)
        }
    };
    let exp = experiment(z.eps[0], 2);
    let r = run(&exp, &quiet)?;
    let grid = LineGrid::with_cells(z.half_width, eps(z.eps[0])?, z.per_cell)?;
    let mut worst: f64 = 0.0;
    for est in &r.heterogeneous {
        for g in posterior_distance(grid, est, &r.prior_evolution)? {
            worst = worst.max(g.l1).max(g.mean_gap.abs());
        }
    }
    verdicts.push(Verdict::new(
        11,
        "constant observation function is uninformative",
        worst <= t.uninformative,
        worst,
        t.uninformative,
        "",
    ));
    table.write(&out.join("posterior.csv"))?;
    stats.write(&out.join("posterior_gaps.csv"))?;
    if z.write_densities {
        densities.write(&out.join("posterior_density.csv"))?;
    }
    Ok(Summary::new("zakai", cfg.seed, verdicts, json!({ "part": set.part(), "runs": details })))
}

fn exp_eps(k: u32) -> f64 {
    1.0 / k as f64
}

fn max_z(v: &[crate::stats::Estimate]) -> f64 {
    v.iter().map(|e| if e.se > 0.0 { e.value.abs() / e.se } else { 0.0 }).fold(0.0, f64::max)
}

pub fn validate(cfg: &RunConfig, out: &Path) -> Result<Summary> {
    let set = cfg.coefficients.build()?;
    let report = validation(&set);
    let mut table = Table::new(&["assumption", "description", "measured", "verdict"]);
    for c in &report.checks {
        table.push(row![c.assumption, c.description.clone(), c.measured, c.passed])?;
    }
    if report.passed() {
        let centering = match &set {
            Coefficients::I(s) => solve_cell_i(s).map(|c| c.centering),
            Coefficients::II(s) => solve_cell_ii(s).map(|c| c.centering),
        };
        match centering {
            Ok(v) => table.push(row!["v", "centering of the drift against the invariant density", v, true])?,
            Err(e) => {
                table.push(row!["v", e.to_string(), f64::NAN, false])?;
                table.write(&out.join("validation.csv"))?;
                return Err(e);
            }
        }
    }
    table.write(&out.join("validation.csv"))?;
    report.into_result()?;
    Ok(Summary::new("validate", cfg.seed, vec![], json!({ "part": set.part(), "checks": table.len() })))
}
