//! Weak distance between heterogeneous and homogenized SPDE laws as ε shrinks.
//!
//! `cargo run --release --example weak_convergence -- [paths] [t_end] [i|ii]`

use nonlocal_homog::cell::{solve_cell_i, solve_cell_ii};
use nonlocal_homog::coefficients::Epsilon;
use nonlocal_homog::fixtures::{stable_1, varcoef_1};
use nonlocal_homog::operators::LineGrid;
use nonlocal_homog::spde::{default_battery, run_ensemble, InitialDatum, Part, SpdeConfig, SpdeModel, StepRule};
use nonlocal_homog::stats::{weak_error, weak_study, Functional};

fn main() -> nonlocal_homog::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let paths: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let t_end: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.25);
    let part_ii = args.get(3).is_some_and(|s| s == "ii");
    let set = varcoef_1(32)?;
    let cell = solve_cell_i(&set)?;
    let set2 = stable_1(32)?;
    let cell2 = solve_cell_ii(&set2)?;
    let ks: &[u32] = if part_ii { &[4, 8] } else { &[4, 8, 16] };
    let mut eps_list = Vec::new();
    let mut reports = Vec::new();
    for &k in ks {
        let eps = Epsilon::from_reciprocal(k)?;
        let grid = LineGrid::with_cells(1.0, eps, 16)?;
        let (part, dt, model) = if part_ii {
            (Part::II, 0.1 * eps.value().powf(set2.alpha), SpdeModel::II { set: &set2, cell: &cell2 })
        } else {
            (Part::I, 0.1 * eps.value().powi(2), SpdeModel::I { set: &set, cell: &cell })
        };
        let mut cfg = SpdeConfig::new(part, eps, grid, dt, t_end, paths, 7);
        cfg.step_rule = StepRule::FastScale;
        cfg.initial = InitialDatum::GaussianBump { center: 0.0, width: 0.08 };
        let t0 = std::time::Instant::now();
        let run = run_ensemble(&cfg, model, &default_battery(grid))?;
        let rep = weak_error(&run.heterogeneous, &run.homogenized, &[Functional::Identity, Functional::Square])?;
        for d in &rep.distances {
            println!(
                "eps 1/{k:<3} {:>4}: d = {:.4e} ± {:.1e}  relative {:.4}",
                d.functional.name(),
                d.distance,
                d.se,
                d.relative
            );
        }
        println!("           {} steps, {:.1} s", run.n_steps, t0.elapsed().as_secs_f64());
        eps_list.push(eps.value());
        reports.push(rep);
    }
    let study = weak_study(&eps_list, &reports, 3.0)?;
    for v in &study.verdicts {
        println!(
            "{:>4}: nonincreasing {}, final relative {:.4}, slope {:.2}",
            v.functional.name(),
            v.nonincreasing,
            v.final_relative,
            v.observed_slope
        );
    }
    Ok(())
}
