//! Heterogeneous Zakai vs particle filter vs homogenized Zakai on `varcoef-1`.
//!
//! cargo run --release --example filter_sandwich -- [scenarios] [particles] [per_cell] [half_width]

use std::time::Instant;

use nonlocal_homog::fixtures;
use nonlocal_homog::zakai::{run_filter_experiment_i, FilterExperiment, ZakaiSettings};

fn main() -> nonlocal_homog::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let arg = |i: usize| args.get(i).and_then(|s| s.parse::<f64>().ok());
    let scenarios = arg(1).unwrap_or(50.0) as usize;
    let particles = arg(2).unwrap_or(2000.0) as usize;
    let per_cell = arg(3).unwrap_or(32.0) as usize;
    let half_width = arg(4).unwrap_or(3.0);
    let set = fixtures::varcoef_1(64)?;
    for k in [8, 16] {
        let start = Instant::now();
        let exp = FilterExperiment {
            eps_reciprocal: k,
            t_end: 0.25,
            dt_factor: 0.1,
            n_scenarios: scenarios,
            n_particles: particles,
            substeps: 2,
            half_width,
            per_cell,
            seed: 11,
            settings: ZakaiSettings::default(),
        };
        let run = run_filter_experiment_i(&set, &exp)?;
        let c = &run.comparison;
        println!("eps 1/{k}  ({:.1} s)", start.elapsed().as_secs_f64());
        for (j, t) in c.times.iter().enumerate() {
            let a = c.heterogeneous_vs_particle[j];
            let b = c.homogenized_vs_heterogeneous[j];
            println!("  t {t:.3}  het-pf {:+.2e} ± {:.1e}   hom-het {:+.2e} ± {:.1e}", a.value, a.se, b.value, b.se);
        }
        let min = run.heterogeneous.iter().map(|e| e.min_value).fold(0.0, f64::min);
        let (post, prior) = c.tracking_error.iter().fold((0.0, 0.0), |acc, e| (acc.0 + e.0, acc.1 + e.1));
        println!(
            "  gap rms {:.3e}  tracking {post:.6e} vs prior {prior:.6e}  min density {min:.1e}",
            c.homogenized_gap_rms
        );
    }
    Ok(())
}
