//! Heterogeneous, homogenized and particle filters for a stable-driven signal.
//!
//! `cargo run --release --example filter_stable -- [eps_reciprocal] [scenarios]`

use nonlocal_homog::fixtures::stable_1;
use nonlocal_homog::zakai::{run_filter_experiment_ii, FilterExperiment, ZakaiSettings};

fn main() -> nonlocal_homog::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let k: u32 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let scenarios: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(10);
    let exp = FilterExperiment {
        eps_reciprocal: k,
        t_end: 0.25,
        dt_factor: 0.1,
        n_scenarios: scenarios,
        n_particles: 2000,
        substeps: 2,
        half_width: 3.0,
        per_cell: 32,
        seed: 5,
        settings: ZakaiSettings::default(),
    };
    let t0 = std::time::Instant::now();
    let run = run_filter_experiment_ii(&stable_1(64)?, &exp)?;
    let c = &run.comparison;
    println!("{:>8} {:>14} {:>14}", "t", "het - pf", "hom - het");
    for (i, t) in c.times.iter().enumerate() {
        let a = &c.heterogeneous_vs_particle[i];
        let b = &c.homogenized_vs_heterogeneous[i];
        println!("{t:>8.4} {:>+8.2e}±{:.0e} {:>+8.2e}±{:.0e}", a.value, a.se, b.value, b.se);
    }
    println!(
        "gap rms {:.3e}, within 3 SE: {} / {}",
        c.homogenized_gap_rms,
        c.het_particle_within(3.0),
        c.hom_het_within(3.0)
    );
    println!("{:.1} s", t0.elapsed().as_secs_f64());
    Ok(())
}
