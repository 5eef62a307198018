//! Monte-Carlo estimate of the effective diffusivity against the cell-problem value.
//!
//! `cargo run --release --example q_oracle -- [dt_safety] [paths]`

use nonlocal_homog::cell::solve_cell_i;
use nonlocal_homog::coefficients::Epsilon;
use nonlocal_homog::fixtures::varcoef_1;
use nonlocal_homog::particle::estimate_q_monte_carlo;

fn main() -> nonlocal_homog::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let safety: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.02);
    let paths: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(10_000);
    let set = varcoef_1(64)?;
    let cell = solve_cell_i(&set)?;
    let t0 = std::time::Instant::now();
    let est = estimate_q_monte_carlo(&set, Epsilon::from_reciprocal(16)?, 4.0, paths, 2024, safety)?;
    let z = (est.q_hat.value - cell.q) / est.q_hat.se;
    println!("Q (cell)     = {:.10}", cell.q);
    println!("Q (particles)= {:.10} ± {:.3e}  z = {z:+.2}", est.q_hat.value, est.q_hat.se);
    println!("dt = {:.3e}, paths = {paths}, {:.1} s", est.dt, t0.elapsed().as_secs_f64());
    Ok(())
}
