//! Cell-problem summary for the built-in and random coefficient sets.
//!
//! `cargo run --release --example cell_report -- [grid]`

use nonlocal_homog::cell::{solve_cell_i, solve_cell_ii};
use nonlocal_homog::fixtures::{fixture_i, random_admissible_i, random_admissible_ii, stable_1};

fn main() -> nonlocal_homog::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(64);
    println!("{:<12} {:>16} {:>10} {:>10} {:>10} {:>10}", "set", "Q", "Q-Q_alt", "Q1-Q", "min m", "max m");
    let mut sets =
        vec![("const-1".to_string(), fixture_i("const-1", n)?), ("varcoef-1".to_string(), fixture_i("varcoef-1", n)?)];
    for seed in 1..=3 {
        sets.push((format!("random-{seed}"), random_admissible_i(n, seed)?));
    }
    for (name, set) in &sets {
        let c = solve_cell_i(set)?;
        println!(
            "{name:<12} {:>16.12} {:>10.2e} {:>10.2e} {:>10.4} {:>10.4}",
            c.q,
            c.q - c.q_alt,
            c.q1 - c.q,
            c.m.min(),
            c.m.max()
        );
    }
    println!();
    println!("{:<12} {:>12} {:>12} {:>12} {:>12}", "set", "δ̄α", "ḡ", "f̄", "σ̄");
    let mut sets = vec![("stable-1".to_string(), stable_1(n)?)];
    for seed in 1..=2 {
        sets.push((format!("random-{seed}"), random_admissible_ii(n, seed)?));
    }
    for (name, set) in &sets {
        let e = solve_cell_ii(set)?.effective;
        println!("{name:<12} {:>12.8} {:>12.8} {:>12.8} {:>12.8}", e.delta_bar_alpha, e.g_bar, e.f_bar, e.sigma_bar);
    }
    Ok(())
}
