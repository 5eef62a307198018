//! Empirical characteristic function of the symmetric stable sampler.
//!
//! `cargo run --release --example stable_sampler -- [draws]`

use nonlocal_homog::particle::{standard_stable, stream};
use nonlocal_homog::stats::empirical_characteristic;

fn main() {
    let draws: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1_000_000);
    println!("{:>6} {:>6} {:>12} {:>12} {:>8}", "alpha", "theta", "ecf", "exact", "z");
    for (i, alpha) in [0.8, 1.2, 1.5, 1.9].into_iter().enumerate() {
        let mut rng = stream(99, i as u64);
        let x: Vec<f64> = (0..draws).map(|_| standard_stable(alpha, &mut rng)).collect();
        for theta in [0.5f64, 1.0, 2.0] {
            let e = empirical_characteristic(&x, theta);
            let exact = (-theta.powf(alpha)).exp();
            println!("{alpha:>6} {theta:>6} {:>12.6} {exact:>12.6} {:>+8.2}", e.value, (e.value - exact) / e.se);
        }
    }
}
