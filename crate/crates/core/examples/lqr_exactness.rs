//! Compares the moment bound on the LQR fixture with the Riccati solution.
//!
//! `cargo run --release --example lqr_exactness`

use momentctl::conic::SolverOptions;
use momentctl::fixtures;
use momentctl::oracle::solve_lqr;
use momentctl::relaxation::{solve_relaxation, RelaxationConfig, Scheme};

fn main() -> momentctl::Result<()> {
    let spec = fixtures::lqr();
    let exact = solve_lqr(1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 2000).value_at_x0;
    println!("riccati value     {exact:.9}");
    for scheme in [Scheme::Euler, Scheme::Trapezoid] {
        for steps in [50, 100, 200] {
            let cfg = RelaxationConfig::auto(&spec, 1, 1)?.with_steps(steps).with_scheme(scheme);
            let sol = solve_relaxation(&spec, &cfg, &SolverOptions::default())?;
            println!(
                "{scheme:<9} N={steps:<4} {:.9}  error {:+.2e}",
                sol.objective_value,
                sol.objective_value - exact
            );
        }
    }
    Ok(())
}
