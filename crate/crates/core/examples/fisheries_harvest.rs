//! Upper bounds on the expected harvest (a maximization with state and
//! control constraints) and the harvest achieved by an extracted policy.
//!
//! The optimal harvest is impulsive at both ends of the horizon, so the
//! relaxed control moments are not realizable by a state feedback and
//! higher-order fits blow up. The order-0 fit, `u(t) = mu[u](t)`, is used.
//!
//! `cargo run --release --example fisheries_harvest`

use momentctl::conic::SolverOptions;
use momentctl::extract::extract_controller;
use momentctl::fixtures;
use momentctl::relaxation::{solve_relaxation, RelaxationConfig};
use momentctl::sim::{simulate, SimConfig};

fn main() -> momentctl::Result<()> {
    let spec = fixtures::fisheries();
    let sim = SimConfig {
        clip_controls: true,
        ..SimConfig::default()
    };
    for dx in [2, 5, 10] {
        let cfg = RelaxationConfig::auto(&spec, dx, 1)?;
        let sol = solve_relaxation(&spec, &cfg, &SolverOptions::default())?;
        let ctrl = extract_controller(&sol, 0, 0)?;
        let rep = simulate(&spec, Some(&ctrl), &sim)?;
        println!(
            "d_x={dx:<3} K={} r={:?}  bound {:.7}  harvest {:.7} +- {:.1e}",
            cfg.order, cfg.powers, sol.objective_value, rep.mean_cost, rep.std_error
        );
    }
    Ok(())
}
