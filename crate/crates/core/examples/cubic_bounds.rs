//! Lower bounds on the cubic problem as the moment order grows, and the
//! cost of the extracted controller next to the uncontrolled cost.
//!
//! `cargo run --release --example cubic_bounds`

use momentctl::conic::SolverOptions;
use momentctl::extract::extract_controller;
use momentctl::fixtures;
use momentctl::relaxation::{solve_relaxation, RelaxationConfig};
use momentctl::sim::{simulate, SimConfig};

fn main() -> momentctl::Result<()> {
    let spec = fixtures::cubic();
    let sim = SimConfig::default();
    println!("d_x  K   v_sdp");
    let mut best = None;
    for dx in [2, 3, 5, 9] {
        let cfg = RelaxationConfig::auto(&spec, dx, 1)?;
        let sol = solve_relaxation(&spec, &cfg, &SolverOptions::default())?;
        println!("{dx:<4} {:<3} {:.6}", cfg.order, sol.objective_value);
        if dx == 3 {
            best = Some(sol);
        }
    }
    let sol = best.expect("d_x = 3 was solved");
    let ctrl = extract_controller(&sol, 3, 3)?;
    let closed = simulate(&spec, Some(&ctrl), &sim)?;
    let open = simulate(&spec, None, &sim)?;
    println!("extracted controller  {:.4} +- {:.4}", closed.mean_cost, closed.std_error);
    println!("no control            {:.4} +- {:.4}", open.mean_cost, open.std_error);
    Ok(())
}
