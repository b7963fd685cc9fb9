//! Recovers the affine feedback `u = 0.5 - x` from exact Gaussian moments and
//! from simulated moments.
//!
//! `cargo run --release --example controller_recovery`

use momentctl::extract::{extract_controller, PolynomialController};
use momentctl::moments::MomentKey;
use momentctl::poly::Polynomial;
use momentctl::relaxation::{MomentSolution, ProblemSpec};
use momentctl::sim::{simulate, SimConfig};

/// Raw moments of `N(m, v)` up to `x^4`.
fn gaussian(m: f64, v: f64) -> [f64; 5] {
    [1.0, m, m * m + v, m * m * m + 3.0 * m * v, m.powi(4) + 6.0 * m * m * v + 3.0 * v * v]
}

fn solution_from(times: Vec<f64>, rows: Vec<[f64; 5]>) -> MomentSolution {
    // mu[x^k u] = 0.5 mu[x^k] - mu[x^{k+1}]
    let mut keys: Vec<MomentKey> = (1..=4).map(|i| MomentKey::new(i, 0)).collect();
    keys.extend((0..=1).map(|i| MomentKey::new(i, 1)));
    let values = rows
        .iter()
        .map(|mu| {
            let mut v: Vec<f64> = mu[1..].to_vec();
            v.extend((0..=1).map(|k| 0.5 * mu[k] - mu[k + 1]));
            v
        })
        .collect();
    MomentSolution {
        times,
        keys,
        values,
        objective_value: 0.0,
        status: momentctl::conic::SolverStatus::Optimal,
        residuals: Default::default(),
        iterations: 0,
    }
}

fn main() -> momentctl::Result<()> {
    let times: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
    let exact = solution_from(
        times.clone(),
        times.iter().map(|&t| gaussian(0.5 * t, 0.3 + t)).collect(),
    );
    let ctrl = extract_controller(&exact, 1, 1)?;
    println!("exact moments:     p = {:?}", ctrl.coeffs[5]);

    // dx = u dt + dw from x0 = 0 under u = 0.5 - x
    let spec = ProblemSpec {
        drift: Polynomial::u(),
        diffusion: Polynomial::one(),
        running_cost: Polynomial::zero(),
        terminal_cost: Polynomial::zero(),
        constraints: vec![],
        horizon: 1.0,
        x0: 0.0,
        maximize: false,
    };
    let truth = PolynomialController::constant(times, vec![0.5, -1.0]);
    let sim = SimConfig {
        trials: 20_000,
        record_moments_up_to: 2,
        record_steps: 10,
        ..SimConfig::default()
    };
    let rep = simulate(&spec, Some(&truth), &sim)?;
    let mc = MomentSolution {
        times: rep.times.clone(),
        keys: rep.keys.clone(),
        values: rep.moments.clone(),
        ..exact
    };
    let ctrl = extract_controller(&mc, 1, 1)?;
    println!("simulated moments: p = {:?}", ctrl.coeffs[5]);
    Ok(())
}
