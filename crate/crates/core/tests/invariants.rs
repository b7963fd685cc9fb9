//! Numerical and statistical invariants of the relaxation, extraction and
//! simulation layers.

use momentctl::conic::psd::min_eigenvalue;
use momentctl::conic::SolverOptions;
use momentctl::extract::{extract_controller, PolynomialController};
use momentctl::fixtures;
use momentctl::moments::MomentKey;
use momentctl::oracle::solve_lqr;
use momentctl::relaxation::{assemble, solve_relaxation, RelaxationConfig, Scheme};
use momentctl::sim::{simulate, SimConfig, SimReport};

fn oracle_controller(steps: usize) -> PolynomialController {
    let lqr = solve_lqr(1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, steps);
    PolynomialController {
        order: 1,
        grid: lqr.grid.clone(),
        coeffs: lqr.gain.iter().map(|&l| vec![0.0, l]).collect(),
        interpolation: Default::default(),
    }
}

#[test]
fn moment_matrices_are_psd_on_every_fixture() {
    // the fisheries supremum is approached by an impulsive harvest, so its
    // moment matrices carry entries near 1e15 where float64 eigenvalues are
    // only meaningful relative to the matrix scale
    for (name, dx, relative) in [
        ("lqr", 1, false),
        ("cubic", 3, false),
        ("cubic", 5, false),
        ("fisheries", 2, true),
        ("fisheries", 5, true),
    ] {
        let spec = fixtures::load_named(name);
        let cfg = RelaxationConfig::auto(&spec, dx, 1).unwrap();
        let sol = solve_relaxation(&spec, &cfg, &SolverOptions::default()).unwrap();
        for t in 0..sol.num_times() {
            let m = sol.moment_matrix(t, dx, 1).unwrap();
            let scale = if relative { m.amax().max(1.0) } else { 1.0 };
            let e = min_eigenvalue(&m);
            assert!(e >= -1e-6 * scale, "{name} d_x={dx} t={t}: min eig {e} (scale {scale:.1e})");
        }
    }
}

#[test]
fn euler_grid_refinement_converges_at_first_order() {
    let spec = fixtures::lqr();
    let obj: Vec<f64> = [25, 50, 100, 200]
        .into_iter()
        .map(|n| {
            let cfg = RelaxationConfig::auto(&spec, 1, 1)
                .unwrap()
                .with_steps(n)
                .with_scheme(Scheme::Euler);
            solve_relaxation(&spec, &cfg, &SolverOptions::default())
                .unwrap()
                .objective_value
        })
        .collect();
    let diffs: Vec<f64> = obj.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    for w in diffs.windows(2) {
        assert!(w[0] >= 1.5 * w[1], "differences {diffs:?}");
    }
}

#[test]
fn extracted_lqr_gain_matches_riccati() {
    let spec = fixtures::lqr();
    let cfg = RelaxationConfig::auto(&spec, 1, 1).unwrap().with_steps(200);
    let sol = solve_relaxation(&spec, &cfg, &SolverOptions::default()).unwrap();
    let ctrl = extract_controller(&sol, 1, 1).unwrap();
    let n = ctrl.grid.len();
    let (lo, hi) = (n / 20, n - n / 20);
    let mut worst: f64 = 0.0;
    for k in lo..hi {
        let l = -(1.0 - ctrl.grid[k]).tanh();
        worst = worst.max((ctrl.coeffs[k][1] - l).abs());
    }
    assert!(worst <= 2e-2, "max gain error {worst}");
}

#[test]
fn simulation_is_reproducible_and_seed_batches_agree() {
    let spec = fixtures::cubic();
    let ctrl = PolynomialController::constant(vec![0.0, 1.0], vec![0.0, -2.0]);
    let cfg = SimConfig {
        trials: 10_000,
        ..SimConfig::default()
    };
    let a = simulate(&spec, Some(&ctrl), &cfg).unwrap();
    let again = simulate(&spec, Some(&ctrl), &cfg).unwrap();
    assert_eq!(a, again);
    let b = simulate(&spec, Some(&ctrl), &SimConfig { seed: cfg.seed + 1, ..cfg }).unwrap();
    assert_ne!(a.mean_cost, b.mean_cost);
    let se = a.std_error.hypot(b.std_error);
    assert!((a.mean_cost - b.mean_cost).abs() <= 4.0 * se, "{} vs {}", a.mean_cost, b.mean_cost);
}

#[test]
fn weak_error_shrinks_when_the_step_halves() {
    let spec = fixtures::lqr();
    let ctrl = oracle_controller(400);
    let exact = 1f64.cosh().ln();
    let err = |dt_sim: f64| {
        let r = simulate(
            &spec,
            Some(&ctrl),
            &SimConfig {
                trials: 100_000,
                dt_sim,
                record_moments_up_to: 1,
                ..SimConfig::default()
            },
        )
        .unwrap();
        ((r.mean_cost - exact).abs(), r.std_error)
    };
    let (coarse, se) = err(0.1);
    let (fine, _) = err(0.05);
    assert!(fine < coarse, "coarse {coarse:.4} fine {fine:.4} (se {se:.4})");
}

/// `E[x^2](T) - E[x^2](0) - int (2 E[xu] + 1) dt` per trial, from recorded
/// paths of the LQR dynamics `dx = u dt + dw`.
fn second_moment_defect(rep: &SimReport) -> (f64, f64) {
    let mut per_trial = std::collections::BTreeMap::<usize, Vec<(f64, f64, f64)>>::new();
    for p in &rep.paths {
        per_trial.entry(p.trial).or_default().push((p.t, p.x, p.u));
    }
    let d: Vec<f64> = per_trial
        .values()
        .map(|path| {
            let integral: f64 = path
                .windows(2)
                .map(|w| 0.5 * (w[1].0 - w[0].0) * ((2.0 * w[0].1 * w[0].2 + 1.0) + (2.0 * w[1].1 * w[1].2 + 1.0)))
                .sum();
            let (first, last) = (path[0], path[path.len() - 1]);
            last.1 * last.1 - first.1 * first.1 - integral
        })
        .collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn simulated_moments_satisfy_the_moment_equations() {
    let spec = fixtures::lqr();
    let cfg = RelaxationConfig::auto(&spec, 1, 1).unwrap().with_steps(50);
    let sol = solve_relaxation(&spec, &cfg, &SolverOptions::default()).unwrap();
    let ctrl = extract_controller(&sol, 1, 1).unwrap();
    let rep = simulate(
        &spec,
        Some(&ctrl),
        &SimConfig {
            trials: 10_000,
            paths: 10_000,
            record_moments_up_to: 2,
            ..SimConfig::default()
        },
    )
    .unwrap();
    let (defect, se) = second_moment_defect(&rep);
    assert!(defect.abs() <= 5.0 * se, "defect {defect} se {se}");
    // the empirical first moment follows d mu[x] = mu[u]
    let kx = MomentKey::state(1);
    let ku = MomentKey::new(0, 1);
    let last = rep.times.len() - 1;
    let integral: f64 = (0..last)
        .map(|k| 0.5 * (rep.times[k + 1] - rep.times[k]) * (rep.moment(k, ku).unwrap() + rep.moment(k + 1, ku).unwrap()))
        .sum();
    let lhs = rep.moment(last, kx).unwrap() - rep.moment(0, kx).unwrap();
    let tol = 5.0 * rep.moment_std_error(last, kx).unwrap() + 5.0 * rep.moment_std_error(last, ku).unwrap();
    assert!((lhs - integral).abs() <= tol, "{lhs} vs {integral}");
}

#[test]
fn simulated_moments_are_nearly_feasible_for_the_relaxation() {
    // any Markov policy induces moments the relaxation must (approximately) admit
    let spec = fixtures::lqr();
    let cfg = RelaxationConfig::auto(&spec, 1, 1).unwrap().with_steps(20);
    let program = assemble(&spec, &cfg).unwrap();
    let grid = cfg.grid(&spec);
    let ctrl = PolynomialController::constant(grid, vec![0.3, -1.5]);
    let rep = simulate(
        &spec,
        Some(&ctrl),
        &SimConfig {
            trials: 10_000,
            record_moments_up_to: 2,
            ..SimConfig::default()
        },
    )
    .unwrap();
    let values: Vec<f64> = program
        .variables
        .iter()
        .map(|&(t, key)| rep.moment(t, key).unwrap())
        .collect();
    let se: f64 = program
        .variables
        .iter()
        .map(|&(t, key)| rep.moment_std_error(t, key).unwrap())
        .fold(0.0, f64::max);
    // every row touches at most a handful of moments with O(1) coefficients;
    // PSD blocks of sample moments are exactly PSD
    let viol = program.max_violation(&values);
    assert!(viol <= 10.0 * se + 0.01, "violation {viol}, max se {se}");
    let objective = program.objective.eval(&values);
    let v_sdp = solve_relaxation(&spec, &cfg, &SolverOptions::default()).unwrap().objective_value;
    assert!(v_sdp <= objective + 3.0 * rep.std_error + 0.01, "{v_sdp} vs {objective}");
}
