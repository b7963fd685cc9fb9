//! Property-based checks of the algebraic and numerical invariants.

use momentctl::conic::psd::{min_eigenvalue, project_psd, svec, SQRT2};
use momentctl::conic::{self, ConeDims, CscMatrix, SolverMethod, SolverOptions, SolverStatus, StandardConicForm};
use momentctl::extract::{extraction_residual, least_squares};
use momentctl::moments::{build_system, LinearMomentExpr, MomentKey};
use momentctl::oracle::{lqr_moment_solution, solve_lqr, Propagation};
use momentctl::poly::Polynomial;
use momentctl::relaxation::{assemble, ProblemSpec, RelaxationConfig, Scheme};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn poly_strategy(max_deg: u32, coeff: f64) -> impl Strategy<Value = Polynomial> {
    prop::collection::vec((0..=max_deg, 0..=max_deg, -coeff..coeff), 0..6)
        .prop_map(|t| Polynomial::from_terms(t))
}

/// Integer coefficients keep products exact in floating point.
fn int_poly() -> impl Strategy<Value = Polynomial> {
    prop::collection::vec((0..=3u32, 0..=2u32, -5i32..=5), 0..6)
        .prop_map(|t| Polynomial::from_terms(t.into_iter().map(|(i, j, c)| (i, j, c as f64))))
}

fn points() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.5..1.5f64, -1.5..1.5f64), 10..16)
}

fn close(a: f64, b: f64, rel: f64, scale: f64) -> bool {
    (a - b).abs() <= rel * scale.max(1.0)
}

/// Sum of absolute term values at a point, the natural scale for rounding.
fn magnitude(p: &Polynomial, x: f64, u: f64) -> f64 {
    p.terms().map(|((i, j), c)| (c * x.powi(i as i32) * u.powi(j as i32)).abs()).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ring_laws(a in poly_strategy(3, 3.0), b in poly_strategy(3, 3.0), c in poly_strategy(3, 3.0), pts in points()) {
        let ab = &a + &b;
        let ba = &b + &a;
        let m1 = &a * &b;
        let m2 = &b * &a;
        let dist_l = &a * &(&b + &c);
        let dist_r = &(&a * &b) + &(&a * &c);
        for (x, u) in pts {
            let s = magnitude(&a, x, u) * (magnitude(&b, x, u) + magnitude(&c, x, u)) + magnitude(&ab, x, u);
            prop_assert!(close(ab.eval(x, u), ba.eval(x, u), 1e-12, s));
            prop_assert!(close(m1.eval(x, u), m2.eval(x, u), 1e-12, s));
            prop_assert!(close(dist_l.eval(x, u), dist_r.eval(x, u), 1e-12, s));
        }
    }

    #[test]
    fn eval_is_a_homomorphism(a in poly_strategy(4, 2.0), b in poly_strategy(4, 2.0), pts in points()) {
        let p = &a * &b;
        for (x, u) in pts {
            let s = magnitude(&a, x, u) * magnitude(&b, x, u);
            prop_assert!(close(p.eval(x, u), a.eval(x, u) * b.eval(x, u), 1e-10, s));
        }
    }

    #[test]
    fn product_rule_is_exact(a in int_poly(), b in int_poly()) {
        let lhs = (&a * &b).d_dx();
        let rhs = &(&a.d_dx() * &b) + &(&a * &b.d_dx());
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn pow_matches_repeated_evaluation(a in poly_strategy(2, 1.5), r in 0u32..=4, pts in points()) {
        let p = a.pow(r);
        for (x, u) in pts {
            let want = a.eval(x, u).powi(r as i32);
            let s = magnitude(&a, x, u).powi(r as i32);
            prop_assert!(close(p.eval(x, u), want, 1e-9, s));
        }
    }

    #[test]
    fn moment_equations_are_linear_in_drift_and_quadratic_in_diffusion(
        f in poly_strategy(3, 2.0),
        g in poly_strategy(2, 2.0),
        k in 1u32..=5,
    ) {
        let drift_only = build_system(k, &f, &Polynomial::zero());
        let diff_only = build_system(k, &Polynomial::zero(), &g);
        let doubled_f = build_system(k, &f.scale(2.0), &g);
        let doubled_g = build_system(k, &f, &g.scale(2.0));
        for j in 1..=k {
            let want_f = sum(&drift_only.rhs(j).scale(2.0), diff_only.rhs(j));
            let want_g = sum(drift_only.rhs(j), &diff_only.rhs(j).scale(4.0));
            prop_assert!(same(doubled_f.rhs(j), &want_f));
            prop_assert!(same(doubled_g.rhs(j), &want_g));
        }
    }

    #[test]
    fn constant_noise_references_powers_up_to_k_plus_d_minus_one(
        lead in prop_oneof![-2.0..-0.1f64, 0.1..2.0f64],
        d in 1u32..=4,
        k in 1u32..=6,
        sigma in 0.1..2.0f64,
    ) {
        let f = &Polynomial::monomial(d, 0, lead) + &Polynomial::u();
        let sys = build_system(k, &f, &Polynomial::constant(sigma));
        let top = sys.rhs(k).keys().filter(|key| key.u == 0).map(|key| key.x).max().unwrap_or(0);
        prop_assert_eq!(top, k + d - 1);
    }

    #[test]
    fn projection_is_idempotent_and_nearest(seed in prop::collection::vec(-4.0..4.0f64, 36), n in 2usize..=6, probe in prop::collection::vec(-3.0..3.0f64, 36)) {
        let raw = DMatrix::from_fn(n, n, |i, j| seed[i * 6 + j]);
        let m = (&raw + raw.transpose()) * 0.5;
        let p = project_psd(&m);
        prop_assert!(min_eigenvalue(&p) >= -1e-10);
        prop_assert!((project_psd(&p) - &p).amax() <= 1e-10 * p.amax().max(1.0));
        // any PSD matrix is at least as far from m
        let b = DMatrix::from_fn(n, n, |i, j| probe[i * 6 + j]);
        let q = &b * b.transpose();
        prop_assert!((&p - &m).norm() <= (&q - &m).norm() + 1e-9);
    }

    #[test]
    fn least_squares_beats_perturbations(
        entries in prop::collection::vec(-2.0..2.0f64, 12),
        rhs in prop::collection::vec(-2.0..2.0f64, 4),
        cols in 1usize..=3,
        deltas in prop::collection::vec(prop::collection::vec(-0.1..0.1f64, 3), 100),
    ) {
        let a = DMatrix::from_fn(4, cols, |i, j| entries[i * 3 + j]);
        let b = DVector::from_column_slice(&rhs);
        let p = least_squares(&a, &b).unwrap();
        let best = extraction_residual(&a, &b, p.as_slice());
        for d in &deltas {
            let q: Vec<f64> = p.iter().zip(d).map(|(v, e)| v + e).collect();
            prop_assert!(best <= extraction_residual(&a, &b, &q) + 1e-12);
        }
    }
}

fn sum(a: &LinearMomentExpr, b: &LinearMomentExpr) -> LinearMomentExpr {
    let mut out = a.clone();
    for (k, c) in b.terms() {
        out.add_term(k, c);
    }
    out.add_constant(b.constant());
    out
}

fn same(a: &LinearMomentExpr, b: &LinearMomentExpr) -> bool {
    let keys: std::collections::BTreeSet<MomentKey> = a.keys().chain(b.keys()).collect();
    let tol = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0);
    tol(a.constant(), b.constant()) && keys.into_iter().all(|k| tol(a.coeff(k), b.coeff(k)))
}

/// `min <C, X>  s.t. trace X = 1, X PSD` has value `lambda_min(C)`.
fn trace_sdp(c: &DMatrix<f64>) -> StandardConicForm {
    let n = c.nrows();
    let len = n * (n + 1) / 2;
    let mut t = Vec::new();
    let mut k = 0;
    for a in 0..n {
        for b in a..n {
            if a == b {
                t.push((0, k, 1.0));
                t.push((1 + k, k, -1.0));
            } else {
                t.push((1 + k, k, -1.0));
            }
            k += 1;
        }
    }
    let mut b = vec![0.0; 1 + len];
    b[0] = 1.0;
    StandardConicForm {
        c: svec(c),
        c0: 0.0,
        a: CscMatrix::from_triplets(1 + len, len, &t),
        b,
        cones: ConeDims {
            zero: 1,
            nonneg: 0,
            psd: vec![n],
        },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn trace_constrained_sdp_finds_smallest_eigenvalue(seed in prop::collection::vec(-3.0..3.0f64, 16), n in 2usize..=4) {
        let raw = DMatrix::from_fn(n, n, |i, j| seed[i * 4 + j]);
        let c = (&raw + raw.transpose()) * 0.5;
        let sf = trace_sdp(&c);
        let lmin = min_eigenvalue(&c);
        for method in [SolverMethod::InteriorPoint, SolverMethod::OperatorSplitting] {
            let opts = SolverOptions { method, ..SolverOptions::default() };
            let sol = conic::solve(&sf, &opts).unwrap();
            prop_assert_eq!(sol.status, SolverStatus::Optimal);
            let scale = 1f64.max(c.amax());
            prop_assert!((sol.primal_objective - lmin).abs() <= 1e-4 * scale, "{:?} {} vs {}", method, sol.primal_objective, lmin);
            // weak duality up to the gap tolerance
            prop_assert!(sol.primal_objective >= sol.dual_objective - opts.eps_gap * 10.0 * scale);
            // identical inputs, identical iterates
            let again = conic::solve(&sf, &opts).unwrap();
            prop_assert_eq!(&sol.x, &again.x);
            prop_assert_eq!(&sol.y, &again.y);
        }
    }

    #[test]
    fn oracle_trajectory_satisfies_the_assembled_program(
        q in 0.2..2.0f64,
        r in 0.2..2.0f64,
        a in -1.0..1.0f64,
        b in 0.3..2.0f64,
        sigma in 0.0..1.5f64,
        x0 in -1.0..1.0f64,
        terminal in 0.0..2.0f64,
        steps in 10usize..=60,
        trapezoid in any::<bool>(),
    ) {
        let spec = ProblemSpec {
            drift: Polynomial::from_terms([(1, 0, a), (0, 1, b)]),
            diffusion: Polynomial::constant(sigma),
            running_cost: Polynomial::from_terms([(2, 0, q), (0, 2, r)]),
            terminal_cost: Polynomial::monomial(2, 0, terminal),
            constraints: vec![],
            horizon: 1.0,
            x0,
            maximize: false,
        };
        let scheme = if trapezoid { Scheme::Trapezoid } else { Scheme::Euler };
        let cfg = RelaxationConfig::auto(&spec, 1, 1).unwrap().with_steps(steps).with_scheme(scheme);
        let program = assemble(&spec, &cfg).unwrap();
        let lqr = solve_lqr(q, r, a, b, sigma, 1.0, x0, terminal, steps);
        let sol = lqr_moment_solution(&lqr, Propagation::Discrete(scheme));
        let values: Vec<f64> = program
            .variables
            .iter()
            .map(|&(t, key)| sol.value(t, key).unwrap())
            .collect();
        let scale = values.iter().fold(1f64, |m, v| m.max(v.abs()));
        let eq = program.equalities.iter().map(|e| e.eval(&values).abs()).fold(0.0, f64::max);
        prop_assert!(eq <= 1e-6 * scale, "equality violation {}", eq);
        // the discrete mean and second-moment recursions do not keep
        // v >= m^2 exactly (e.g. Euler loses h^2 c^2 m^2 per step when
        // sigma = 0); the block [1 m lm; m v lv; lm lv l^2 v] = T' M T with
        // M = [1 m; m v], T = [1 0 0; 0 1 l] can only miss PSD by that deficit
        let mut allowance: f64 = 0.0;
        for t in 0..lqr.grid.len() {
            let m = sol.value(t, MomentKey::state(1)).unwrap();
            let v = sol.value(t, MomentKey::state(2)).unwrap();
            allowance = allowance.max((m * m - v).max(0.0) * (1.0 + lqr.gain[t].powi(2)));
        }
        let psd = program
            .psd_blocks
            .iter()
            .map(|b| (-min_eigenvalue(&b.eval(&values))).max(0.0))
            .fold(0.0, f64::max);
        prop_assert!(psd <= allowance + 1e-9 * scale, "PSD violation {} allowance {}", psd, allowance);
        let obj = program.objective.eval(&values);
        prop_assert!((obj - sol.objective_value).abs() <= 1e-9 * scale, "{} vs {}", obj, sol.objective_value);
    }
}

#[test]
fn exact_two_by_two_scaling_is_consistent() {
    // svec inner product equals the trace inner product
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0]);
    let b = DMatrix::from_row_slice(2, 2, &[0.5, -1.0, -1.0, 4.0]);
    let ip: f64 = svec(&a).iter().zip(svec(&b)).map(|(x, y)| x * y).sum();
    assert!((ip - (&a * &b).trace()).abs() < 1e-12);
    assert!((svec(&a)[1] - 2.0 * SQRT2).abs() < 1e-15);
}
