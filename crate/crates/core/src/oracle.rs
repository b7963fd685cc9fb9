//! Scalar linear-quadratic reference solutions.
//!
//! For `dx = (a x + b u) dt + sigma dw` with cost `q x^2 + r u^2` and
//! terminal weight `terminal * x_T^2`, the optimal policy is `u = L(t) x` with
//! `L = -(b/r) P` and `P` solving the backward Riccati equation
//! `-dP/dt = q + 2aP - (b^2/r) P^2`. Nothing here touches the relaxation or
//! the conic solver, so agreement with them is an independent check.

use crate::conic::{Residuals, SolverStatus};
use crate::moments::MomentKey;
use crate::relaxation::{MomentSolution, Scheme};

#[derive(Clone, Debug, PartialEq)]
pub struct LqrSolution {
    pub q: f64,
    pub r: f64,
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
    pub horizon: f64,
    pub x0: f64,
    pub terminal: f64,
    pub grid: Vec<f64>,
    /// Riccati variable.
    pub p: Vec<f64>,
    /// Noise offset `s(t) = int_t^T sigma^2 P`.
    pub s: Vec<f64>,
    /// Feedback gain.
    pub gain: Vec<f64>,
    pub value_at_x0: f64,
}

/// Backward RK4 on `(P, s)`, reported on `steps` uniform intervals (each
/// split into enough substeps to stay stable).
///
/// # Panics
/// If `r <= 0` or `steps < 10`.
#[allow(clippy::too_many_arguments)]
pub fn solve_lqr(
    q: f64,
    r: f64,
    a: f64,
    b: f64,
    sigma: f64,
    horizon: f64,
    x0: f64,
    terminal: f64,
    steps: usize,
) -> LqrSolution {
    assert!(r > 0.0, "control weight must be positive");
    assert!(steps >= 10, "need at least 10 steps");
    let h = horizon / steps as f64;
    // in reversed time tau = T - t: dP/dtau = q + 2aP - (b^2/r)P^2, ds/dtau = sigma^2 P
    let rhs = |p: f64| (q + 2.0 * a * p - b * b / r * p * p, sigma * sigma * p);
    // the scalar autonomous flow is monotone, so P stays between the terminal
    // weight and the stable equilibrium; substep to keep h |dF/dP| small
    let k = b * b / r;
    let p_eq = if k > 0.0 { (a + (a * a + q * k).sqrt()) / k } else { terminal };
    let stiffness = 2.0 * a.abs() + 2.0 * k * terminal.max(p_eq);
    let sub = ((h * stiffness / 0.1).ceil() as usize).max(1);
    let hs = h / sub as f64;
    let mut p = vec![0.0; steps + 1];
    let mut s = vec![0.0; steps + 1];
    p[steps] = terminal;
    for n in (0..steps).rev() {
        let (mut pc, mut sc) = (p[n + 1], s[n + 1]);
        for _ in 0..sub {
            let (p1, s1) = rhs(pc);
            let (p2, s2) = rhs(pc + 0.5 * hs * p1);
            let (p3, s3) = rhs(pc + 0.5 * hs * p2);
            let (p4, s4) = rhs(pc + hs * p3);
            pc += hs / 6.0 * (p1 + 2.0 * p2 + 2.0 * p3 + p4);
            sc += hs / 6.0 * (s1 + 2.0 * s2 + 2.0 * s3 + s4);
        }
        p[n] = pc;
        s[n] = sc;
    }
    let grid = (0..=steps).map(|n| n as f64 * h).collect();
    let gain = p.iter().map(|&p| -b / r * p).collect();
    LqrSolution {
        q,
        r,
        a,
        b,
        sigma,
        horizon,
        x0,
        terminal,
        grid,
        value_at_x0: p[0] * x0 * x0 + s[0],
        p,
        s,
        gain,
    }
}

/// How the second-moment trajectory is propagated between grid points.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Propagation {
    /// RK4 on the variance ODE (gain interpolated linearly within a step).
    Continuous,
    /// The same one-step rule as a relaxation with this scheme, so the
    /// trajectory satisfies its dynamics rows exactly.
    Discrete(Scheme),
}

/// Moment trajectory of the closed loop `u = L x` started at `x0`:
/// `mu[x]`, `mu[u]` from the mean ODE and `mu[x^2]`, `mu[xu] = L mu[x^2]`,
/// `mu[u^2] = L^2 mu[x^2]` from the second-moment ODE.
///
/// The objective uses trapezoid quadrature for [`Propagation::Continuous`]
/// and the scheme's own quadrature for [`Propagation::Discrete`].
pub fn lqr_moment_solution(lqr: &LqrSolution, how: Propagation) -> MomentSolution {
    let n = lqr.grid.len() - 1;
    let h = lqr.horizon / n as f64;
    let (a, b, sig2) = (lqr.a, lqr.b, lqr.sigma * lqr.sigma);
    let closed = |l: f64| a + b * l;
    // mean m, second moment v
    let mut m = vec![lqr.x0; n + 1];
    let mut v = vec![lqr.x0 * lqr.x0; n + 1];
    for k in 0..n {
        let (l0, l1) = (lqr.gain[k], lqr.gain[k + 1]);
        match how {
            Propagation::Continuous => {
                let lmid = 0.5 * (l0 + l1);
                let fm = |l: f64, m: f64| closed(l) * m;
                let fv = |l: f64, v: f64| 2.0 * closed(l) * v + sig2;
                let (m1, v1) = (fm(l0, m[k]), fv(l0, v[k]));
                let (m2, v2) = (fm(lmid, m[k] + 0.5 * h * m1), fv(lmid, v[k] + 0.5 * h * v1));
                let (m3, v3) = (fm(lmid, m[k] + 0.5 * h * m2), fv(lmid, v[k] + 0.5 * h * v2));
                let (m4, v4) = (fm(l1, m[k] + h * m3), fv(l1, v[k] + h * v3));
                m[k + 1] = m[k] + h / 6.0 * (m1 + 2.0 * m2 + 2.0 * m3 + m4);
                v[k + 1] = v[k] + h / 6.0 * (v1 + 2.0 * v2 + 2.0 * v3 + v4);
            }
            Propagation::Discrete(Scheme::Euler) => {
                m[k + 1] = m[k] + h * closed(l0) * m[k];
                v[k + 1] = v[k] + h * (2.0 * closed(l0) * v[k] + sig2);
            }
            Propagation::Discrete(Scheme::Trapezoid) => {
                // implicit in the new point: linear, solved in closed form
                let (c0, c1) = (closed(l0), closed(l1));
                m[k + 1] = m[k] * (1.0 + 0.5 * h * c0) / (1.0 - 0.5 * h * c1);
                v[k + 1] = (v[k] * (1.0 + h * c0) + h * sig2) / (1.0 - h * c1);
            }
        }
    }

    let keys = vec![
        MomentKey::new(0, 1),
        MomentKey::new(0, 2),
        MomentKey::new(1, 0),
        MomentKey::new(1, 1),
        MomentKey::new(2, 0),
    ];
    let values: Vec<Vec<f64>> = (0..=n)
        .map(|k| {
            let l = lqr.gain[k];
            vec![l * m[k], l * l * v[k], m[k], l * v[k], v[k]]
        })
        .collect();
    let weights: Vec<f64> = (0..=n)
        .map(|k| match how {
            Propagation::Discrete(Scheme::Euler) => {
                if k < n {
                    h
                } else {
                    0.0
                }
            }
            _ if k == 0 || k == n => 0.5 * h,
            _ => h,
        })
        .collect();
    let running: f64 = (0..=n)
        .map(|k| weights[k] * (lqr.q + lqr.r * lqr.gain[k] * lqr.gain[k]) * v[k])
        .sum();
    MomentSolution {
        times: lqr.grid.clone(),
        keys,
        values,
        objective_value: running + lqr.terminal * v[n],
        status: SolverStatus::Optimal,
        residuals: Residuals::default(),
        iterations: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eq4(steps: usize) -> LqrSolution {
        solve_lqr(1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, steps)
    }

    #[test]
    fn riccati_matches_tanh() {
        let sol = eq4(200);
        for (t, p) in sol.grid.iter().zip(&sol.p) {
            assert!((p - (1.0 - t).tanh()).abs() < 1e-10);
        }
        assert!((sol.value_at_x0 - 1f64.cosh().ln()).abs() < 1e-10);
        assert_eq!(sol.p[200], 0.0);
        assert_eq!(sol.s[200], 0.0);
    }

    #[test]
    fn boundary_and_trivial_cases() {
        let sol = solve_lqr(1.0, 2.0, 0.3, 1.0, 0.5, 2.0, 1.0, 3.5, 50);
        assert_eq!(sol.p[50], 3.5);
        for (l, p) in sol.gain.iter().zip(&sol.p) {
            assert_eq!(*l, -p / 2.0);
        }
        let quiet = solve_lqr(1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 20);
        assert_eq!(quiet.value_at_x0, 0.0);
    }

    #[test]
    fn stiff_coarse_grids_stay_on_the_exact_solution() {
        // a = 0, terminal above sqrt(q/k): P = c coth(w tau + acoth(P_T / c))
        let (q, r, b, terminal) = (0.2, 0.2, 1.95, 1.93);
        let sol = solve_lqr(q, r, 0.0, b, 0.0, 1.0, 0.0, terminal, 10);
        let k = b * b / r;
        let (c, w) = ((q / k).sqrt(), (q * k).sqrt());
        let shift = 0.5 * ((terminal + c) / (terminal - c)).ln();
        for (t, p) in sol.grid.iter().zip(&sol.p) {
            let exact = c / (w * (1.0 - t) + shift).tanh();
            assert!((p - exact).abs() < 1e-8, "t={t}: {p} vs {exact}");
        }
    }

    #[test]
    fn moment_trajectory_structure() {
        let lqr = eq4(200);
        let sol = lqr_moment_solution(&lqr, Propagation::Continuous);
        for k in [MomentKey::new(1, 0), MomentKey::new(2, 0), MomentKey::new(0, 2)] {
            assert_eq!(sol.value(0, k), Some(0.0));
        }
        for t in [0, 57, 200] {
            let m = sol.moment_matrix(t, 1, 1).unwrap();
            let eig = nalgebra::SymmetricEigen::new(m).eigenvalues;
            assert!(eig.iter().filter(|e| e.abs() > 1e-9).count() <= 2);
        }
        assert!((sol.objective_value - 1f64.cosh().ln()).abs() < 1e-4);
    }

    #[test]
    fn variance_ode_solution_for_constant_gain() {
        // with P = terminal fixed point q = (b^2/r)P^2, the gain is constant
        // and the variance has a closed form
        let lqr = solve_lqr(1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 100);
        let sol = lqr_moment_solution(&lqr, Propagation::Continuous);
        let v = |t: f64| (1.0 - (-2.0 * t).exp()) / 2.0;
        for t in [10, 50, 100] {
            let got = sol.value(t, MomentKey::new(2, 0)).unwrap();
            assert!((got - v(sol.times[t])).abs() < 1e-9, "{got}");
        }
    }
}
