//! A 2x2 semidefinite program solved by both embedded backends:
//! minimize `x12` subject to `x11 = 1`, `x22 = 1`, `[[x11, x12], [x12, x22]]`
//! PSD. The optimum is `-1`.
//!
//! `cargo run --example conic_toy`

use momentctl::conic::{psd::SQRT2, solve, ConeDims, CscMatrix, SolverMethod, SolverOptions, StandardConicForm};

fn main() -> momentctl::Result<()> {
    // variables (x11, x12, x22); rows: two equalities then svec of the block
    let a = CscMatrix::from_triplets(
        5,
        3,
        &[(0, 0, 1.0), (1, 2, 1.0), (2, 0, -1.0), (3, 1, -SQRT2), (4, 2, -1.0)],
    );
    let sf = StandardConicForm {
        c: vec![0.0, 1.0, 0.0],
        c0: 0.0,
        a,
        b: vec![1.0, 1.0, 0.0, 0.0, 0.0],
        cones: ConeDims {
            zero: 2,
            nonneg: 0,
            psd: vec![2],
        },
    };
    for method in [SolverMethod::InteriorPoint, SolverMethod::OperatorSplitting] {
        let sol = solve(&sf, &SolverOptions { method, ..SolverOptions::default() })?;
        println!(
            "{method:?}: status {} objective {:.8} x {:?} iterations {}",
            sol.status, sol.primal_objective, sol.x, sol.iterations
        );
    }
    Ok(())
}
