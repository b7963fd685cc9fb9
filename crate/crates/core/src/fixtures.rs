//! Built-in example problems.

use crate::problem::{parse_problem_str, Format};
use crate::relaxation::ProblemSpec;

pub const LQR: &str = include_str!("../fixtures/lqr.toml");
pub const CUBIC: &str = include_str!("../fixtures/cubic.toml");
pub const FISHERIES: &str = include_str!("../fixtures/fisheries.toml");

pub const NAMES: [&str; 3] = ["lqr", "cubic", "fisheries"];

/// Problem-file text of a built-in problem.
pub fn source(name: &str) -> Option<&'static str> {
    match name {
        "lqr" => Some(LQR),
        "cubic" => Some(CUBIC),
        "fisheries" => Some(FISHERIES),
        _ => None,
    }
}

fn load(text: &str) -> ProblemSpec {
    parse_problem_str(text, Format::Toml).expect("built-in problem file is valid")
}

/// `min E[int_0^1 x^2 + u^2 dt]`, `dx = u dt + dw`, `x0 = 0`.
pub fn lqr() -> ProblemSpec {
    load(LQR)
}

/// `min E[int_0^1 x^2 + 0.1u^2 dt + x_1^2]`, `dx = (2.25x - x^3 + u) dt + dw`.
pub fn cubic() -> ProblemSpec {
    load(CUBIC)
}

/// Harvest maximization with `gamma = 1`, `sigma = 0.1`, `x0 = 1`, `T = 1`.
pub fn fisheries() -> ProblemSpec {
    load(FISHERIES)
}

/// Built-in problem by name; panics on unknown names.
pub fn load_named(name: &str) -> ProblemSpec {
    load(source(name).expect("unknown built-in problem"))
}
