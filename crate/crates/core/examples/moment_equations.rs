//! Prints the moment equations generated from the Ito generator for each
//! built-in problem.
//!
//! `cargo run --example moment_equations`

use momentctl::fixtures;
use momentctl::moments::build_system;

fn main() {
    for name in fixtures::NAMES {
        let spec = fixtures::load_named(name);
        println!("# {name}");
        print!("{}", build_system(4, &spec.drift, &spec.diffusion).dump());
        println!();
    }
}
