//! Runs the full pipeline over several relaxation sizes, writing per-size
//! artifacts and a consolidated `sweep.csv`.
//!
//! `cargo run --release --example size_sweep -- [problem] [out-dir]`

use std::path::PathBuf;

use momentctl::pipeline::{sweep, sweep_csv, RunOptions};

fn main() -> momentctl::Result<()> {
    let mut args = std::env::args().skip(1);
    let problem = args.next().unwrap_or_else(|| "cubic".into());
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("momentctl-sweep"));
    let rows = sweep(&problem, &[(2, 1), (3, 1), (5, 1)], &RunOptions::default(), &out)?;
    print!("{}", sweep_csv(&rows)?);
    println!("artifacts under {}", out.display());
    Ok(())
}
