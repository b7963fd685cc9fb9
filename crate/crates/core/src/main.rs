//! `momentctl` command-line front end. All work happens in the library.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use momentctl::conic::{self, textfmt, SolverMethod};
use momentctl::pipeline::{self, RunManifest, RunOptions};
use momentctl::problem::load_problem;
use momentctl::relaxation::{assemble, moment_system, Scheme};
use momentctl::{Error, Result};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "momentctl", version, about = "Moment-SDP bounds and polynomial controllers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve, extract a controller, simulate, and write all artifacts.
    Solve {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 3)]
        dx: u32,
    },
    /// Run the pipeline for several sizes and write sweep.csv.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma list of state degrees, or DXxDU pairs.
        #[arg(long, default_value = "2,3,9")]
        dx: String,
    },
    /// Re-run the configuration recorded in a manifest.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the moment equations used by a relaxation.
    Moments {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 3)]
        dx: u32,
    },
    /// Write the assembled conic program in the text format.
    Export {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 3)]
        dx: u32,
    },
    /// Solve a conic program in the text format and print the result as JSON.
    SolveProgram {
        program: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long, default_value = "ipm")]
        solver: SolverMethod,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Built-in problem name (lqr, cubic, fisheries) or problem file path.
    #[arg(long, default_value = "cubic")]
    problem: String,
    #[arg(long, default_value_t = 1)]
    du: u32,
    /// Number of moment equations, overriding the automatic choice.
    #[arg(long)]
    k: Option<u32>,
    /// Constraint powers as a comma list, overriding the automatic choice.
    #[arg(long, value_delimiter = ',')]
    r: Option<Vec<u32>>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    scheme: Option<Scheme>,
    #[arg(long)]
    np: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    dt_sim: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Primal, dual and gap tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long, default_value = "ipm")]
    solver: SolverMethod,
    #[arg(long)]
    clip_controls: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl RunArgs {
    fn options(&self, dx: u32) -> RunOptions {
        let mut o = RunOptions::new(dx, self.du);
        o.order = self.k;
        o.powers = self.r.clone();
        if let Some(n) = self.steps {
            o.steps = n;
        }
        if let Some(s) = self.scheme {
            o.scheme = s;
        }
        o.np = self.np;
        o.m = self.m;
        if let Some(t) = self.trials {
            o.sim.trials = t;
        }
        if let Some(dt) = self.dt_sim {
            o.sim.dt_sim = dt;
        }
        if let Some(s) = self.seed {
            o.sim.seed = s;
        }
        o.sim.clip_controls = self.clip_controls;
        set_solver(&mut o.solver, self.tol, self.max_iters, self.solver);
        o
    }
}

fn set_solver(s: &mut conic::SolverOptions, tol: Option<f64>, max_iters: Option<usize>, method: SolverMethod) {
    if let Some(t) = tol {
        s.eps_primal = t;
        s.eps_dual = t;
        s.eps_gap = t;
    }
    if let Some(n) = max_iters {
        s.max_iters = n;
    }
    s.method = method;
}

#[derive(Serialize)]
struct ProgramResult {
    status: conic::SolverStatus,
    objective: f64,
    dual_objective: f64,
    iterations: usize,
    residuals: conic::Residuals,
    values: Vec<f64>,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => pipeline::write_atomic(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn print_outcome(o: &pipeline::RunOutcome) {
    println!(
        "v_sdp={} v_p={} std_error={} status={}",
        o.v_sdp, o.v_p, o.std_error, o.moments.status
    );
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve { run, dx } => {
            let o = pipeline::run_pipeline(&run.problem, &run.options(dx), Some(&run.out))?;
            print_outcome(&o);
        }
        Command::Sweep { run, dx } => {
            let sizes = pipeline::parse_sizes(&dx, run.du)?;
            let rows = pipeline::sweep(&run.problem, &sizes, &run.options(0), &run.out)?;
            print!("{}", pipeline::sweep_csv(&rows)?);
        }
        Command::Replay { manifest, out } => {
            let m = RunManifest::read(&manifest)?;
            let o = pipeline::replay(&m, out.as_deref())?;
            print_outcome(&o);
        }
        Command::Moments { run, dx } => {
            let src = load_problem(&run.problem)?;
            let cfg = run.options(dx).relaxation_config(&src.spec)?;
            print!("{}", moment_system(&src.spec, &cfg).dump());
        }
        Command::Export { run, dx } => {
            let src = load_problem(&run.problem)?;
            let cfg = run.options(dx).relaxation_config(&src.spec)?;
            let text = textfmt::write_program(&assemble(&src.spec, &cfg)?);
            std::fs::create_dir_all(&run.out)?;
            pipeline::write_atomic(&run.out.join("program.txt"), &text)?;
        }
        Command::SolveProgram {
            program,
            tol,
            max_iters,
            solver,
            out,
        } => {
            let p = textfmt::read_program(&std::fs::read_to_string(&program)?)?;
            let (sf, map) = conic::to_standard_form(&p)?;
            let mut opts = conic::SolverOptions::default();
            set_solver(&mut opts, tol, max_iters, solver);
            let sol = conic::solve(&sf, &opts)?;
            let r = ProgramResult {
                status: sol.status,
                objective: sol.primal_objective,
                dual_objective: sol.dual_objective,
                iterations: sol.iterations,
                residuals: sol.residuals,
                values: map.to_program(&sol.x),
            };
            let json = serde_json::to_string_pretty(&r).expect("result serializes") + "\n";
            emit(out.as_deref(), &json)?;
            if sol.status != conic::SolverStatus::Optimal {
                return Err(Error::Solver {
                    status: sol.status,
                    residuals: sol.residuals,
                });
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
