//! End-to-end runs: relax, extract, simulate, and write the artifacts.
//!
//! A run directory holds
//!
//! | file | contents |
//! |---|---|
//! | `manifest.json` | resolved configuration, tool version, input digest and text |
//! | `moments.csv` | `t` then one column per moment |
//! | `cost_to_go.csv` | `t,cost_to_go` |
//! | `controller.csv` | `t,p0,...,pn` |
//! | `sim_summary.csv` | Monte Carlo mean, standard error, trial counts |
//! | `sim_moments.csv` | empirical moments under the extracted controller |
//! | `bounds.csv` | `v_sdp,v_p,std_error` |
//! | `error.json` | only on failure: kind, exit code, message |
//!
//! Every file is written to a temporary name and renamed into place.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conic::{Residuals, SolverOptions, SolverStatus};
use crate::error::{Error, Result};
use crate::extract::{extract_controller, PolynomialController};
use crate::problem::{load_problem, parse_problem_str, Format, ProblemSource};
use crate::relaxation::{
    cost_to_go, solve_relaxation, MomentSolution, ProblemSpec, RelaxationConfig, Scheme, DEFAULT_STEPS,
};
use crate::sim::{simulate, SimConfig, SimReport};

pub const TOOL: &str = "momentctl";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything a run needs besides the problem itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOptions {
    pub dx: u32,
    pub du: u32,
    /// Override of the automatically chosen `K`.
    pub order: Option<u32>,
    /// Override of the automatically chosen constraint powers.
    pub powers: Option<Vec<u32>>,
    pub steps: usize,
    pub scheme: Scheme,
    /// Controller order; defaults to `min(dx, 3)`.
    pub np: Option<usize>,
    /// Extraction rows; defaults to the controller order.
    pub m: Option<usize>,
    pub solver: SolverOptions,
    pub sim: SimConfig,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            dx: 3,
            du: 1,
            order: None,
            powers: None,
            steps: DEFAULT_STEPS,
            scheme: Scheme::default(),
            np: None,
            m: None,
            solver: SolverOptions::default(),
            sim: SimConfig::default(),
        }
    }
}

impl RunOptions {
    pub fn new(dx: u32, du: u32) -> Self {
        Self {
            dx,
            du,
            ..Self::default()
        }
    }

    pub fn controller_order(&self) -> usize {
        self.np.unwrap_or_else(|| (self.dx as usize).min(3))
    }

    pub fn extraction_rows(&self) -> usize {
        self.m.unwrap_or_else(|| self.controller_order())
    }

    pub fn relaxation_config(&self, spec: &ProblemSpec) -> Result<RelaxationConfig> {
        RelaxationConfig::auto(spec, self.dx, self.du)?
            .with_steps(self.steps)
            .with_scheme(self.scheme)
            .with_overrides(spec, self.order, self.powers.clone())
    }
}

/// Fully resolved record of a run, sufficient to reproduce it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// Built-in name or path as given.
    pub problem: String,
    pub input_format: String,
    /// Hex SHA-256 of `input_text`.
    pub input_sha256: String,
    pub input_text: String,
    pub dx: u32,
    pub du: u32,
    pub order: u32,
    pub powers: Vec<u32>,
    pub steps: usize,
    pub scheme: Scheme,
    pub np: usize,
    pub m: usize,
    pub solver: SolverOptions,
    pub sim: SimConfig,
}

impl RunManifest {
    pub fn options(&self) -> RunOptions {
        RunOptions {
            dx: self.dx,
            du: self.du,
            order: Some(self.order),
            powers: Some(self.powers.clone()),
            steps: self.steps,
            scheme: self.scheme,
            np: Some(self.np),
            m: Some(self.m),
            solver: self.solver.clone(),
            sim: self.sim.clone(),
        }
    }

    /// Problem text embedded in the manifest, after checking its digest.
    pub fn source(&self) -> Result<ProblemSource> {
        let digest = sha256_hex(&self.input_text);
        if digest != self.input_sha256 {
            return Err(Error::Validation(format!(
                "manifest input digest mismatch: recorded {}, computed {digest}",
                self.input_sha256
            )));
        }
        let format = match self.input_format.as_str() {
            "json" => Format::Json,
            "toml" => Format::Toml,
            other => return Err(Error::Parse(format!("unknown input format '{other}' in manifest"))),
        };
        Ok(ProblemSource {
            name: self.problem.clone(),
            spec: parse_problem_str(&self.input_text, format)?,
            text: self.input_text.clone(),
            format,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// In-memory results of a successful run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub config: RelaxationConfig,
    pub moments: MomentSolution,
    pub cost_to_go: Vec<(f64, f64)>,
    pub controller: PolynomialController,
    pub report: SimReport,
    /// Relaxation bound (lower for minimization, upper for maximization).
    pub v_sdp: f64,
    /// Monte Carlo cost of the extracted controller.
    pub v_p: f64,
    pub std_error: f64,
}

/// Files written by a successful run, in order.
pub const ARTIFACTS: [&str; 7] = [
    "manifest.json",
    "moments.csv",
    "cost_to_go.csv",
    "controller.csv",
    "sim_summary.csv",
    "sim_moments.csv",
    "bounds.csv",
];

fn read_first_cost_to_go(path: &Path) -> Option<f64> {
    let mut r = csv::Reader::from_path(path).ok()?;
    let rec = r.records().next()?.ok()?;
    rec.get(1)?.parse().ok()
}

/// Writes `contents` to `path` via a temporary sibling and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Machine-readable failure record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub exit_code: i32,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<SolverStatus>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residuals: Option<Residuals>,
}

impl From<&Error> for ErrorRecord {
    fn from(e: &Error) -> Self {
        let (status, residuals) = match e {
            Error::Solver { status, residuals } => (Some(*status), Some(*residuals)),
            _ => (None, None),
        };
        Self {
            kind: e.kind().to_string(),
            exit_code: e.exit_code(),
            message: e.to_string(),
            status,
            residuals,
        }
    }
}

fn write_error(out: &Path, e: &Error) -> Result<()> {
    let json = serde_json::to_string_pretty(&ErrorRecord::from(e)).expect("error record serializes");
    write_atomic(&out.join("error.json"), &(json + "\n"))
}

fn csv_string(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn moments_csv(sol: &MomentSolution) -> Result<String> {
    let mut header = vec!["t".to_string()];
    header.extend(sol.keys.iter().map(|k| k.label()));
    csv_string(
        &header,
        sol.times.iter().zip(&sol.values).map(|(t, row)| {
            std::iter::once(t.to_string())
                .chain(row.iter().map(f64::to_string))
                .collect()
        }),
    )
}

pub fn cost_to_go_csv(ctg: &[(f64, f64)]) -> Result<String> {
    csv_string(
        &["t".into(), "cost_to_go".into()],
        ctg.iter().map(|(t, v)| vec![t.to_string(), v.to_string()]),
    )
}

pub fn bounds_csv(v_sdp: f64, v_p: f64, std_error: f64) -> Result<String> {
    csv_string(
        &["v_sdp".into(), "v_p".into(), "std_error".into()],
        std::iter::once(vec![v_sdp.to_string(), v_p.to_string(), std_error.to_string()]),
    )
}

fn build_manifest(src: &ProblemSource, opts: &RunOptions, cfg: &RelaxationConfig) -> RunManifest {
    RunManifest {
        tool: TOOL.into(),
        version: VERSION.into(),
        problem: src.name.clone(),
        input_format: match src.format {
            Format::Toml => "toml".into(),
            Format::Json => "json".into(),
        },
        input_sha256: sha256_hex(&src.text),
        input_text: src.text.clone(),
        dx: cfg.dx,
        du: cfg.du,
        order: cfg.order,
        powers: cfg.powers.clone(),
        steps: cfg.steps,
        scheme: cfg.scheme,
        np: opts.controller_order(),
        m: opts.extraction_rows(),
        solver: opts.solver.clone(),
        sim: opts.sim.clone(),
    }
}

/// Runs the whole pipeline on an already loaded problem, writing artifacts
/// under `out` when given. On failure an `error.json` is written (if `out` is
/// given) and the error is returned.
pub fn run_source(src: &ProblemSource, opts: &RunOptions, out: Option<&Path>) -> Result<RunOutcome> {
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        // stale results from an earlier run must not survive a failure
        for f in ARTIFACTS.iter().chain(&["error.json"]) {
            let p = dir.join(f);
            if p.exists() {
                std::fs::remove_file(p)?;
            }
        }
    }
    let result = run_inner(src, opts, out);
    if let (Err(e), Some(dir)) = (&result, out) {
        write_error(dir, e)?;
    }
    result
}

fn run_inner(src: &ProblemSource, opts: &RunOptions, out: Option<&Path>) -> Result<RunOutcome> {
    let spec = &src.spec;
    let write = |name: &str, text: &str| -> Result<()> {
        match out {
            Some(dir) => write_atomic(&dir.join(name), text),
            None => Ok(()),
        }
    };
    let cfg = opts.relaxation_config(spec)?;
    let manifest = build_manifest(src, opts, &cfg);
    write(
        "manifest.json",
        &(serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n"),
    )?;

    let moments = solve_relaxation(spec, &cfg, &opts.solver)?;
    write("moments.csv", &moments_csv(&moments)?)?;
    let ctg = cost_to_go(&moments, spec, &cfg);
    write("cost_to_go.csv", &cost_to_go_csv(&ctg)?)?;

    let controller = extract_controller(&moments, manifest.np, manifest.m)?;
    write("controller.csv", &controller.to_csv_string()?)?;

    let report = simulate(spec, Some(&controller), &opts.sim)?;
    write("sim_summary.csv", &report.summary_csv()?)?;
    write("sim_moments.csv", &report.moments_csv()?)?;

    let v_sdp = moments.objective_value;
    write("bounds.csv", &bounds_csv(v_sdp, report.mean_cost, report.std_error)?)?;
    Ok(RunOutcome {
        manifest,
        config: cfg,
        cost_to_go: ctg,
        controller,
        v_sdp,
        v_p: report.mean_cost,
        std_error: report.std_error,
        report,
        moments,
    })
}

/// [`run_source`] on a built-in problem name or a problem file path.
pub fn run_pipeline(problem: &str, opts: &RunOptions, out: Option<&Path>) -> Result<RunOutcome> {
    let src = match load_problem(problem) {
        Ok(s) => s,
        Err(e) => {
            if let Some(dir) = out {
                std::fs::create_dir_all(dir)?;
                write_error(dir, &e)?;
            }
            return Err(e);
        }
    };
    run_source(&src, opts, out)
}

/// Re-runs the configuration recorded in a manifest.
pub fn replay(manifest: &RunManifest, out: Option<&Path>) -> Result<RunOutcome> {
    if manifest.tool != TOOL {
        return Err(Error::Validation(format!("manifest was written by '{}', not {TOOL}", manifest.tool)));
    }
    run_source(&manifest.source()?, &manifest.options(), out)
}

/// One row of `sweep.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub dx: u32,
    pub du: u32,
    /// `K`, when sizing succeeded.
    pub order: Option<u32>,
    pub v_sdp: Option<f64>,
    pub v_p: Option<f64>,
    pub std_error: Option<f64>,
    pub wall_time: f64,
    /// `ok` or the error kind.
    pub status: String,
    pub dir: PathBuf,
}

/// Runs the pipeline once per `(dx, du)` size, each into `out/dx{dx}_du{du}`,
/// and writes the consolidated `out/sweep.csv`. Failed sizes are recorded
/// and do not stop the sweep.
pub fn sweep(problem: &str, sizes: &[(u32, u32)], base: &RunOptions, out: &Path) -> Result<Vec<SweepRow>> {
    if sizes.is_empty() {
        return Err(Error::Validation("a sweep needs at least one size".into()));
    }
    let src = load_problem(problem)?;
    std::fs::create_dir_all(out)?;
    let rows: Vec<SweepRow> = sizes
        .par_iter()
        .map(|&(dx, du)| {
            let opts = RunOptions {
                dx,
                du,
                ..base.clone()
            };
            let dir = out.join(format!("dx{dx}_du{du}"));
            let start = Instant::now();
            let res = run_source(&src, &opts, Some(&dir));
            let wall_time = start.elapsed().as_secs_f64();
            let order = opts.relaxation_config(&src.spec).ok().map(|c| c.order);
            match res {
                Ok(o) => SweepRow {
                    dx,
                    du,
                    order,
                    v_sdp: Some(o.v_sdp),
                    v_p: Some(o.v_p),
                    std_error: Some(o.std_error),
                    wall_time,
                    status: "ok".into(),
                    dir,
                },
                Err(e) => {
                    // a relaxation that solved still has a bound worth reporting
                    let v_sdp = read_first_cost_to_go(&dir.join("cost_to_go.csv"));
                    SweepRow {
                        dx,
                        du,
                        order,
                        v_sdp,
                        v_p: None,
                        std_error: None,
                        wall_time,
                        status: e.kind().into(),
                        dir,
                    }
                }
            }
        })
        .collect();
    write_atomic(&out.join("sweep.csv"), &sweep_csv(&rows)?)?;
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    csv_string(
        &[
            "d_x", "d_u", "K", "v_sdp", "v_p", "std_error", "wall_time_s", "status",
        ]
        .map(String::from),
        rows.iter().map(|r| {
            vec![
                r.dx.to_string(),
                r.du.to_string(),
                r.order.map(|k| k.to_string()).unwrap_or_default(),
                opt(r.v_sdp),
                opt(r.v_p),
                opt(r.std_error),
                format!("{:.3}", r.wall_time),
                r.status.clone(),
            ]
        }),
    )
}

/// Parses a size list such as `2,3,9` (with a fixed `du`) or `2x1,3x2`.
pub fn parse_sizes(dx_list: &str, du: u32) -> Result<Vec<(u32, u32)>> {
    dx_list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let bad = || Error::Parse(format!("bad size '{item}' (expected DX or DXxDU)"));
            match item.split_once('x') {
                Some((a, b)) => Ok((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?)),
                None => Ok((item.parse().map_err(|_| bad())?, du)),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn size_lists() {
        assert_eq!(parse_sizes("2,3, 9", 1).unwrap(), vec![(2, 1), (3, 1), (9, 1)]);
        assert_eq!(parse_sizes("2x2,4", 1).unwrap(), vec![(2, 2), (4, 1)]);
        assert!(matches!(parse_sizes("2,a", 1), Err(Error::Parse(_))));
    }

    #[test]
    fn default_controller_order() {
        assert_eq!(RunOptions::new(2, 1).controller_order(), 2);
        assert_eq!(RunOptions::new(9, 1).controller_order(), 3);
        let o = RunOptions {
            np: Some(1),
            ..RunOptions::new(9, 1)
        };
        assert_eq!((o.controller_order(), o.extraction_rows()), (1, 1));
    }

    #[test]
    fn error_record_carries_residuals() {
        let e = Error::Solver {
            status: SolverStatus::MaxIters,
            residuals: Residuals {
                primal: 1.0,
                dual: 2.0,
                gap: 3.0,
            },
        };
        let r = ErrorRecord::from(&e);
        assert_eq!((r.kind.as_str(), r.exit_code), ("solver", 4));
        assert_eq!(r.residuals.unwrap().dual, 2.0);
    }
}
