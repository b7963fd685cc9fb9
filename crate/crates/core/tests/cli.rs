//! End-to-end runs of the `momentctl` binary and the pipeline API.

use std::path::Path;
use std::process::{Command, Output};

use momentctl::pipeline::{self, RunManifest, RunOptions, ARTIFACTS};

fn momentctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_momentctl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn bounds(dir: &Path) -> (f64, f64, f64) {
    let text = read(&dir.join("bounds.csv"));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("v_sdp,v_p,std_error"));
    let v: Vec<f64> = lines.next().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
    (v[0], v[1], v[2])
}

fn error_kind(dir: &Path) -> (String, i64) {
    let v: serde_json::Value = serde_json::from_str(&read(&dir.join("error.json"))).unwrap();
    (v["kind"].as_str().unwrap().to_string(), v["exit_code"].as_i64().unwrap())
}

#[test]
fn lqr_solve_writes_every_artifact_and_replays_bit_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let out = momentctl(&["solve", "--problem", "lqr", "--dx", "1", "--out", a.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ARTIFACTS {
        let text = read(&a.join(f));
        if f.ends_with(".csv") {
            let header = text.lines().next().unwrap();
            assert!(header.split(',').all(|h| h.parse::<f64>().is_err()), "{f} header {header}");
        }
    }
    assert!(!a.join("error.json").exists());
    let (v_sdp, v_p, se) = bounds(&a);
    assert!((v_sdp - 1f64.cosh().ln()).abs() <= 5e-3);
    assert!(v_sdp <= v_p + 3.0 * se);

    let manifest = a.join("manifest.json");
    let out = momentctl(&["replay", manifest.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ARTIFACTS {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f} differs after replay");
    }
}

#[test]
fn cubic_bounds_file_satisfies_the_sandwich() {
    let tmp = tempfile::tempdir().unwrap();
    let out = momentctl(&["solve", "--problem", "cubic", "--dx", "3", "--du", "1", "--out", tmp.path().to_str().unwrap()]);
    assert!(out.status.success());
    let (v_sdp, v_p, se) = bounds(tmp.path());
    assert!((0.50..=0.63).contains(&v_sdp), "{v_sdp}");
    assert!(v_sdp <= v_p + 3.0 * se);
}

#[test]
fn validation_errors_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    std::fs::write(
        &bad,
        "horizon = -1.0\nx0 = 0.0\ndrift = [[0, 1, 1.0]]\ndiffusion = [[0, 0, 1.0]]\nrunning_cost = [[2, 0, 1.0]]\n",
    )
    .unwrap();
    let dir = tmp.path().join("run");
    let out = momentctl(&["solve", "--problem", bad.to_str().unwrap(), "--dx", "1", "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&dir), ("validation".into(), 2));

    let unknown = tmp.path().join("unknown.toml");
    std::fs::write(&unknown, "horizon = 1.0\nx0 = 0.0\nsurprise = 3\n").unwrap();
    let out = momentctl(&["solve", "--problem", unknown.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&dir).1, 2);
}

#[test]
fn sizing_errors_exit_with_code_three() {
    let tmp = tempfile::tempdir().unwrap();
    let out = momentctl(&["solve", "--problem", "lqr", "--dx", "1", "--k", "9", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_kind(tmp.path()), ("sizing".into(), 3));
    for f in ARTIFACTS.iter().skip(1) {
        assert!(!tmp.path().join(f).exists(), "{f} should not exist");
    }
}

#[test]
fn solver_failures_exit_with_code_four() {
    let tmp = tempfile::tempdir().unwrap();
    let out = momentctl(&[
        "solve", "--problem", "cubic", "--dx", "3", "--max-iters", "2", "--out", tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    let v: serde_json::Value = serde_json::from_str(&read(&tmp.path().join("error.json"))).unwrap();
    assert_eq!(v["kind"], "solver");
    assert_eq!(v["status"], "max_iters");
    assert!(v["residuals"]["primal"].is_number());
}

#[test]
fn diverging_controllers_exit_with_code_five() {
    // higher-order fits to the impulsive fisheries moments are unstable
    let tmp = tempfile::tempdir().unwrap();
    let out = momentctl(&[
        "solve", "--problem", "fisheries", "--dx", "2", "--np", "2", "--out", tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(5));
    assert_eq!(error_kind(tmp.path()).1, 5);
    // the relaxation itself succeeded and its outputs are kept
    assert!(tmp.path().join("moments.csv").exists());
    assert!(!tmp.path().join("bounds.csv").exists());
}

#[test]
fn sweep_is_nondecreasing_and_matches_single_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = momentctl(&["sweep", "--problem", "cubic", "--dx", "2,3,9", "--du", "1", "--out", tmp.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut r = csv::Reader::from_path(tmp.path().join("sweep.csv")).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(&header[..5], ["d_x", "d_u", "K", "v_sdp", "v_p"]);
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    let v: Vec<f64> = rows.iter().map(|row| row[3].parse().unwrap()).collect();
    assert!(v.windows(2).all(|w| w[1] >= w[0] - 1e-5), "{v:?}");
    assert!(v[0] <= 0.1 && (0.50..=0.63).contains(&v[1]));
    for row in &rows {
        assert_eq!(&row[7], "ok");
        let (v_sdp, v_p, _) = bounds(&tmp.path().join(format!("dx{}_du{}", &row[0], &row[1])));
        assert_eq!(row[3].parse::<f64>().unwrap(), v_sdp);
        assert_eq!(row[4].parse::<f64>().unwrap(), v_p);
    }
}

#[test]
fn single_size_sweep_equals_the_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let opts = RunOptions::new(1, 1);
    let rows = pipeline::sweep("lqr", &[(1, 1)], &opts, tmp.path()).unwrap();
    let direct = pipeline::run_pipeline("lqr", &opts, None).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].v_sdp, Some(direct.v_sdp));
    assert_eq!(rows[0].v_p, Some(direct.v_p));
    assert_eq!(rows[0].order, Some(2));
}

#[test]
fn exported_program_solves_to_the_same_bound() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    assert!(momentctl(&["export", "--problem", "lqr", "--dx", "1", "--steps", "40", "--out", dir]).status.success());
    let out = momentctl(&["solve-program", tmp.path().join("program.txt").to_str().unwrap()]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["status"], "optimal");

    let opts = RunOptions {
        steps: 40,
        ..RunOptions::new(1, 1)
    };
    let run = pipeline::run_pipeline("lqr", &opts, None).unwrap();
    assert!((v["objective"].as_f64().unwrap() - run.v_sdp).abs() < 1e-7);
}

#[test]
fn moments_subcommand_prints_the_equations() {
    let out = momentctl(&["moments", "--problem", "lqr", "--dx", "1"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "dmu[x]/dt = mu[u]\ndmu[x^2]/dt = 1 + 2*mu[xu]\n");
}

#[test]
fn json_problem_files_and_manifests_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let json = tmp.path().join("lqr.json");
    std::fs::write(
        &json,
        r#"{"horizon": 1.0, "x0": 0.0, "drift": [[0, 1, 1.0]], "diffusion": [[0, 0, 1.0]],
            "running_cost": [[2, 0, 1.0], [0, 2, 1.0]]}"#,
    )
    .unwrap();
    let dir = tmp.path().join("run");
    let out = pipeline::run_pipeline(json.to_str().unwrap(), &RunOptions::new(1, 1), Some(&dir)).unwrap();
    let builtin = pipeline::run_pipeline("lqr", &RunOptions::new(1, 1), None).unwrap();
    assert_eq!(out.v_sdp, builtin.v_sdp);

    let manifest = RunManifest::read(&dir.join("manifest.json")).unwrap();
    assert_eq!(manifest.input_format, "json");
    assert_eq!(manifest.input_sha256, pipeline::sha256_hex(&manifest.input_text));
    // a manifest whose embedded input was edited is rejected
    let mut tampered = manifest.clone();
    tampered.input_text.push(' ');
    assert!(pipeline::replay(&tampered, None).is_err());
}
