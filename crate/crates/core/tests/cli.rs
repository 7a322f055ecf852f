use std::path::Path;
use std::process::{Command, Output};

use poisson_bicgs::report::{parse_residual_csv, CSV_HEADER};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_poisson-bicgs")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn read_json(p: &str) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn zero_tolerance_is_a_configuration_error() {
    let o = run(&["--mesh", "4,4,4", "--tol", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("tol must be positive"), "{}", stderr(&o));
}

#[test]
fn indivisible_decomposition_is_a_configuration_error() {
    let o = run(&["--mesh", "5,4,4", "--decomp", "2,1,1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("divisible"), "{}", stderr(&o));
}

#[test]
fn unknown_solver_is_rejected() {
    let o = run(&["--mesh", "4,4,4", "--solver", "cg"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown solver"));
}

#[test]
fn non_convergence_exits_with_two() {
    let o = run(&["--mesh", "12,12,12", "--solver", "bicgs", "--max-iter", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("converged=false"));
}

#[test]
fn csv_and_json_describe_the_same_run() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, json) = (path(dir.path(), "r.csv"), path(dir.path(), "r.json"));
    let o = run(&["--mesh", "8,8,8", "--solver", "bicgs-g-ci", "--prec-iters", "4", "--residual-csv", &csv, "--report-json", &json]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some(CSV_HEADER));
    let rows = parse_residual_csv(&text).unwrap();
    let report = read_json(&json);
    let history = report["residual_history"].as_array().unwrap();
    assert_eq!(rows.len(), history.len());
    assert_eq!(rows.len() as u64, report["outer_iterations"].as_u64().unwrap());
    for ((it, res), h) in rows.iter().zip(history) {
        assert_eq!(*it as u64, h[0].as_u64().unwrap());
        assert_eq!(*res, h[1].as_f64().unwrap());
    }

    assert_eq!(report["converged"], true);
    assert_eq!(report["rank_count"], 1);
    assert_eq!(report["message_counters"]["halo_messages_sent"], 0);
    for key in ["preconditioner", "halo_exchange", "allreduce", "stencil_kernels", "vector_kernels", "total"] {
        assert!(report["phase_timings"][key].as_f64().unwrap() >= 0.0, "{key}");
    }
    assert_eq!(report["config"]["solver"], "bicgs-g-ci");
}

#[test]
fn multi_rank_run_reports_halo_traffic() {
    let dir = tempfile::tempdir().unwrap();
    let json = path(dir.path(), "r.json");
    let o = run(&["--mesh", "8,8,8", "--decomp", "2,2,1", "--solver", "bicgs-bj-ci", "--prec-iters", "4", "--report-json", &json]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = read_json(&json);
    assert_eq!(report["rank_count"], 4);
    assert!(report["message_counters"]["halo_messages_sent"].as_u64().unwrap() > 0);
}

#[test]
fn repeats_are_summarised() {
    let dir = tempfile::tempdir().unwrap();
    let json = path(dir.path(), "r.json");
    let o = run(&["--mesh", "6,6,6", "--solver", "bicgs", "--repeats", "2", "--report-json", &json]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rep = &read_json(&json)["repeats"];
    assert_eq!(rep["runs"].as_array().unwrap().len(), 2);
    assert_eq!(rep["stddev_outer_iterations"], 0.0);
    assert!(rep["mean_total_time"].as_f64().unwrap() > 0.0);
    assert!(rep["stddev_total_time"].as_f64().unwrap() >= 0.0);
}

#[test]
fn json_report_reruns_to_identical_history() {
    let dir = tempfile::tempdir().unwrap();
    let (csv1, json1, csv2) = (path(dir.path(), "a.csv"), path(dir.path(), "a.json"), path(dir.path(), "b.csv"));
    let o = run(&[
        "--mesh", "8,6,4", "--decomp", "2,1,1", "--solver", "bicgs-gnocomm-ci", "--prec-iters", "3", "--rescale-min", "10",
        "--bc-xlo", "neumann:0.5", "--domain-y", "-1,1", "--residual-csv", &csv1, "--report-json", &json1,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = run(&["--config", &json1, "--residual-csv", &csv2, "--report-json", ""]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(&csv1).unwrap(), std::fs::read_to_string(&csv2).unwrap());
}

#[test]
fn command_line_overrides_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = path(dir.path(), "run.cfg");
    let json = path(dir.path(), "r.json");
    std::fs::write(&cfg, "# small run\nmesh = 6,6,6\nsolver = bicgs-g-ci\ntol = 1e-6\n").unwrap();
    let o = run(&["--config", &cfg, "--solver", "bicgs", "--report-json", &json]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = read_json(&json);
    assert_eq!(report["solver_name"], "bicgs");
    assert_eq!(report["config"]["tol"], 1e-6);
    assert_eq!(report["config"]["mesh"], serde_json::json!([6, 6, 6]));
}

#[test]
fn unknown_config_key_is_reported_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = path(dir.path(), "run.cfg");
    std::fs::write(&cfg, "mesh = 4,4,4\nfoo = 1\n").unwrap();
    let o = run(&["--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn unwritable_output_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let csv = path(&dir.path().join("missing"), "r.csv");
    let o = run(&["--mesh", "4,4,4", "--solver", "bicgs", "--residual-csv", &csv]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("r.csv"), "{}", stderr(&o));
}

#[test]
fn nocomm_iteration_bound_warning_is_logged() {
    let o = run(&["--mesh", "8,8,8", "--decomp", "2,1,1", "--prec-iters", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("exceeds N_s/2"), "{}", stderr(&o));
}
