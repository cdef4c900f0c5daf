use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn gme(args: &[&str]) -> Output {
    gme_env(args, &[])
}

fn gme_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gme"));
    cmd.args(args).env_remove("GME_SOLVER_OPTIONS").env_remove("GME_GAP_TOL");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("gme runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const GHZ3: &str = r#"{"dims": [2, 2, 2], "kind": "pure", "rational": [["1", "0"], ["0", "0"], ["0", "0"], ["0", "0"], ["0", "0"], ["0", "0"], ["0", "0"], ["1", "0"]]}"#;

#[test]
fn trees_lists_six_on_six_vertices() {
    let o = gme(&["trees", "--n", "6"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.starts_with("6 trees on 6 vertices"), "{out}");
    assert_eq!(out.lines().count(), 7);
    assert!(out.lines().any(|l| l.starts_with("6a ")));
    let four = stdout(&gme(&["trees", "--n", "4"]));
    assert!(four.lines().any(|l| l.starts_with("4a ")) && four.lines().any(|l| l.starts_with("4b ")));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(gme(&["search", "--n", "4", "--config", "0-1,1-x"]).status.code(), Some(2));
    assert_eq!(gme(&["search", "--n", "4", "--config", "0-1,2-3"]).status.code(), Some(2));
    assert_eq!(gme(&["search", "--n", "3", "--config", "0-1,1-2,2-3"]).status.code(), Some(2));
    assert_eq!(gme(&["search", "--config", "0-1"]).status.code(), Some(2));
    assert_eq!(gme(&["verify", "nope", "--config", "0-1"]).status.code(), Some(2));
    let o = gme_env(&["trees", "--n", "3"], &[("GME_SOLVER_OPTIONS", "gap_tol")]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(gme(&["construct", "--block", "5a"]).status.code(), Some(2));
}

#[test]
fn two_parties_report_no_detection() {
    let o = gme(&["search", "--n", "2", "--config", "0-1", "--max-iters", "2"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("no negative witness value found"));
}

#[test]
fn solver_failure_exits_three() {
    let o = gme_env(
        &["search", "--n", "3", "--config", "0-1,1-2", "--max-iters", "1"],
        &[("GME_SOLVER_OPTIONS", "max_iters=2")],
    );
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn search_files_are_reproducible_across_job_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let base = ["search", "--n", "3", "--config", "0-1,1-2", "--seeds", "2", "--max-iters", "3"];
    for (dir, jobs) in [(a.path(), "1"), (b.path(), "2")] {
        let mut args = base.to_vec();
        args.extend(["--jobs", jobs, "--out", dir.to_str().unwrap()]);
        let o = gme(&args);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for seed in 0..2 {
        let name = format!("seed-{seed}.json");
        let fa = std::fs::read(a.path().join(&name)).unwrap();
        let fb = std::fs::read(b.path().join(&name)).unwrap();
        assert!(fa == fb, "{name} differs between job counts");
    }
    let seed = read_json(&a.path().join("seed-0.json"));
    assert_eq!(seed["manifest"]["command"], "search");
    assert_eq!(seed["manifest"]["seeds"], serde_json::json!([0, 1]));
    assert!(seed["manifest"].get("wall_clock_seconds").is_none());
    assert_eq!(seed["witness"]["edges"], serde_json::json!([[0, 1], [1, 2]]));
    assert_eq!(seed["state"]["dims"], serde_json::json!([2, 2, 2]));
    let summary = read_json(&a.path().join("summary.json"));
    assert!(summary["manifest"]["wall_clock_seconds"].as_f64().unwrap() > 0.0);
    assert_eq!(summary["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn undetected_state_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("ghz.json");
    std::fs::write(&state, GHZ3).unwrap();
    let report = dir.path().join("report.json");
    let o = gme(&[
        "verify",
        state.to_str().unwrap(),
        "--config",
        "0-1,1-2",
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4));
    let out = stdout(&o);
    assert!(out.contains("marginal 0-1") && out.contains("certified false"), "{out}");
    let r = read_json(&report);
    assert_eq!(r["report"]["certified"], false);
    assert_eq!(r["report"]["marginals"]["all_pass"], true);
    let key = state.display().to_string();
    assert_eq!(r["manifest"]["fixture_hashes"][&key].as_str().unwrap().len(), 64);

    let o = gme(&["robustness", state.to_str().unwrap(), "--config", "0-1,1-2"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stdout(&o).starts_with("p_max 0.000000e0"), "{}", stdout(&o));
}

#[test]
fn malformed_state_file_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("bad.json");
    std::fs::write(&state, r#"{"dims": [2, 2], "kind": "pure", "rational": [["1", "0"]]}"#).unwrap();
    let o = gme(&["verify", state.to_str().unwrap(), "--config", "0-1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.json"));
}

#[test]
fn four_qubit_fixture_is_detected_but_its_marginals_miss_ppt() {
    let o = gme(&["verify", "4b", "--config", "4b"]);
    let out = stdout(&o);
    assert!(out.contains("certificate_valid true"), "{out}");
    let value: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("witness_value "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(value < -3.0e-3, "{value}");
    // The fraction-rounded amplitudes leave two marginals slightly non-PPT.
    assert!(out.contains("FAIL"));
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn construct_from_graph_file() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("path6.json");
    std::fs::write(&graph, r#"{"n_parties": 6, "edges": [[0, 1], [1, 2], [2, 3], [3, 4], [4, 5]]}"#).unwrap();
    let out = dir.path().join("out");
    let o = gme(&["construct", graph.to_str().unwrap(), "--block", "5a", "--out", out.to_str().unwrap()]);
    let text = stdout(&o);
    assert!(text.contains("copies 2 total_qubits 10"), "{text}");
    let r = read_json(&out.join("report.json"));
    assert_eq!(r["report"]["cuts_checked"], 31);
    assert_eq!(r["report"]["all_cuts_entangled"], true);
    assert_eq!(r["report"]["marginals_factorize"], true);
    // The block is not the unique ground state of its witness.
    assert_eq!(r["report"]["pedigree"], false);
    assert_eq!(o.status.code(), Some(4));
    let state = read_json(&out.join("composite.json"));
    assert_eq!(state["dims"], serde_json::json!([2, 4, 4, 4, 4, 2]));

    let o = gme(&["construct", "--grid", "4x4", "--block", "5a"]);
    assert!(stdout(&o).contains("total_qubits 20"));
    assert!(stdout(&o).contains("all_cuts_entangled true"));
}
