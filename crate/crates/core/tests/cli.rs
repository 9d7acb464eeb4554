use std::fs;
use std::path::Path;
use std::process::Command;

use bsde_order::cli::{run_scenario, Command as Cmd, ScenarioConfig};

const BIN: &str = env!("CARGO_BIN_EXE_bsde-order");

fn run(args: &[&str], config: Option<&str>, out: &Path) -> (i32, String) {
    let mut cmd = Command::new(BIN);
    cmd.args(args).arg("--out").arg(out).arg("--quiet");
    let cfg_path = out.with_extension("json");
    if let Some(text) = config {
        fs::write(&cfg_path, text).unwrap();
        cmd.arg("--config").arg(&cfg_path);
    }
    let o = cmd.output().unwrap();
    (o.status.code().unwrap(), String::from_utf8_lossy(&o.stderr).into_owned())
}

fn strip_timing(text: &str) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(text).unwrap();
    v.as_object_mut().unwrap().remove("timing");
    v
}

const MARTINGALE: &str = r#"{
  "seed": 1,
  "problem": {"n": 1, "d": 1, "horizon": 1.0, "generator": {"builtin": "zero"}, "terminal": ["w1"]},
  "scheme": {"type": "tree", "steps": 4}
}"#;

const ROW_NORM: &str = r#"{
  "seed": 1,
  "problem": {"n": 2, "d": 1, "horizon": 1.0, "generator": {"builtin": "ex32_g"},
              "pairs": [{"first": ["0", "0"], "second": ["0", "1"]}]},
  "order": {"type": "component", "index": 1},
  "scheme": {"type": "ode", "steps": 64}
}"#;

#[test]
fn solve_martingale_writes_solution_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let (code, err) = run(&["solve"], Some(MARTINGALE), &out);
    assert_eq!(code, 0, "{err}");
    let csv = fs::read_to_string(out.join("solution.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,node_or_path,Y1,Z11");
    let rows: Vec<Vec<f64>> =
        lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 1 + 2 + 4 + 8 + 16);
    assert_eq!(rows[0][2], 0.0);
    for r in &rows {
        assert!((r[3] - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn two_step_tree_has_seven_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let (code, err) = run(&["solve", "--steps", "2"], Some(MARTINGALE), &out);
    assert_eq!(code, 0, "{err}");
    assert_eq!(fs::read_to_string(out.join("solution.csv")).unwrap().lines().count(), 1 + 7);
}

#[test]
fn row_norm_comparison_exits_with_violation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let (code, _) = run(&["compare"], Some(ROW_NORM), &out);
    assert_eq!(code, 1);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let root = report["comparison"]["trials"][0]["root_margin"].as_f64().unwrap();
    assert!((root + std::f64::consts::E - 1.0).abs() <= 1e-6);
    let margins = fs::read_to_string(out.join("margins.csv")).unwrap();
    assert_eq!(margins.lines().next().unwrap(), "trial,t,node_or_path,margin");
    assert_eq!(margins.lines().count(), 1 + 65);
}

#[test]
fn malformed_expression_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = MARTINGALE.replace(r#"["w1"]"#, r#"["w1 +"]"#);
    let (code, err) = run(&["solve"], Some(&bad), &dir.path().join("run"));
    assert_eq!(code, 2);
    assert!(err.contains("problem.terminal[0]") && err.contains("position"), "{err}");
    let bad = MARTINGALE.replace(r#""steps": 4"#, r#""steps": -4"#);
    let (code, err) = run(&["solve"], Some(&bad), &dir.path().join("run2"));
    assert_eq!(code, 2);
    assert!(err.contains("scheme.steps"), "{err}");
    let (code, _) = run(&["solve"], None, &dir.path().join("run3"));
    assert_eq!(code, 2);
}

#[test]
fn unknown_builtin_and_missing_seed_fail_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = run(&["solve"], Some(&MARTINGALE.replace("zero", "nope")), &dir.path().join("a"));
    assert_eq!(code, 2);
    assert!(err.contains("problem.generator"), "{err}");
    let (code, err) = run(&["solve"], Some(&MARTINGALE.replace(r#""seed": 1,"#, "")), &dir.path().join("b"));
    assert_eq!(code, 2);
    assert!(err.contains("seed"), "{err}");
}

#[test]
fn empty_comparison_writes_headers_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = ROW_NORM.replace(r#""pairs": [{"first": ["0", "0"], "second": ["0", "1"]}]"#, r#""pairs": []"#);
    let (code, err) = run(&["compare"], Some(&cfg), &out);
    assert_eq!(code, 0, "{err}");
    assert_eq!(fs::read_to_string(out.join("margins.csv")).unwrap(), "trial,t,node_or_path,margin\n");
    assert_eq!(fs::read_to_string(out.join("checker.csv")).unwrap(), "probe_id,t,epsilon,C_required\n");
}

#[test]
fn check_condition_writes_probes_and_flags_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = r#"{
      "seed": 5,
      "problem": {"n": 2, "d": 1, "horizon": 1.0,
                  "generator": {"builtin": "ex31_g1"}, "generator2": {"builtin": "ex31_g2"}},
      "order": {"type": "component", "index": 1},
      "checker": {"condition": "comparison", "schedule": {"samples": 500, "shrink_directions": 8}}
    }"#;
    let (code, err) = run(&["check-condition"], Some(cfg), &out);
    assert_eq!(code, 1, "{err}");
    let probes = fs::read_to_string(out.join("checker.csv")).unwrap();
    // ε = 2^-j for j = 0..=20.
    assert_eq!(probes.lines().count(), 1 + 500 + 8 * 21);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["condition"]["classification"], "divergent");
}

#[test]
fn detect_structure_and_viability() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
      "seed": 2,
      "problem": {"n": 2, "d": 1, "horizon": 1.0, "generator": {"builtin": "diag_demo"}}
    }"#;
    let (code, err) = run(&["detect-structure"], Some(cfg), &dir.path().join("a"));
    assert_eq!(code, 0, "{err}");
    let viab = r#"{
      "seed": 2,
      "problem": {"n": 2, "d": 1, "horizon": 1.0,
                  "generator": {"expressions": ["-y1", "-y2"], "mu": 1.0},
                  "terminals": [["abs(w1)", "0"], ["1", "w1"]]},
      "order": {"type": "component", "index": 1},
      "scheme": {"type": "tree", "steps": 8}
    }"#;
    let (code, err) = run(&["viability"], Some(viab), &dir.path().join("b"));
    assert_eq!(code, 0, "{err}");
    let outside = viab.replace(r#"["abs(w1)", "0"]"#, r#"["w1", "0"]"#);
    let (code, err) = run(&["viability"], Some(&outside), &dir.path().join("c"));
    assert_eq!(code, 2, "{err}");
}

#[test]
fn lsmc_runs_are_reproducible_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let args = ["solve", "--scheme", "lsmc", "--paths", "2000", "--seed", "11"];
    assert_eq!(run(&args, Some(MARTINGALE), &a).0, 0);
    assert_eq!(run(&args, Some(MARTINGALE), &b).0, 0);
    let ra = fs::read_to_string(a.join("report.json")).unwrap();
    let rb = fs::read_to_string(b.join("report.json")).unwrap();
    assert_eq!(strip_timing(&ra), strip_timing(&rb));
    assert_eq!(fs::read(a.join("solution.csv")).unwrap(), fs::read(b.join("solution.csv")).unwrap());
    let v = strip_timing(&ra);
    assert_eq!(v["config"]["seed"], 11);
    assert_eq!(v["config"]["scheme"]["type"], "lsmc");
}

#[test]
fn config_round_trip_gives_identical_results() {
    let cfg = ScenarioConfig::from_json(ROW_NORM).unwrap();
    let again = ScenarioConfig::from_json(&cfg.to_json()).unwrap();
    let a = run_scenario(Cmd::Compare, &cfg).unwrap();
    let b = run_scenario(Cmd::Compare, &again).unwrap();
    assert_eq!(a.comparison, b.comparison);
    assert_eq!(a.exit_code(), 1);
}

#[test]
fn examples_command_writes_markdown() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gold");
    let (code, err) = run(&["examples", "--seed", "3"], None, &out);
    assert_eq!(code, 0, "{err}");
    let md = fs::read_to_string(out.join("golden.md")).unwrap();
    assert!(md.contains("## affine_shift_divergence"));
    assert!(!md.contains("- [ ]"));
}
