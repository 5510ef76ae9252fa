//! End-to-end tests of the `vecalloc` binary: argument handling, exit codes,
//! and the document formats it reads and writes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use vecalloc_cli::kbdoc::KbDocument;
use vecalloc_cli::report::AllocationReport;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vecalloc"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("vecalloc-cli-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn allocate_splits_surge_evenly_across_the_vessel() {
    let out = bin()
        .args(["allocate", "--config"])
        .arg(config("usv_docking.json"))
        .args(["--wrench", "100000,0,0", "--method", "pinv", "--json"])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let report: AllocationReport = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report.method, "pinv");
    assert_eq!(report.commands.len(), 3);
    for c in &report.commands {
        assert!((c.thrust - 100000.0 / 3.0).abs() < 1e-6);
        assert!(c.beta.abs() < 1e-9, "azimuth {} deg should be 0", c.beta);
    }
    for (p, w) in report.produced.iter().zip(&report.wrench) {
        assert!((p - w).abs() <= 1e-9 * 1e5);
    }
}

#[test]
fn allocate_zero_wrench_idles_every_thruster() {
    let out = bin()
        .args(["allocate", "--config"])
        .arg(config("usv_docking.json"))
        .args(["--wrench", "0,0,0", "--method", "pinv", "--json"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let report: AllocationReport = serde_json::from_str(&stdout(&out)).unwrap();
    for c in &report.commands {
        assert!(c.thrust.abs() < 1e-12);
    }
}

#[test]
fn allocation_report_json_round_trips() {
    let out = bin()
        .args(["allocate", "--config"])
        .arg(config("usv_docking.json"))
        .args([
            "--wrench",
            "80000,10000,-5000",
            "--method",
            "convex",
            "--json",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    let report: AllocationReport = serde_json::from_str(&text).unwrap();
    let again: AllocationReport = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(report, again);
    assert_eq!(report.status.as_deref(), Some("optimal"));
}

#[test]
fn allocate_rejects_malformed_config() {
    let path = tmp("broken.json");
    std::fs::write(&path, "{ not json").unwrap();
    let out = bin()
        .args(["allocate", "--config"])
        .arg(&path)
        .args(["--wrench", "0,0,0", "--method", "pinv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("parse error"));
}

#[test]
fn allocate_rejects_unknown_config_keys() {
    let path = tmp("unknown_key.json");
    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(config("usv_sweep.json")).unwrap()).unwrap();
    doc.as_object_mut()
        .unwrap()
        .insert("typo_section".into(), serde_json::json!(1));
    std::fs::write(&path, serde_json::to_string(&doc).unwrap()).unwrap();
    let out = bin()
        .args(["allocate", "--config"])
        .arg(&path)
        .args(["--wrench", "0,0,0", "--method", "pinv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("typo_section"));
}

#[test]
fn allocate_rejects_wrong_wrench_arity() {
    let out = bin()
        .args(["allocate", "--config"])
        .arg(config("usv_docking.json"))
        .args(["--wrench", "1,2", "--method", "pinv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("expected 3"));
}

#[test]
fn allocate_exits_two_when_the_iteration_budget_is_hit() {
    let path = tmp("starved.json");
    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(config("usv_docking.json")).unwrap())
            .unwrap();
    doc["convex"]["max_iters"] = serde_json::json!(1);
    std::fs::write(&path, serde_json::to_string(&doc).unwrap()).unwrap();
    let out = bin()
        .args(["allocate", "--config"])
        .arg(&path)
        .args(["--wrench", "100000,0,0", "--method", "convex", "--json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let report: AllocationReport = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report.status.as_deref(), Some("max_iters"));
}

#[test]
fn solve_kb_finds_the_vessel_rest_direction() {
    let out = bin()
        .args(["solve-kb", "--config"])
        .arg(config("usv_sweep.json"))
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let doc = KbDocument::parse(&stdout(&out)).unwrap();
    assert!((doc.objective - 3.0).abs() < 1e-6);
    assert_eq!(doc.reduced_dim, 3);
    assert!(doc.residual <= 1e-8);
    for n in &doc.block_norms {
        assert!(*n >= 1.0 - 1e-9);
    }
    // Emitted documents re-parse to equal values.
    let again = KbDocument::parse(&doc.to_json()).unwrap();
    assert_eq!(doc, again);
}

#[test]
fn solve_kb_writes_a_document_that_allocate_accepts() {
    let kb_path = tmp("vessel_kb.json");
    let out = bin()
        .args(["solve-kb", "--config"])
        .arg(config("usv_sweep.json"))
        .arg("--out")
        .arg(&kb_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let out = bin()
        .args(["allocate", "--config"])
        .arg(config("usv_sweep.json"))
        .args(["--wrench", "50000,0,0", "--method", "smooth", "--kb"])
        .arg(&kb_path)
        .args(["--json"])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let report: AllocationReport = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report.method, "smooth");
    let smoothing = report.smoothing.expect("smooth method reports diagnostics");
    assert!(smoothing.b >= 0.0);
    for (p, w) in report.produced.iter().zip(&report.wrench) {
        assert!((p - w).abs() <= 1e-9 * 5e4);
    }
}

#[test]
fn solve_kb_reports_the_balanced_quad_pattern() {
    let out = bin()
        .args(["solve-kb", "--config"])
        .arg(config("quad_sweep.json"))
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let doc = KbDocument::parse(&stdout(&out)).unwrap();
    assert_eq!(doc.reduced_dim, 1);
    assert!((doc.objective - 4.0).abs() < 1e-6);
    let expect = [1.0, 0.0, -1.0, 0.0, 1.0, 0.0, -1.0, 0.0];
    let sign = doc.k_b[0].signum();
    for (got, want) in doc.k_b.iter().zip(&expect) {
        assert!((got - sign * want).abs() < 1e-6, "k_b = {:?}", doc.k_b);
    }
}

#[test]
fn solve_kb_exits_three_when_typicals_exhaust_the_kernel() {
    let out = bin()
        .args(["solve-kb", "--config"])
        .arg(config("usv_sweep.json"))
        .args([
            "--typical",
            "1,0,0",
            "--typical",
            "0,1,0",
            "--typical",
            "0,0,1",
            "--typical",
            "1,1,0",
            "--typical",
            "0,1,1",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("infeasible"));
}

#[test]
fn solve_kb_exits_three_when_a_typical_pins_an_actuator() {
    // Surge-only typical: every block must be orthogonal to +x, and the
    // kernel then forces the bow block to zero, so no feasible direction
    // with unit block norms exists.
    let out = bin()
        .args(["solve-kb", "--config"])
        .arg(config("usv_sweep.json"))
        .args(["--typical", "1,0,0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("actuator 2"));
}

#[test]
fn simulate_writes_the_docking_run() {
    let path = tmp("usv_run.csv");
    let out = bin()
        .args(["simulate", "--scenario"])
        .arg(config("usv_docking.json"))
        .arg("--out")
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# vecalloc-timeseries v1");
    assert!(lines[1].starts_with("t,tau_ref_fx,"));
    // 100 s at dt = 0.5 -> 201 samples plus the two header lines.
    assert_eq!(lines.len(), 203);
}

#[test]
fn simulate_summary_confirms_the_quad_servo_budget() {
    let path = tmp("quad_run.csv");
    let out = bin()
        .args(["simulate", "--scenario"])
        .arg(config("quad_flip.json"))
        .arg("--out")
        .arg(&path)
        .args(["--summary"])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let summary = stdout(&out);
    let max_step: f64 = summary
        .lines()
        .find_map(|l| l.strip_prefix("max_angle_step_deg: "))
        .expect("summary line present")
        .parse()
        .unwrap();
    assert!(max_step <= 6.0 + 1e-9, "servo exceeded 6 deg: {max_step}");
}

#[test]
fn simulate_requires_a_scenario_section() {
    let out = bin()
        .args(["simulate", "--scenario"])
        .arg(config("usv_sweep.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("scenario"));
}

#[test]
fn simulate_fails_cleanly_on_unwritable_output() {
    let out = bin()
        .args(["simulate", "--scenario"])
        .arg(config("usv_docking.json"))
        .args(["--out", "/dev/null/nested/run.csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn reproduce_emits_one_csv_per_curve() {
    let dir = tmp("figs-usv-angles");
    let out = bin()
        .args(["reproduce", "--figure", "usv-angles", "--out-dir"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    for label in ["pinv", "convex", "classic"] {
        let path = dir.join(format!("usv-angles-{label}.csv"));
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# vecalloc-figure v1\n"));
        assert!(text.lines().nth(1).unwrap().starts_with("t,beta1_deg"));
    }
    let printed = stdout(&out);
    assert_eq!(printed.lines().count(), 3);
}

#[test]
fn reproduce_lists_names_for_an_unknown_figure() {
    let out = bin()
        .args(["reproduce", "--figure", "nope", "--out-dir"])
        .arg(tmp("figs-unknown"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    for name in ["usv-angles", "quad-tauy", "lipschitz-usv", "lipschitz-quad"] {
        assert!(err.contains(name), "missing {name} in: {err}");
    }
}

#[test]
fn reproduce_output_is_independent_of_the_thread_cap() {
    let read_dir = |dir: &Path| {
        let mut names: Vec<String> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        names
            .into_iter()
            .map(|n| (n.clone(), std::fs::read(dir.join(n)).unwrap()))
            .collect::<Vec<_>>()
    };
    let serial = tmp("figs-serial");
    let parallel = tmp("figs-parallel");
    for (dir, threads) in [(&serial, "1"), (&parallel, "3")] {
        let out = bin()
            .env("VECALLOC_THREADS", threads)
            .args(["reproduce", "--figure", "quad-tauy", "--out-dir"])
            .arg(dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "stderr: {}", stderr(&out));
    }
    assert_eq!(read_dir(&serial), read_dir(&parallel));
}
