//! End-to-end runs of the `junta` binary: exit codes, report files, summary lines.

use std::path::Path;
use std::process::{Command, Output};

use junta_harness::RunReport;
use serde_json::Value;

const HALFSPACE: &str = r#"
[target]
kind = "halfspace"
direction = [0.6, 0.8, 0.0]
"#;

const SMALL_VALIDATE: &str = r#"
[target]
kind = "constant"
value = 1.0
dim = 1

[validate]
instances = 10
mc_instances = 3
mc_samples = 1000
control_instances = 4
covariance_reps = 3
"#;

fn junta(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_junta")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn summary(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(text.lines().last().expect("summary line")).unwrap()
}

#[test]
fn validate_perturbation_suite_only_runs_its_checks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "v.toml", SMALL_VALIDATE);
    let report = dir.path().join("v.json");
    let out = junta(&["validate", "--config", &cfg, "--suite", "appendix-b", "--out", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(summary(&out)["pass"], true);
    let r = RunReport::read(&report).unwrap();
    let names: Vec<&str> = r.body.checks.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(names, ["pseudoinverse_stability", "davis_kahan"]);
}

#[test]
fn validate_default_suite_three_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "v.toml", &format!("seeds = [0, 1, 2]\n{SMALL_VALIDATE}"));
    let out = junta(&["validate", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 3);
    for s in 0..3 {
        assert!(dir.path().join(format!("validate-seed{s}.json")).exists());
    }
}

#[test]
fn uncaught_control_is_reported_as_failure() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{SMALL_VALIDATE}control_factor = 1.0\n");
    let cfg = write_config(dir.path(), "v.toml", &text);
    let out = junta(&["validate", "--config", &cfg, "--suite", "appendix-b", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let s = summary(&out);
    assert_eq!(s["pass"], false);
    assert_eq!(s["failed"].as_array().unwrap().len(), 2);
}

#[test]
fn project_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "p.toml", HALFSPACE);
    // Same out path both times: the config, including `out`, is part of the body.
    let path = dir.path().join("p.json");
    let mut bodies = Vec::new();
    for _ in 0..2 {
        let out = junta(&["project", "--config", &cfg, "--seed", "4", "--out", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        bodies.push(RunReport::read(&path).unwrap());
    }
    let (ra, rb) = (&bodies[0], &bodies[1]);
    assert_eq!(ra.body_json(), rb.body_json());
    assert_eq!(ra.body.seed, 4);
}

#[test]
fn failed_expectation_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{HALFSPACE}\n[expect]\nm = 3\n");
    let cfg = write_config(dir.path(), "p.toml", &text);
    let out = junta(&["project", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(junta(&["estimate"]).status.code(), Some(2));
    assert_eq!(junta(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(junta(&["validate", "--suite", "nope"]).status.code(), Some(2));
    let text = format!("{HALFSPACE}\n[algorithm]\nc_l = 0.2\nc_u = 0.1\n");
    let cfg = write_config(dir.path(), "t.toml", &text);
    assert_eq!(junta(&["test", "--config", &cfg]).status.code(), Some(2));
    let cfg = write_config(dir.path(), "bad.toml", "schema_version = 2\n");
    assert_eq!(junta(&["project", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn budget_and_size_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "e.toml", HALFSPACE);
    let report = dir.path().join("e.json");
    let out = junta(&["estimate", "--config", &cfg, "--budget", "500", "--out", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let r = RunReport::read(&report).unwrap();
    assert!(r.body.truncated);
    assert_eq!(r.body.queries.oracle, 500);

    let text = format!("{HALFSPACE}\n[search]\nmode = \"analytic\"\n[search.projection]\nm = 20\neta = 0.05\neps_prime = 0.0\nt = 0.3\n[search.caps]\nmax_elements = 0\n");
    let cfg = write_config(dir.path(), "s.toml", &text);
    let out = junta(&["estimate", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(summary(&out)["error"].as_str().unwrap().contains("cap"));
}

#[test]
fn estimate_constant_target_is_near_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[target]\nkind = \"constant\"\nvalue = 1.0\ndim = 3\n\n[expect]\nrho_min = 0.9\n";
    let cfg = write_config(dir.path(), "c.toml", text);
    let report = dir.path().join("c.json");
    let out = junta(&["estimate", "--config", &cfg, "--out", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let r = RunReport::read(&report).unwrap();
    assert_eq!(r.body.payload["m"], 0);
    assert!(r.body.payload["estimates"]["top"].as_array().unwrap().len() <= 20);
}

#[test]
fn learn_all_with_unreachable_rho_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{HALFSPACE}\n[algorithm]\nrho = 2.0\neps = 0.1\n\n[expect]\nmax_members = 0\n");
    let cfg = write_config(dir.path(), "l.toml", &text);
    let out = junta(&["learn-all", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn bench_records_stage_timings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "b.toml", HALFSPACE);
    let report = dir.path().join("b.json");
    let out = junta(&["bench", "--config", &cfg, "--out", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let r = RunReport::read(&report).unwrap();
    let stages: Vec<&str> = r.timing.stages.iter().map(|s| s.0.as_str()).collect();
    assert_eq!(stages, ["projection", "estimate"]);
}

#[test]
fn shipped_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = junta_harness::ExperimentConfig::load(&path).unwrap();
        cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 2);
}
