//! One function per subcommand. Each returns a report per seed; algorithm
//! errors end up inside the report, usage errors are returned.

use std::time::Instant;

use junta_core::projection::{implicit_projection, recovery_angle, ProjectionOutput};
use junta_core::tester::{correlation_estimate, learn_all, robust_test, CorrelationReport, ElementEstimate};
use junta_core::{JuntaError, QueryOracle, Subspace};
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::report::{CheckOutcome, RunReport};
use crate::validate::{resolve_suites, run_suite};
use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Project,
    Estimate,
    Test,
    LearnAll,
    Validate,
    Bench,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Project => "project",
            Command::Estimate => "estimate",
            Command::Test => "test",
            Command::LearnAll => "learn-all",
            Command::Validate => "validate",
            Command::Bench => "bench",
        }
    }
}

/// Run `cmd` for every configured seed.
pub fn run(cmd: Command, cfg: &ExperimentConfig, suite: &str) -> Result<Vec<RunReport>, HarnessError> {
    cfg.validate()?;
    if cmd == Command::Test && !(cfg.algorithm.c_l >= 0.0 && cfg.algorithm.c_l < cfg.algorithm.c_u && cfg.algorithm.c_u < 0.5) {
        return Err(HarnessError::Usage(format!(
            "need 0 <= c_l < c_u < 1/2, got c_l = {}, c_u = {}",
            cfg.algorithm.c_l, cfg.algorithm.c_u
        )));
    }
    let suites = if cmd == Command::Validate {
        resolve_suites(suite)?
    } else {
        Vec::new()
    };
    cfg.seeds
        .iter()
        .map(|&seed| {
            let start = Instant::now();
            let mut rep = RunReport::new(cmd.name(), seed, cfg);
            match cmd {
                Command::Project => project(cfg, seed, &mut rep),
                Command::Estimate => estimate(cfg, seed, &mut rep),
                Command::Test => test(cfg, seed, &mut rep),
                Command::LearnAll => learn(cfg, seed, &mut rep),
                Command::Validate => validate(cfg, seed, &suites, &mut rep)?,
                Command::Bench => bench(cfg, seed, &mut rep),
            }
            rep.timing.wall_seconds = start.elapsed().as_secs_f64();
            Ok(rep)
        })
        .collect()
}

fn bound_check(name: &str, value: f64, lo: Option<f64>, hi: Option<f64>) -> Option<CheckOutcome> {
    if lo.is_none() && hi.is_none() {
        return None;
    }
    let mut c = CheckOutcome::new("expect", name);
    let slack = (value - lo.unwrap_or(f64::NEG_INFINITY)).min(hi.unwrap_or(f64::INFINITY) - value);
    c.record(slack >= 0.0, Some(slack));
    Some(c)
}

fn accounting_check(oracle: u64, declared: u64) -> CheckOutcome {
    let mut c = CheckOutcome::new("accounting", "query_accounting");
    c.record(oracle == declared, None);
    c
}

/// Keep the `n` best element estimates, with their indices.
pub fn top_estimates(est: &[ElementEstimate], n: usize) -> Vec<(usize, ElementEstimate)> {
    let mut idx: Vec<usize> = (0..est.len()).collect();
    idx.sort_by(|&a, &b| est[b].estimate.total_cmp(&est[a].estimate).then(a.cmp(&b)));
    idx.truncate(n);
    idx.into_iter().map(|i| (i, est[i])).collect()
}

fn correlation_json(r: &CorrelationReport, top_n: usize) -> Value {
    let mut v = serde_json::to_value(r).expect("report serializes");
    v["estimates"] = json!({
        "count": r.estimates.len(),
        "top": top_estimates(&r.estimates, top_n),
    });
    v
}

fn finish_queries(rep: &mut RunReport, f: &QueryOracle, stages: Value) {
    rep.body.queries.oracle = f.queries();
    rep.body.queries.stages = stages;
}

fn oracle_or_fail(cfg: &ExperimentConfig, rep: &mut RunReport) -> Option<QueryOracle> {
    match cfg.oracle() {
        Ok(f) => Some(f),
        Err(HarnessError::Core(e)) => {
            rep.fail(&e);
            None
        }
        Err(e) => {
            rep.fail(&JuntaError::Input(e.to_string()));
            None
        }
    }
}

fn projection_json(cfg: &ExperimentConfig, out: &ProjectionOutput, rep: &mut RunReport) -> Value {
    let dirs = cfg.target.relevant_directions();
    let angle = if dirs.ncols() > 0 && out.gradients.is_some() {
        Subspace::span(&dirs, 1e-10).and_then(|t| recovery_angle(out, &t)).ok()
    } else {
        None
    };
    if let Some(max) = cfg.expect.max_angle {
        let mut c = CheckOutcome::new("expect", "principal_angle");
        match angle {
            Some(a) => c.record(a <= max, Some(max - a)),
            None => c.record(false, None),
        }
        rep.push_check(c);
    }
    if let Some(m) = cfg.expect.m {
        let mut c = CheckOutcome::new("expect", "retained_rank");
        c.record(out.m() == m, None);
        rep.push_check(c);
    }
    json!({
        "m": out.m(),
        "principal_angle": angle,
        "w_norm": out.w_norm(),
        "output": out,
    })
}

fn project(cfg: &ExperimentConfig, seed: u64, rep: &mut RunReport) {
    let Some(f) = oracle_or_fail(cfg, rep) else { return };
    let params = cfg.search_for(seed);
    match implicit_projection(&f, &params.projection, params.mode) {
        Ok(out) => {
            rep.body.payload = projection_json(cfg, &out, rep);
            rep.push_check(accounting_check(f.queries(), out.queries_used));
            finish_queries(rep, &f, json!({ "projection": out.queries_used }));
        }
        Err(e) => {
            rep.fail(&e);
            finish_queries(rep, &f, Value::Null);
        }
    }
}

fn estimate(cfg: &ExperimentConfig, seed: u64, rep: &mut RunReport) {
    let Some(f) = oracle_or_fail(cfg, rep) else { return };
    let a = &cfg.algorithm;
    match correlation_estimate(&f, a.s, a.eps, &cfg.class, &cfg.search_for(seed), seed) {
        Ok(r) => {
            rep.body.payload = correlation_json(&r, cfg.top_n);
            if let Some(c) = bound_check("rho_hat", r.rho_hat, cfg.expect.rho_min, cfg.expect.rho_max) {
                rep.push_check(c);
            }
            rep.push_check(accounting_check(f.queries(), r.queries.total));
            finish_queries(rep, &f, serde_json::to_value(r.queries).unwrap());
        }
        Err(e) => {
            rep.fail(&e);
            finish_queries(rep, &f, Value::Null);
        }
    }
}

fn test(cfg: &ExperimentConfig, seed: u64, rep: &mut RunReport) {
    let Some(f) = oracle_or_fail(cfg, rep) else { return };
    let a = &cfg.algorithm;
    match robust_test(&f, a.s, a.c_l, a.c_u, &cfg.class, &cfg.search_for(seed), seed) {
        Ok(v) => {
            rep.body.payload = json!({
                "verdict": v.verdict,
                "rho_hat": v.rho_hat,
                "threshold": v.threshold,
                "eps": v.eps,
                "report": correlation_json(&v.report, cfg.top_n),
            });
            if let Some(want) = cfg.expect.verdict {
                let mut c = CheckOutcome::new("expect", "verdict");
                c.record(v.verdict == want, Some(if v.verdict == want { 0.0 } else { -1.0 }));
                rep.push_check(c);
            }
            rep.push_check(accounting_check(f.queries(), v.queries));
            finish_queries(rep, &f, serde_json::to_value(v.report.queries).unwrap());
        }
        Err(e) => {
            rep.fail(&e);
            finish_queries(rep, &f, Value::Null);
        }
    }
}

fn learn(cfg: &ExperimentConfig, seed: u64, rep: &mut RunReport) {
    let Some(f) = oracle_or_fail(cfg, rep) else { return };
    let a = &cfg.algorithm;
    match learn_all(&f, a.s, a.rho, a.eps, &cfg.class, &cfg.search_for(seed), seed) {
        Ok(set) => {
            let mut members = set.members.clone();
            members.sort_by(|x, y| y.estimate.total_cmp(&x.estimate).then(x.element.cmp(&y.element)));
            members.truncate(cfg.top_n);
            rep.body.payload = json!({
                "count": set.members.len(),
                "rho": set.rho,
                "eps": set.eps,
                "threshold": set.threshold,
                "soundness_target": set.soundness_target,
                "rho_hat": set.rho_hat,
                "members": members,
            });
            let n = set.members.len() as f64;
            if let Some(c) = bound_check(
                "member_count",
                n,
                cfg.expect.min_members.map(|v| v as f64),
                cfg.expect.max_members.map(|v| v as f64),
            ) {
                rep.push_check(c);
            }
            rep.push_check(accounting_check(f.queries(), set.queries));
            finish_queries(rep, &f, json!({ "total": set.queries }));
        }
        Err(e) => {
            rep.fail(&e);
            finish_queries(rep, &f, Value::Null);
        }
    }
}

fn validate(cfg: &ExperimentConfig, seed: u64, suites: &[&str], rep: &mut RunReport) -> Result<(), HarnessError> {
    let mut total = 0;
    let mut per_suite = serde_json::Map::new();
    for &s in suites {
        let start = Instant::now();
        match run_suite(s, &cfg.validate, seed) {
            Ok(res) => {
                total += res.queries;
                per_suite.insert(s.into(), json!(res.queries));
                for c in res.checks {
                    rep.push_check(c);
                }
            }
            Err(HarnessError::Core(e)) => {
                rep.fail(&e);
            }
            Err(e) => return Err(e),
        }
        rep.timing.stages.push((s.into(), start.elapsed().as_secs_f64()));
    }
    rep.body.payload = json!({ "suites": suites });
    rep.body.queries.oracle = total;
    rep.body.queries.stages = Value::Object(per_suite);
    Ok(())
}

/// Projection and correlation estimate, timed separately.
fn bench(cfg: &ExperimentConfig, seed: u64, rep: &mut RunReport) {
    let Some(f) = oracle_or_fail(cfg, rep) else { return };
    let params = cfg.search_for(seed);
    let a = &cfg.algorithm;
    let start = Instant::now();
    let proj = implicit_projection(&f, &params.projection, params.mode);
    rep.timing.stages.push(("projection".into(), start.elapsed().as_secs_f64()));
    let proj = match proj {
        Ok(p) => p,
        Err(e) => {
            rep.fail(&e);
            finish_queries(rep, &f, Value::Null);
            return;
        }
    };
    let g = f.fork();
    let start = Instant::now();
    let est = correlation_estimate(&g, a.s, a.eps, &cfg.class, &params, seed);
    rep.timing.stages.push(("estimate".into(), start.elapsed().as_secs_f64()));
    match est {
        Ok(r) => {
            rep.body.payload = json!({
                "m": proj.m(),
                "projection_queries": proj.queries_used,
                "rho_hat": r.rho_hat,
                "net_size": r.net_size,
                "t_samples": r.t_samples,
                "estimate_queries": r.queries,
            });
            rep.body.queries.oracle = f.queries() + g.queries();
            rep.body.queries.stages = json!({ "projection": proj.queries_used, "estimate": r.queries.total });
        }
        Err(e) => {
            rep.fail(&e);
            rep.body.queries.oracle = f.queries() + g.queries();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use junta_core::FunctionSpec;

    #[test]
    fn top_estimates_orders_and_breaks_ties_by_index() {
        let e = |v| ElementEstimate { estimate: v, stderr: 0.0 };
        let est = [e(0.1), e(0.5), e(0.5), e(0.3)];
        let top: Vec<usize> = top_estimates(&est, 3).into_iter().map(|p| p.0).collect();
        assert_eq!(top, vec![1, 2, 3]);
    }

    #[test]
    fn constant_target_projects_to_rank_zero() {
        let mut cfg = ExperimentConfig::for_target(FunctionSpec::Constant { value: 1.0, dim: 4 });
        cfg.expect.m = Some(0);
        let reps = run(Command::Project, &cfg, "default").unwrap();
        assert!(reps[0].pass(), "{:?}", reps[0].body);
        assert_eq!(reps[0].body.payload["m"], 0);
    }

    #[test]
    fn test_rejects_inverted_constants() {
        let mut cfg = ExperimentConfig::for_target(FunctionSpec::axis_halfspace(3, 0, 0.0));
        cfg.algorithm.c_l = 0.2;
        cfg.algorithm.c_u = 0.1;
        assert!(matches!(run(Command::Test, &cfg, ""), Err(HarnessError::Usage(_))));
    }

    #[test]
    fn budget_marks_truncated() {
        let mut cfg = ExperimentConfig::for_target(FunctionSpec::axis_halfspace(3, 0, 0.0));
        cfg.budget = Some(1000);
        let reps = run(Command::Estimate, &cfg, "").unwrap();
        let b = &reps[0].body;
        assert!(b.truncated && !b.pass);
        assert_eq!(b.queries.oracle, 1000);
    }

    #[test]
    fn empty_net_is_a_size_error() {
        let mut cfg = ExperimentConfig::for_target(FunctionSpec::axis_halfspace(3, 0, 0.0));
        cfg.search.caps.max_elements = 0;
        let reps = run(Command::Estimate, &cfg, "").unwrap();
        let err = reps[0].body.error.as_ref().unwrap();
        assert_eq!(err.kind, crate::report::ErrorKind::Size, "{err:?}");
    }
}
