//! Run reports: a deterministic body plus wall-clock timings kept apart.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{ExperimentConfig, SCHEMA_VERSION};
use crate::HarnessError;
use junta_core::JuntaError;

/// Pass/fail outcome of one named check, aggregated over its instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub suite: String,
    pub name: String,
    pub instances: usize,
    pub passed: usize,
    /// Smallest `rhs - lhs` seen (negative on failure), when meaningful.
    pub worst_slack: Option<f64>,
    /// Negative controls: instances re-scored with a shrunk bound, and how many of them failed.
    pub controls: Option<ControlOutcome>,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlOutcome {
    pub instances: usize,
    pub caught: usize,
    pub factor: f64,
}

impl CheckOutcome {
    pub fn new(suite: &str, name: &str) -> Self {
        Self {
            suite: suite.into(),
            name: name.into(),
            instances: 0,
            passed: 0,
            worst_slack: None,
            controls: None,
            pass: true,
        }
    }

    pub fn record(&mut self, pass: bool, slack: Option<f64>) {
        self.instances += 1;
        if pass {
            self.passed += 1;
        }
        if let Some(s) = slack {
            self.worst_slack = Some(self.worst_slack.map_or(s, |w| w.min(s)));
        }
        self.refresh();
    }

    pub fn record_control(&mut self, caught: bool, factor: f64) {
        let c = self.controls.get_or_insert(ControlOutcome {
            instances: 0,
            caught: 0,
            factor,
        });
        c.instances += 1;
        if caught {
            c.caught += 1;
        }
        self.refresh();
    }

    fn refresh(&mut self) {
        let controls_ok = self.controls.map_or(true, |c| c.caught == c.instances);
        self.pass = self.passed == self.instances && controls_ok;
    }
}

/// Query counts. `oracle` is read off the oracle counters; `stages` is what
/// the algorithm itself accounted for.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryCounts {
    pub oracle: u64,
    pub stages: Value,
    pub budget: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Budget,
    Size,
    Capability,
    Input,
    Numerical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunError {
    pub kind: ErrorKind,
    pub message: String,
    /// Best estimate available when a budget ran out.
    pub partial: Option<f64>,
}

impl From<&JuntaError> for RunError {
    fn from(e: &JuntaError) -> Self {
        let (kind, partial) = match e {
            JuntaError::Budget { partial, .. } => (ErrorKind::Budget, *partial),
            JuntaError::Size { .. } => (ErrorKind::Size, None),
            JuntaError::Capability(_) => (ErrorKind::Capability, None),
            JuntaError::Input(_) | JuntaError::Parameter { .. } | JuntaError::Dimension { .. } => {
                (ErrorKind::Input, None)
            }
            JuntaError::Degeneracy { .. } | JuntaError::Geometry { .. } => (ErrorKind::Numerical, None),
        };
        Self {
            kind,
            message: e.to_string(),
            partial,
        }
    }
}

/// Everything reproducible about a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBody {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub pass: bool,
    /// The run stopped early on its query budget.
    pub truncated: bool,
    pub error: Option<RunError>,
    pub queries: QueryCounts,
    pub checks: Vec<CheckOutcome>,
    pub payload: Value,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
    /// Stage name and seconds.
    pub stages: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub body: ReportBody,
    pub timing: Timing,
}

impl RunReport {
    pub fn new(command: &str, seed: u64, config: &ExperimentConfig) -> Self {
        Self {
            body: ReportBody {
                schema_version: SCHEMA_VERSION,
                command: command.into(),
                seed,
                config: config.clone(),
                pass: true,
                truncated: false,
                error: None,
                queries: QueryCounts {
                    budget: config.budget,
                    ..QueryCounts::default()
                },
                checks: Vec::new(),
                payload: Value::Null,
            },
            timing: Timing::default(),
        }
    }

    pub fn pass(&self) -> bool {
        self.body.pass
    }

    /// Mark the run failed by `e`; budget exhaustion also marks it truncated.
    pub fn fail(&mut self, e: &JuntaError) {
        let err = RunError::from(e);
        self.body.truncated = err.kind == ErrorKind::Budget;
        self.body.pass = false;
        self.body.error = Some(err);
    }

    /// Add a check outcome; a failing one fails the run.
    pub fn push_check(&mut self, c: CheckOutcome) {
        self.body.pass &= c.pass;
        self.body.checks.push(c);
    }

    /// Canonical bytes of the deterministic part.
    pub fn body_json(&self) -> String {
        serde_json::to_string(&self.body).expect("report body serializes")
    }

    pub fn write(&self, path: &Path) -> Result<(), HarnessError> {
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(path, text + "\n").map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
    }

    /// One-line machine-readable summary.
    pub fn summary_line(&self) -> String {
        let b = &self.body;
        let failed: Vec<&str> = b.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        serde_json::json!({
            "command": b.command,
            "seed": b.seed,
            "pass": b.pass,
            "truncated": b.truncated,
            "queries": b.queries.oracle,
            "checks": b.checks.len(),
            "failed": failed,
            "error": b.error.as_ref().map(|e| &e.message),
            "wall_seconds": self.timing.wall_seconds,
        })
        .to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use junta_core::FunctionSpec;

    #[test]
    fn outcome_tracks_failures_and_controls() {
        let mut c = CheckOutcome::new("s", "n");
        c.record(true, Some(0.5));
        c.record(true, Some(0.1));
        assert!(c.pass);
        assert_eq!(c.worst_slack, Some(0.1));
        c.record_control(true, 1e-3);
        assert!(c.pass);
        c.record_control(false, 1e-3);
        assert!(!c.pass);
        let mut d = CheckOutcome::new("s", "n");
        d.record(false, Some(-1.0));
        assert!(!d.pass);
    }

    #[test]
    fn write_read_roundtrip() {
        let cfg = ExperimentConfig::for_target(FunctionSpec::axis_halfspace(2, 0, 0.0));
        let mut r = RunReport::new("project", 3, &cfg);
        r.body.payload = serde_json::json!({"x": 0.1 + 0.2});
        r.timing.wall_seconds = 1.5;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        r.write(&p).unwrap();
        let back = RunReport::read(&p).unwrap();
        assert_eq!(back.body_json(), r.body_json());
        assert!(r.summary_line().contains("\"command\":\"project\""));
    }
}
