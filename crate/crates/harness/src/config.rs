//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use junta_core::nets::ClassSpec;
use junta_core::projection::{GradientMode, PracticalParams};
use junta_core::tester::{SearchParams, Verdict};
use junta_core::{CorruptionSpec, FunctionSpec, QueryOracle};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_top_n() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Hard cap on oracle queries per run.
    #[serde(default)]
    pub budget: Option<u64>,
    /// Report file (single run) or directory.
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub target: FunctionSpec,
    #[serde(default)]
    pub corruption: Option<CorruptionSpec>,
    #[serde(default)]
    pub algorithm: AlgorithmParams,
    #[serde(default = "default_class")]
    pub class: ClassSpec,
    #[serde(default = "default_search")]
    pub search: SearchParams,
    #[serde(default)]
    pub expect: Expectations,
    #[serde(default)]
    pub validate: ValidateOptions,
    /// Per-element estimates kept in reports (highest first).
    #[serde(default = "default_top_n")]
    pub top_n: usize,
}

fn default_class() -> ClassSpec {
    ClassSpec::Halfspaces
}

fn default_search() -> SearchParams {
    SearchParams::new(PracticalParams::new(20, 0.05, 0.0, 0.3), GradientMode::Analytic)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmParams {
    /// Smoothness of the class.
    pub s: f64,
    pub eps: f64,
    pub c_l: f64,
    pub c_u: f64,
    pub rho: f64,
}

impl Default for AlgorithmParams {
    fn default() -> Self {
        Self {
            s: 1.0,
            eps: 0.1,
            c_l: 0.05,
            c_u: 0.2,
            rho: 1.0,
        }
    }
}

/// Optional pass criteria. A run passes when every stated expectation holds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Expectations {
    pub rho_min: Option<f64>,
    pub rho_max: Option<f64>,
    pub verdict: Option<Verdict>,
    /// Largest principal angle (radians) between the recovered and true subspace.
    pub max_angle: Option<f64>,
    pub min_members: Option<usize>,
    pub max_members: Option<usize>,
    /// Required retained rank of the projection.
    pub m: Option<usize>,
}

/// Sizes of the validation battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateOptions {
    /// Randomized instances per linear-algebra check.
    pub instances: usize,
    /// Instances per Monte-Carlo identity (averaging, truncation).
    pub mc_instances: usize,
    pub mc_samples: u64,
    /// Instances per check re-scored with the bound shrunk by `control_factor`.
    pub control_instances: usize,
    pub control_factor: f64,
    pub covariance_sizes: Vec<usize>,
    pub covariance_reps: usize,
    pub hermite_deltas: Vec<f64>,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            instances: 200,
            mc_instances: 50,
            mc_samples: 4000,
            control_instances: 20,
            control_factor: 1e-3,
            covariance_sizes: vec![10, 20, 50, 100, 200, 500, 1000],
            covariance_reps: 20,
            hermite_deltas: vec![0.1, 0.05],
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Usage(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// A config around `target` with defaults everywhere else.
    pub fn for_target(target: FunctionSpec) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seeds: default_seeds(),
            budget: None,
            out: None,
            target,
            corruption: None,
            algorithm: AlgorithmParams::default(),
            class: default_class(),
            search: default_search(),
            expect: Expectations::default(),
            validate: ValidateOptions::default(),
            top_n: default_top_n(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(HarnessError::Usage(format!(
                "schema_version {} not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Usage("seeds must not be empty".into()));
        }
        let usage = |e: junta_core::JuntaError| HarnessError::Usage(e.to_string());
        self.target.validate().map_err(usage)?;
        self.class.validate().map_err(usage)?;
        self.search.projection.validate().map_err(usage)?;
        if self.class.arity() > self.target.dim() {
            return Err(HarnessError::Usage(format!(
                "class arity {} exceeds ambient dimension {}",
                self.class.arity(),
                self.target.dim()
            )));
        }
        let a = &self.algorithm;
        if !(a.s > 0.0 && a.eps > 0.0) {
            return Err(HarnessError::Usage("s and eps must be positive".into()));
        }
        if let Some(c) = &self.corruption {
            if !(0.0..=1.0).contains(&c.rate) {
                return Err(HarnessError::Usage("corruption rate must lie in [0, 1]".into()));
            }
        }
        if let Some(out) = &self.out {
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                if !parent.exists() {
                    return Err(HarnessError::Usage(format!("output directory {} does not exist", parent.display())));
                }
            }
        }
        Ok(())
    }

    /// The target oracle with the configured corruption and budget.
    pub fn oracle(&self) -> Result<QueryOracle, HarnessError> {
        let f = QueryOracle::new(self.target.clone(), self.corruption.clone())?;
        Ok(match self.budget {
            Some(b) => f.with_budget(b),
            None => f,
        })
    }

    /// Search parameters with the projection seeded for this run.
    pub fn search_for(&self, seed: u64) -> SearchParams {
        let mut p = self.search.clone();
        p.projection.seed = seed;
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [target]
        kind = "halfspace"
        direction = [0.6, 0.8]
    "#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.seeds, vec![0]);
        assert_eq!(c.validate.instances, 200);
        assert_eq!(c.class, ClassSpec::Halfspaces);
    }

    #[test]
    fn roundtrip() {
        let mut c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        c.corruption = Some(CorruptionSpec::random_flip(0.1, 3));
        c.expect.rho_min = Some(0.7);
        let text = toml::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn rejects_bad_schema_and_unknown_keys() {
        let bad = format!("schema_version = 9\n{MINIMAL}");
        assert!(matches!(ExperimentConfig::from_toml(&bad), Err(HarnessError::Usage(_))));
        let bad = format!("colour = 1\n{MINIMAL}");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = r#"
            [target]
            kind = "halfspace"
            direction = [0.6, 0.9]
        "#;
        assert!(ExperimentConfig::from_toml(bad).is_err());
    }

    #[test]
    fn missing_output_directory_is_rejected() {
        let text = format!("out = \"/nonexistent/dir/report.json\"\n{MINIMAL}");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }
}
