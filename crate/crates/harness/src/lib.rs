//! Experiment harness: TOML configs, per-stage subcommands, the validation
//! battery and JSON run reports.

pub mod commands;
pub mod config;
pub mod report;
pub mod validate;

use std::path::{Path, PathBuf};

use junta_core::JuntaError;
use thiserror::Error;

pub use commands::{run, Command};
pub use config::ExperimentConfig;
pub use report::{ErrorKind, RunReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] JuntaError),
}

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) => EXIT_USAGE,
            HarnessError::Io(_) => EXIT_CHECK_FAILED,
            HarnessError::Core(e) => match e {
                JuntaError::Budget { .. } | JuntaError::Size { .. } | JuntaError::Capability(_) => EXIT_BUDGET,
                JuntaError::Input(_) | JuntaError::Parameter { .. } | JuntaError::Dimension { .. } => EXIT_USAGE,
                _ => EXIT_CHECK_FAILED,
            },
        }
    }
}

/// Exit status for a batch of reports: budget/capability problems win over
/// check failures.
pub fn exit_code(reports: &[RunReport]) -> i32 {
    let kinds: Vec<ErrorKind> = reports.iter().filter_map(|r| r.body.error.as_ref().map(|e| e.kind)).collect();
    if kinds
        .iter()
        .any(|k| matches!(k, ErrorKind::Budget | ErrorKind::Size | ErrorKind::Capability))
    {
        EXIT_BUDGET
    } else if kinds.contains(&ErrorKind::Input) {
        EXIT_USAGE
    } else if reports.iter().all(RunReport::pass) {
        EXIT_PASS
    } else {
        EXIT_CHECK_FAILED
    }
}

/// Where the report for `seed` goes: `out` itself for a single run into a
/// `.json` path, otherwise `out/<command>-seed<seed>.json`.
pub fn report_path(out: &Path, command: &str, seed: u64, runs: usize) -> PathBuf {
    if runs == 1 && out.extension().is_some_and(|e| e == "json") {
        out.to_path_buf()
    } else {
        out.join(format!("{command}-seed{seed}.json"))
    }
}

/// Write every report and return the paths.
pub fn write_reports(out: &Path, reports: &[RunReport]) -> Result<Vec<PathBuf>, HarnessError> {
    let mut paths = Vec::with_capacity(reports.len());
    for r in reports {
        let p = report_path(out, &r.body.command, r.body.seed, reports.len());
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))?;
        }
        r.write(&p)?;
        paths.push(p);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_paths() {
        assert_eq!(report_path(Path::new("r.json"), "test", 3, 1), PathBuf::from("r.json"));
        assert_eq!(report_path(Path::new("out"), "test", 3, 1), PathBuf::from("out/test-seed3.json"));
        assert_eq!(report_path(Path::new("r.json"), "test", 3, 2), PathBuf::from("r.json/test-seed3.json"));
    }

    #[test]
    fn exit_codes_for_core_errors() {
        assert_eq!(HarnessError::Core(JuntaError::Capability("x".into())).exit_code(), EXIT_BUDGET);
        assert_eq!(HarnessError::Usage("x".into()).exit_code(), EXIT_USAGE);
        assert_eq!(exit_code(&[]), EXIT_PASS);
    }
}
