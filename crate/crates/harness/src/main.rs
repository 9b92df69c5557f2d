use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use junta_core::FunctionSpec;
use junta_harness::{exit_code, run, write_reports, Command, ExperimentConfig, HarnessError, EXIT_USAGE};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Sub {
    Project,
    Estimate,
    Test,
    LearnAll,
    Validate,
    Bench,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Project => Command::Project,
            Sub::Estimate => Command::Estimate,
            Sub::Test => Command::Test,
            Sub::LearnAll => Command::LearnAll,
            Sub::Validate => Command::Validate,
            Sub::Bench => Command::Bench,
        }
    }
}

/// Tolerant junta testing experiments.
///
/// Exit codes: 0 pass, 1 check failure, 2 usage error, 3 budget or capability error.
#[derive(Debug, Parser)]
#[command(name = "junta", version)]
struct Cli {
    #[arg(value_enum)]
    command: Sub,
    /// TOML experiment config (optional for `validate`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run this seed only, overriding the config's list.
    #[arg(long)]
    seed: Option<u64>,
    /// Hard cap on oracle queries per run.
    #[arg(long)]
    budget: Option<u64>,
    /// Report file (single run) or directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Validation suites: `default`, a suite name, or a comma-separated list.
    #[arg(long, default_value = "default")]
    suite: String,
}

fn load(cli: &Cli, cmd: Command) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None if cmd == Command::Validate => ExperimentConfig::for_target(FunctionSpec::Constant { value: 1.0, dim: 1 }),
        None => return Err(HarnessError::Usage(format!("`{}` needs --config", cmd.name()))),
    };
    if let Some(s) = cli.seed {
        cfg.seeds = vec![s];
    }
    if cli.budget.is_some() {
        cfg.budget = cli.budget;
    }
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cmd = Command::from(cli.command);
    let result = load(&cli, cmd).and_then(|cfg| {
        let reports = run(cmd, &cfg, &cli.suite)?;
        let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("reports"));
        write_reports(&out, &reports)?;
        Ok(reports)
    });
    match result {
        Ok(reports) => {
            for r in &reports {
                println!("{}", r.summary_line());
            }
            ExitCode::from(exit_code(&reports) as u8)
        }
        Err(e) => {
            eprintln!("junta: {e}");
            let code = e.exit_code();
            ExitCode::from(if code == 0 { EXIT_USAGE } else { code } as u8)
        }
    }
}
