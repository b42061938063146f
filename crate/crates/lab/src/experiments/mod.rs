//! Experiment drivers. Each writes its artifacts under the output directory
//! and returns an in-memory report.

pub mod chain_pg;
pub mod checks;
pub mod lock;
pub mod meta;

use std::path::Path;

use anyhow::Result;
use serde::Serialize;

use crate::config::{to_resolved_json, ExperimentConfig, ExperimentKind};
use crate::output::{write_file, Csv};

/// A run that returned an error instead of artifacts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunFailure {
    pub run: String,
    pub error: String,
}

#[derive(Debug)]
pub enum Report {
    Lock(lock::LockReport),
    ChainPg(chain_pg::ChainPgReport),
    Meta(meta::MetaReport),
    Checks(checks::ChecksReport),
}

impl Report {
    pub fn failures(&self) -> &[RunFailure] {
        match self {
            Report::Lock(r) => &r.failures,
            Report::ChainPg(r) => &r.failures,
            Report::Meta(r) => &r.failures,
            Report::Checks(_) => &[],
        }
    }

    /// Checks that ran but did not pass.
    pub fn failed_checks(&self) -> usize {
        match self {
            Report::Checks(r) => r.failed(),
            Report::Meta(r) => r.results.iter().filter(|r| !r.within_target()).count(),
            Report::Lock(_) | Report::ChainPg(_) => 0,
        }
    }

    pub fn success(&self) -> bool {
        self.failures().is_empty() && self.failed_checks() == 0
    }
}

/// Writes `resolved_config.json` into `out`.
pub fn write_resolved(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    write_file(&out.join("resolved_config.json"), &to_resolved_json(cfg))
}

/// Writes the resolved config, runs the experiment, and records any
/// per-run failures in `errors.csv`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<Report> {
    write_resolved(cfg, out)?;
    let report = match cfg.experiment {
        ExperimentKind::Lock => Report::Lock(lock::run(cfg, out)?),
        ExperimentKind::ChainPg => Report::ChainPg(chain_pg::run(cfg, out)?),
        ExperimentKind::Meta => Report::Meta(meta::run(cfg, out)?),
        ExperimentKind::Checks => Report::Checks(checks::run(cfg, out)?),
    };
    let errors = out.join("errors.csv");
    if report.failures().is_empty() {
        if errors.exists() {
            std::fs::remove_file(&errors)?;
        }
    } else {
        let mut csv = Csv::new(&["run", "error"]);
        for f in report.failures() {
            csv.row(&[f.run.clone(), format!("\"{}\"", f.error.replace('"', "'"))]);
        }
        csv.save(&errors)?;
    }
    Ok(report)
}
