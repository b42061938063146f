use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;
use made_lab::config::{parse_config, parse_seeds, ExperimentKind};
use made_lab::experiments::{run_experiment, write_resolved, Report};

/// Seeded tabular exploration experiments with CSV output.
#[derive(Debug, Parser)]
#[command(name = "made-lab", version)]
struct Cli {
    /// One of lock, chain_pg, meta, checks; must match the config.
    experiment: String,
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seeds: `0..9` (inclusive), `3` or `1,4,7`.
    #[arg(long)]
    seeds: Option<String>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; all cores when absent.
    #[arg(long)]
    workers: Option<usize>,
    /// Validate the config and write `resolved_config.json` without running.
    #[arg(long)]
    check_only: bool,
}

fn summarize(report: &Report) {
    match report {
        Report::Lock(r) => {
            for c in &r.cells {
                println!(
                    "{:<28} median steps to target {:>10}  reached {}/{}  both ends {}/{}  decayed {}/{}",
                    c.cell.name(),
                    c.median_steps_to_target.map_or("-".to_string(), |m| m.to_string()),
                    c.reached,
                    c.seeds,
                    c.both_ends,
                    c.seeds,
                    c.decayed,
                    c.seeds
                );
            }
        }
        Report::ChainPg(r) => {
            println!("J* = {}  target = {}", r.j_star, r.target);
            for p in &r.points {
                println!(
                    "{:<12} step {:<5} final J {:.6}  iters to target {}",
                    p.objective.to_string(),
                    p.step_size,
                    p.final_j,
                    p.iters_to_target.map_or("-".to_string(), |i| i.to_string())
                );
            }
        }
        Report::Meta(r) => {
            for s in &r.results {
                println!(
                    "seed {}: gap {:.3e}  noisy gap {}",
                    s.seed,
                    s.exact.gap,
                    s.noisy.as_ref().map_or("-".to_string(), |n| format!("{:.3e}", n.gap))
                );
            }
        }
        Report::Checks(r) => {
            println!("{} checks, {} failed", r.rows.len(), r.failed());
            for row in r.rows.iter().filter(|r| !r.passed) {
                println!("FAIL {} {}: {} > {}", row.suite, row.instance, row.value, row.tolerance);
            }
        }
    }
    for f in report.failures() {
        eprintln!("run failed: {}: {}", f.run, f.error);
    }
}

fn run(cli: Cli) -> Result<bool> {
    let experiment: ExperimentKind = cli.experiment.parse()?;
    let mut cfg = parse_config(&cli.config)?;
    if cfg.experiment != experiment {
        bail!("config {} describes `{}`, not `{experiment}`", cli.config.display(), cfg.experiment);
    }
    if let Some(seeds) = &cli.seeds {
        cfg.seeds = parse_seeds(seeds)?;
    }
    if let Some(out) = cli.out {
        cfg.output_dir = out;
    }
    let cfg = cfg.resolve()?;
    let out = cfg.output_dir.clone();
    if cli.check_only {
        write_resolved(&cfg, &out)?;
        println!("config ok; wrote {}", out.join("resolved_config.json").display());
        return Ok(true);
    }
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring worker pool")?;
    }
    let report = run_experiment(&cfg, &out)?;
    summarize(&report);
    Ok(report.success())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
