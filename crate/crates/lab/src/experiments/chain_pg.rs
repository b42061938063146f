//! The four policy-gradient objectives on the vanishing-gradient chain.

use std::path::Path;

use anyhow::{Context, Result};
use made_core::envs::make_chain_mdp;
use made_core::policy_grad::{pg_run, PgConfig, PgObjective, PgTrajectory};
use rayon::prelude::*;
use serde::Serialize;

use super::RunFailure;
use crate::config::ExperimentConfig;
use crate::output::{cell, slug, write_json, Csv};
use crate::plot;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PgSweepPoint {
    pub objective: PgObjective,
    pub step_size: f64,
    pub initial_j: f64,
    pub final_j: f64,
    pub iters_to_target: Option<usize>,
}

#[derive(Debug, Default)]
pub struct ChainPgReport {
    pub j_star: f64,
    pub target: f64,
    pub points: Vec<PgSweepPoint>,
    pub failures: Vec<RunFailure>,
}

impl ChainPgReport {
    /// Step size reaching the target in the fewest iterations; ties and the
    /// never-reached case go to the smaller step.
    pub fn best(&self, objective: PgObjective) -> Option<&PgSweepPoint> {
        self.points.iter().filter(|p| p.objective == objective).min_by(|a, b| {
            let key = |p: &PgSweepPoint| p.iters_to_target.unwrap_or(usize::MAX);
            key(a).cmp(&key(b)).then(a.step_size.total_cmp(&b.step_size))
        })
    }
}

fn trajectory_csv(t: &PgTrajectory) -> Csv {
    let mut csv = Csv::new(&["iter", "objective", "J", "grad_inf_norm"]);
    csv.row(&["0".into(), t.objective.to_string(), t.initial_j.to_string(), String::new()]);
    for s in &t.steps {
        csv.row(&[
            s.iter.to_string(),
            t.objective.to_string(),
            s.j.to_string(),
            s.grad_inf_norm.to_string(),
        ]);
    }
    csv
}

pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<ChainPgReport> {
    let pg = cfg.chain_pg();
    let mdp = make_chain_mdp(&pg.env)?;
    let j_star = pg.env.optimal_value();
    let target = pg.target_fraction * j_star;
    let jobs: Vec<(PgObjective, f64)> = pg
        .objectives
        .iter()
        .flat_map(|&o| pg.step_sizes.iter().map(move |&s| (o, s)))
        .collect();
    let results: Vec<Result<PgTrajectory>> = jobs
        .par_iter()
        .map(|&(objective, step)| {
            let mut run_cfg = PgConfig::new(objective, step, pg.iters);
            run_cfg.tau0 = pg.tau0;
            run_cfg.made_sign = pg.made_sign;
            let t = pg_run(&mdp, &run_cfg).with_context(|| format!("{objective} step {step}"))?;
            trajectory_csv(&t).save(
                &out.join("pg")
                    .join("sweep")
                    .join(slug(&format!("{objective}_step{step}.csv"))),
            )?;
            Ok(t)
        })
        .collect();

    let mut report = ChainPgReport {
        j_star,
        target,
        ..Default::default()
    };
    let mut trajectories = Vec::new();
    for (&(objective, step), r) in jobs.iter().zip(results) {
        match r {
            Ok(t) => {
                report.points.push(PgSweepPoint {
                    objective,
                    step_size: step,
                    initial_j: t.initial_j,
                    final_j: t.final_j(),
                    iters_to_target: t.iters_to_reach(target),
                });
                trajectories.push(t);
            }
            Err(e) => report.failures.push(RunFailure {
                run: format!("{objective} step {step}"),
                error: format!("{e:#}"),
            }),
        }
    }

    let mut sweep = Csv::new(&["objective", "step_size", "initial_J", "final_J", "iters_to_target"]);
    for p in &report.points {
        sweep.row(&[
            p.objective.to_string(),
            p.step_size.to_string(),
            p.initial_j.to_string(),
            p.final_j.to_string(),
            cell(p.iters_to_target),
        ]);
    }
    sweep.save(&out.join("pg").join("sweep.csv"))?;

    let mut series = Vec::new();
    for &objective in &pg.objectives {
        let Some(best) = report.best(objective) else { continue };
        let t = trajectories
            .iter()
            .find(|t| t.objective == objective && t.step_size == best.step_size)
            .expect("trajectory of a reported point");
        trajectory_csv(t).save(&out.join("pg").join(format!("{objective}.csv")))?;
        series.push((
            format!("{objective} (step {})", best.step_size),
            std::iter::once((0.0, t.initial_j))
                .chain(t.steps.iter().map(|s| (s.iter as f64, s.j)))
                .collect::<Vec<_>>(),
        ));
    }

    #[derive(Serialize)]
    struct Reference {
        depth: usize,
        discount: f64,
        j_star: f64,
        target: f64,
    }
    write_json(
        &out.join("pg").join("j_star.json"),
        &Reference {
            depth: pg.env.depth,
            discount: pg.env.discount(),
            j_star,
            target,
        },
    )?;
    if cfg.plots && !series.is_empty() {
        plot::save_line_chart(&out.join("pg").join("curves.svg"), "chain", "iteration", "J", &series)?;
    }
    Ok(report)
}
