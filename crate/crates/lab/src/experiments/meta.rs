//! Algorithm-1 runs on random MDPs, scored against a conditional-gradient
//! reference maximizer of the final objective.

use std::path::Path;

use anyhow::{Context, Result};
use made_core::envs::make_random_mdp;
use made_core::mdp::TabularMdp;
use made_core::meta::{frank_wolfe_maximize, run_algorithm1, DensityNoise, MetaConfig, MetaRun, MetaStep};
use rayon::prelude::*;
use serde::Serialize;

use super::RunFailure;
use crate::config::{ExperimentConfig, MetaSection};
use crate::output::{cell, write_json, Csv};
use crate::plot;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapResult {
    pub final_objective: f64,
    pub reference_upper_bound: f64,
    pub reference_duality_gap: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetaSeedResult {
    pub seed: u64,
    pub iters: usize,
    pub exact: GapResult,
    pub noisy: Option<GapResult>,
    /// `2 beta eps_d`, the degradation the noise may cause.
    pub noise_bound: f64,
    pub target_gap: Option<f64>,
}

impl MetaSeedResult {
    pub fn within_target(&self) -> bool {
        self.target_gap.is_none_or(|t| self.exact.gap <= t)
    }
}

#[derive(Debug, Default)]
pub struct MetaReport {
    pub results: Vec<MetaSeedResult>,
    pub failures: Vec<RunFailure>,
}

fn log_csv(log: &[MetaStep]) -> Csv {
    let mut csv = Csv::new(&["k", "tau_k", "J", "R_lambda", "L_k", "plan_gap"]);
    for s in log {
        csv.row(&[
            s.k.to_string(),
            s.tau_k.to_string(),
            s.j.to_string(),
            s.r_lambda.to_string(),
            s.l_k.to_string(),
            s.plan_gap.to_string(),
        ]);
    }
    csv
}

fn score(mdp: &TabularMdp, params: &MetaConfig, meta: &MetaSection, run: &MetaRun) -> Result<GapResult> {
    let reference = frank_wolfe_maximize(
        mdp,
        run.final_cover.as_slice(),
        run.final_tau,
        params.smoothing,
        meta.oracle_gap,
        meta.oracle_max_iters,
    )?;
    let final_objective = run.final_objective(mdp, params.smoothing);
    Ok(GapResult {
        final_objective,
        reference_upper_bound: reference.upper_bound(),
        reference_duality_gap: reference.gap,
        gap: reference.upper_bound() - final_objective,
    })
}

pub fn run_seed(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<MetaSeedResult> {
    let meta = cfg.meta();
    let params = meta.params.as_ref().expect("resolved meta params");
    let mdp = make_random_mdp(meta.n_states, meta.n_actions, seed)?.with_discount(meta.discount)?;
    let dir = out.join("meta").join(format!("seed_{seed}"));

    let exact_run = run_algorithm1(&mdp, params, None)?;
    log_csv(&exact_run.log).save(&dir.join("log.csv"))?;
    write_json(&dir.join("mixture.json"), &exact_run.mixture)?;
    let exact = score(&mdp, params, meta, &exact_run)?;

    let noisy = if meta.with_noise {
        let run = run_algorithm1(&mdp, params, Some(DensityNoise { seed }))?;
        log_csv(&run.log).save(&dir.join("noisy_log.csv"))?;
        Some(score(&mdp, params, meta, &run)?)
    } else {
        None
    };
    if cfg.plots {
        let series = vec![(
            "L_k".to_string(),
            exact_run.log.iter().map(|s| (s.k as f64, s.l_k)).collect::<Vec<_>>(),
        )];
        plot::save_line_chart(&dir.join("log.svg"), "objective", "k", "L_k", &series)?;
    }
    let beta = params.constants(meta.n_states, meta.n_actions).beta;
    Ok(MetaSeedResult {
        seed,
        iters: params.iters,
        exact,
        noisy,
        noise_bound: 2.0 * beta * params.density_err,
        target_gap: params.target_gap,
    })
}

pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<MetaReport> {
    let results: Vec<Result<MetaSeedResult>> = cfg
        .seeds
        .par_iter()
        .map(|&s| run_seed(cfg, s, out).with_context(|| format!("meta seed {s}")))
        .collect();
    let mut report = MetaReport::default();
    for (&seed, r) in cfg.seeds.iter().zip(results) {
        match r {
            Ok(r) => report.results.push(r),
            Err(e) => report.failures.push(RunFailure {
                run: format!("meta seed {seed}"),
                error: format!("{e:#}"),
            }),
        }
    }
    let mut csv = Csv::new(&[
        "seed",
        "iters",
        "final_objective",
        "reference_upper_bound",
        "gap",
        "noisy_gap",
        "noise_bound",
        "target_gap",
        "within_target",
    ]);
    for r in &report.results {
        csv.row(&[
            r.seed.to_string(),
            r.iters.to_string(),
            r.exact.final_objective.to_string(),
            r.exact.reference_upper_bound.to_string(),
            r.exact.gap.to_string(),
            cell(r.noisy.as_ref().map(|n| n.gap)),
            r.noise_bound.to_string(),
            cell(r.target_gap),
            r.within_target().to_string(),
        ]);
    }
    csv.save(&out.join("meta").join("summary.csv"))?;
    Ok(report)
}
