//! Learner x bonus x seed sweeps on the bidirectional lock.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use made_core::bonuses::BonusKind;
use made_core::envs::{make_bidirectional_lock_with_layout, LockConfig, LockLayout};
use made_core::learners::{run_learner, LearnerConfig, LearnerKind, MdpEnv, RunHooks, RunRecord};
use made_core::mdp::{expected_episode_return, optimal_episode_return, Policy};
use rayon::prelude::*;
use serde::Serialize;

use super::RunFailure;
use crate::config::{ExperimentConfig, LockSection};
use crate::output::{cell, median_steps, quantile, slug, write_json, Csv};
use crate::plot;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LockCell {
    pub learner: LearnerKind,
    pub bonus: BonusKind,
    pub scale: f64,
}

impl LockCell {
    /// Directory-safe cell name, e.g. `vi_made_scale1`.
    pub fn name(&self) -> String {
        slug(&format!("{}_{}_scale{}", self.learner, self.bonus, self.scale))
    }
}

/// Everything reported about one (cell, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LockRun {
    pub cell: LockCell,
    pub seed: u64,
    pub env_seed: u64,
    pub run_seed: u64,
    pub big_lock: usize,
    pub episodes: usize,
    pub total_steps: u64,
    pub optimal_return: f64,
    pub target_return: f64,
    pub steps_to_target: Option<u64>,
    pub final_return: f64,
    pub lock_ends_visited: [bool; 2],
    /// Largest final / initial bonus ratio over the most-visited pairs.
    pub worst_decay_ratio: f64,
    pub decayed: bool,
    #[serde(skip)]
    pub evaluations: Vec<(u64, f64)>,
}

impl LockRun {
    pub fn both_ends(&self) -> bool {
        self.lock_ends_visited[0] && self.lock_ends_visited[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub cell: LockCell,
    pub seeds: usize,
    pub median_steps_to_target: Option<f64>,
    pub reached: usize,
    pub both_ends: usize,
    pub decayed: usize,
}

#[derive(Debug, Default)]
pub struct LockReport {
    pub runs: Vec<LockRun>,
    pub cells: Vec<CellSummary>,
    pub failures: Vec<RunFailure>,
}

impl LockReport {
    pub fn cell(&self, learner: LearnerKind, bonus: BonusKind, scale: f64) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.cell.learner == learner && c.cell.bonus == bonus && c.cell.scale == scale)
    }
}

pub fn cells(lock: &LockSection) -> Vec<LockCell> {
    let mut out = Vec::new();
    for &learner in &lock.learners {
        for &bonus in &lock.bonuses {
            for &scale in &lock.scales {
                out.push(LockCell { learner, bonus, scale });
            }
        }
    }
    out
}

pub fn learner_config(lock: &LockSection, cfg: &ExperimentConfig, learner: LearnerKind, scale: f64, run_seed: u64) -> LearnerConfig {
    let mut lc = LearnerConfig::new(
        lock.episodes.get(learner),
        lock.max_episode_steps.unwrap_or(lock.env.episode_horizon()),
        lock.env.discount,
    );
    lc.plan_tol = lock.plan_tol;
    lc.q_learning_rate_horizon = lock.q_learning_rate_horizon;
    lc.ppo_total_iters = lock.ppo_total_iters;
    lc.rng_seed = run_seed;
    lc.bonus.v_max = lock.v_max;
    lc.bonus.scale = scale;
    lc.buffer_capacity = lock.buffer_capacity;
    lc.heatmap_period = cfg.heatmap_period;
    lc.log_period = lock.log_period.get(learner);
    lc
}

fn env_config(lock: &LockSection, seed: u64) -> LockConfig {
    let mut env = lock.env.clone();
    if lock.vary_layout {
        env.env_seed = seed;
    }
    env
}

/// Runs one cell for one seed and writes its per-run files under `out`.
pub fn run_one(cfg: &ExperimentConfig, cell: LockCell, seed: u64, out: &Path) -> Result<LockRun> {
    let lock = cfg.lock();
    let env_cfg = env_config(lock, seed);
    let run_seed = seed;
    let (mdp, layout) = make_bidirectional_lock_with_layout(&env_cfg)?;
    let lc = learner_config(lock, cfg, cell.learner, cell.scale, run_seed);
    let horizon = lc.max_episode_steps;
    let optimal_return = optimal_episode_return(&mdp, horizon);
    let target_return = lock.target_fraction * optimal_return;

    let mut absorbing = vec![false; mdp.n_states()];
    absorbing[layout.terminal()] = true;
    let truth = mdp.clone();
    let evaluator = move |pi: &Policy| expected_episode_return(&truth, pi, horizon).unwrap_or(f64::NAN);
    // Transitions draw from their own stream so they are not a copy of the
    // agent's action stream.
    let mut env = MdpEnv::new(mdp, absorbing, run_seed ^ ENV_STREAM)?;
    let hooks = RunHooks {
        evaluator: Some(&evaluator),
        trace_pairs: cfg.bonus_trace_pairs.clone(),
    };
    let rec = run_learner(cell.learner, &mut env, cell.bonus, &lc, hooks)?;

    let decay_pairs = rec.most_visited_pairs(lock.decay_pairs);
    let worst_decay_ratio = decay_pairs
        .iter()
        .map(|&(s, a)| rec.bonus_final.get(s, a) / rec.bonus_initial.get(s, a))
        .fold(0.0, f64::max);
    let run = LockRun {
        cell,
        seed,
        env_seed: env_cfg.env_seed,
        run_seed,
        big_lock: layout.big_lock,
        episodes: lc.episodes,
        total_steps: rec.total_steps(),
        optimal_return,
        target_return,
        steps_to_target: rec.steps_to_reach(target_return),
        final_return: rec.evaluations.last().map_or(f64::NAN, |e| e.value),
        lock_ends_visited: [rec.visited(layout.lock_end(0)), rec.visited(layout.lock_end(1))],
        worst_decay_ratio,
        decayed: worst_decay_ratio <= lock.decay_ratio,
        evaluations: rec.evaluations.iter().map(|e| (e.cum_steps, e.value)).collect(),
    };
    write_run_files(&run, &rec, &layout, &lc, out)?;
    Ok(run)
}

const ENV_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

fn write_run_files(
    run: &LockRun,
    rec: &RunRecord,
    layout: &LockLayout,
    lc: &LearnerConfig,
    out: &Path,
) -> Result<()> {
    let name = run.cell.name();
    let stem = format!("seed_{}", run.seed);
    let run_dir = out.join("runs").join(&name);

    let mut steps = Csv::new(&["episode", "step", "state", "action", "reward", "bonus", "cum_steps"]);
    for s in &rec.steps {
        steps.row(&[
            s.episode.to_string(),
            s.step.to_string(),
            s.state.to_string(),
            s.action.to_string(),
            s.reward.to_string(),
            s.bonus.to_string(),
            s.cum_steps.to_string(),
        ]);
    }
    steps.save(&run_dir.join(format!("{stem}.csv")))?;

    #[derive(Serialize)]
    struct Sidecar<'a> {
        #[serde(flatten)]
        run: &'a LockRun,
        learner_config: &'a LearnerConfig,
        good_actions: &'a [Vec<usize>; 2],
    }
    write_json(
        &run_dir.join(format!("{stem}.json")),
        &Sidecar {
            run,
            learner_config: lc,
            good_actions: &layout.good_action,
        },
    )?;

    let mut evals = Csv::new(&["episode", "cum_steps", "value"]);
    for e in &rec.evaluations {
        evals.row(&[e.episode.to_string(), e.cum_steps.to_string(), e.value.to_string()]);
    }
    evals.save(&run_dir.join(format!("{stem}_eval.csv")))?;

    let na = rec.bonus_final.n_actions;
    let mut bonus = Csv::new(&["state", "action", "count", "initial", "final"]);
    for s in 0..rec.bonus_final.n_states {
        for a in 0..na {
            bonus.row(&[
                s.to_string(),
                a.to_string(),
                rec.pair_counts[s * na + a].to_string(),
                rec.bonus_initial.get(s, a).to_string(),
                rec.bonus_final.get(s, a).to_string(),
            ]);
        }
    }
    bonus.save(&run_dir.join(format!("{stem}_bonus.csv")))?;

    for t in &rec.traces {
        let mut csv = Csv::new(&["env_steps", "bonus"]);
        for &(steps, value) in &t.points {
            csv.row(&[steps.to_string(), value.to_string()]);
        }
        let path = out
            .join("bonus_traces")
            .join(&name)
            .join(format!("{stem}_s{}_a{}.csv", t.state, t.action));
        csv.save(&path)?;
    }

    for h in &rec.heatmaps {
        let path = out
            .join("heatmaps")
            .join(&name)
            .join(format!("{stem}_episode_{:08}.csv", h.episode));
        heatmap_csv(layout, &h.state_counts).save(&path)?;
    }
    Ok(())
}

/// Visit counts laid out as the lock's grid: one row per chain, one column
/// per depth. The start and terminal states get their own rows with the
/// count in column 1.
pub fn heatmap_csv(layout: &LockLayout, counts: &[u64]) -> Csv {
    let h = layout.depth;
    let mut header = vec!["row".to_string()];
    header.extend((1..=h).map(|i| i.to_string()));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = Csv::new(&header);
    let single = |label: &str, value: u64| {
        let mut row = vec![label.to_string(), value.to_string()];
        row.extend((1..h).map(|_| "0".to_string()));
        row
    };
    csv.row(&single("start", counts[LockLayout::START]));
    for lock in 0..2 {
        for (kind, state_of) in [("good", LockLayout::good as fn(&LockLayout, usize, usize) -> usize), ("dead", LockLayout::dead)] {
            let mut row = vec![format!("lock{lock}_{kind}")];
            row.extend((1..=h).map(|i| counts[state_of(layout, lock, i)].to_string()));
            csv.row(&row);
        }
    }
    csv.row(&single("terminal", counts[layout.terminal()]));
    csv
}

/// Median and quartiles over seeds at every logged step count. Each run
/// contributes its latest evaluation at or before the step count.
pub fn learning_curve(runs: &[&LockRun]) -> Vec<(u64, f64, f64, f64)> {
    let mut grid: Vec<u64> = runs.iter().flat_map(|r| r.evaluations.iter().map(|e| e.0)).collect();
    grid.sort_unstable();
    grid.dedup();
    let mut cursors = vec![0usize; runs.len()];
    let mut rows = Vec::with_capacity(grid.len());
    for &x in &grid {
        let mut values: Vec<f64> = Vec::with_capacity(runs.len());
        for (run, cur) in runs.iter().zip(cursors.iter_mut()) {
            while *cur + 1 < run.evaluations.len() && run.evaluations[*cur + 1].0 <= x {
                *cur += 1;
            }
            values.push(run.evaluations[*cur].1);
        }
        values.sort_by(f64::total_cmp);
        rows.push((x, quantile(&values, 0.5), quantile(&values, 0.25), quantile(&values, 0.75)));
    }
    rows
}

pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<LockReport> {
    let lock = cfg.lock();
    let cells = cells(lock);
    let jobs: Vec<(LockCell, u64)> = cells
        .iter()
        .flat_map(|&c| cfg.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let results: Vec<Result<LockRun>> = jobs
        .par_iter()
        .map(|&(c, s)| run_one(cfg, c, s, out).with_context(|| format!("{} seed {s}", c.name())))
        .collect();

    let mut report = LockReport::default();
    for ((c, s), r) in jobs.iter().zip(results) {
        match r {
            Ok(run) => report.runs.push(run),
            Err(e) => report.failures.push(RunFailure {
                run: format!("{} seed {s}", c.name()),
                error: format!("{e:#}"),
            }),
        }
    }

    let mut summary = Csv::new(&[
        "learner",
        "bonus",
        "scale",
        "seed",
        "env_seed",
        "run_seed",
        "episodes",
        "total_steps",
        "optimal_return",
        "steps_to_target",
        "final_return",
        "lock0_end_visited",
        "lock1_end_visited",
        "worst_decay_ratio",
        "decayed",
    ]);
    for r in &report.runs {
        summary.row(&[
            r.cell.learner.to_string(),
            r.cell.bonus.to_string(),
            r.cell.scale.to_string(),
            r.seed.to_string(),
            r.env_seed.to_string(),
            r.run_seed.to_string(),
            r.episodes.to_string(),
            r.total_steps.to_string(),
            r.optimal_return.to_string(),
            cell(r.steps_to_target),
            r.final_return.to_string(),
            r.lock_ends_visited[0].to_string(),
            r.lock_ends_visited[1].to_string(),
            r.worst_decay_ratio.to_string(),
            r.decayed.to_string(),
        ]);
    }
    summary.save(&out.join("summary.csv"))?;

    let mut cell_csv = Csv::new(&[
        "learner",
        "bonus",
        "scale",
        "seeds",
        "median_steps_to_target",
        "reached",
        "both_ends",
        "decayed",
    ]);
    for c in &cells {
        let runs: Vec<&LockRun> = report.runs.iter().filter(|r| r.cell == *c).collect();
        if runs.is_empty() {
            continue;
        }
        let steps: Vec<Option<u64>> = runs.iter().map(|r| r.steps_to_target).collect();
        let s = CellSummary {
            cell: *c,
            seeds: runs.len(),
            median_steps_to_target: median_steps(&steps),
            reached: steps.iter().filter(|x| x.is_some()).count(),
            both_ends: runs.iter().filter(|r| r.both_ends()).count(),
            decayed: runs.iter().filter(|r| r.decayed).count(),
        };
        cell_csv.row(&[
            c.learner.to_string(),
            c.bonus.to_string(),
            c.scale.to_string(),
            s.seeds.to_string(),
            cell(s.median_steps_to_target),
            s.reached.to_string(),
            s.both_ends.to_string(),
            s.decayed.to_string(),
        ]);
        report.cells.push(s);

        let curve = learning_curve(&runs);
        let mut csv = Csv::new(&["env_steps", "median_return", "q25", "q75"]);
        for &(x, m, lo, hi) in &curve {
            csv.row(&[x.to_string(), m.to_string(), lo.to_string(), hi.to_string()]);
        }
        let path: PathBuf = out.join("curves").join(format!("{}.csv", c.name()));
        csv.save(&path)?;
        if cfg.plots {
            let points: Vec<(f64, f64)> = curve.iter().map(|&(x, m, _, _)| (x as f64, m)).collect();
            plot::save_line_chart(
                &path.with_extension("svg"),
                &c.name(),
                "environment steps",
                "median return",
                &[(c.name(), points)],
            )?;
        }
    }
    cell_csv.save(&out.join("cells.csv"))?;
    Ok(report)
}
