//! Online tabular learners driven by an exploration bonus: model-based
//! value iteration, optimistic PPO (multiplicative weights on an empirical
//! model) and optimistic Q-learning.
//!
//! Learners only see the environment through [`Environment`]: they sample
//! transitions and never read the true transition or reward tables.

use serde::{Deserialize, Serialize};

use crate::bonuses::{
    bernstein_bonus, bernstein_value, empirical_model, hoeffding_bonus, hoeffding_value,
    made_bonus, made_value, record_transition, BonusConfig, BonusKind, BonusTable, CountTable,
    RecentBuffer,
};
use crate::error::{Error, Result};
use crate::mdp::{
    argmax, policy_evaluation, value_iteration_warm, Policy, QTable, TabularMdp, ValueTable,
};
use crate::sampling::{sample_index, seeded, Rng64};

/// Outcome of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub next: usize,
    pub reward: f64,
    /// The episode ended in an absorbing state.
    pub done: bool,
}

/// Step-function handle given to learners.
pub trait Environment {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn reset(&mut self) -> usize;
    fn step(&mut self, action: usize) -> Result<Transition>;
}

/// Simulator for a [`TabularMdp`]. Rewards are the table's `r(s, a)`;
/// reaching a state flagged absorbing ends the episode.
#[derive(Debug, Clone)]
pub struct MdpEnv {
    mdp: TabularMdp,
    absorbing: Vec<bool>,
    rng: Rng64,
    state: usize,
}

impl MdpEnv {
    pub fn new(mdp: TabularMdp, absorbing: Vec<bool>, seed: u64) -> Result<Self> {
        if absorbing.len() != mdp.n_states() {
            return Err(Error::DimensionMismatch {
                what: "absorbing flags",
                expected: mdp.n_states(),
                got: absorbing.len(),
            });
        }
        Ok(Self {
            mdp,
            absorbing,
            rng: seeded(seed),
            state: 0,
        })
    }
}

impl Environment for MdpEnv {
    fn n_states(&self) -> usize {
        self.mdp.n_states()
    }

    fn n_actions(&self) -> usize {
        self.mdp.n_actions()
    }

    fn reset(&mut self) -> usize {
        self.state = sample_index(self.mdp.initial(), &mut self.rng);
        self.state
    }

    fn step(&mut self, action: usize) -> Result<Transition> {
        if action >= self.mdp.n_actions() {
            return Err(Error::OutOfRange {
                what: "action",
                index: action,
                size: self.mdp.n_actions(),
            });
        }
        let s = self.state;
        let next = sample_index(self.mdp.transition_row(s, action), &mut self.rng);
        self.state = next;
        Ok(Transition {
            next,
            reward: self.mdp.reward(s, action),
            done: self.absorbing[next],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Vi,
    Ppo,
    QLearning,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 3] = [LearnerKind::Vi, LearnerKind::Ppo, LearnerKind::QLearning];

    pub fn name(&self) -> &'static str {
        match self {
            LearnerKind::Vi => "vi",
            LearnerKind::Ppo => "ppo",
            LearnerKind::QLearning => "q_learning",
        }
    }
}

impl std::fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LearnerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown learner `{s}`")))
    }
}

fn default_plan_tol() -> f64 {
    1e-6
}
fn default_buffer() -> usize {
    1000
}
fn default_heatmap_period() -> usize {
    200
}
fn default_log_period() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    pub episodes: usize,
    pub max_episode_steps: usize,
    pub discount: f64,
    #[serde(default = "default_plan_tol")]
    pub plan_tol: f64,
    /// Effective horizon of the Q-learning step size; `ceil(1 / (1 - gamma))` when absent.
    #[serde(default)]
    pub q_learning_rate_horizon: Option<usize>,
    /// `K` in the PPO step size; the number of episodes when absent.
    #[serde(default)]
    pub ppo_total_iters: Option<usize>,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub bonus: BonusConfig,
    /// Window length of the recent-visit buffer.
    #[serde(default = "default_buffer")]
    pub buffer_capacity: usize,
    #[serde(default = "default_heatmap_period")]
    pub heatmap_period: usize,
    /// Step logs, evaluations and bonus traces are kept for every
    /// `log_period`-th episode (plus the final one). Long runs use this to
    /// keep records small.
    #[serde(default = "default_log_period")]
    pub log_period: usize,
}

impl LearnerConfig {
    pub fn new(episodes: usize, max_episode_steps: usize, discount: f64) -> Self {
        Self {
            episodes,
            max_episode_steps,
            discount,
            plan_tol: default_plan_tol(),
            q_learning_rate_horizon: None,
            ppo_total_iters: None,
            rng_seed: 0,
            bonus: BonusConfig::default(),
            buffer_capacity: default_buffer(),
            heatmap_period: default_heatmap_period(),
            log_period: default_log_period(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.episodes == 0 || self.max_episode_steps == 0 || self.buffer_capacity == 0 {
            return bad("episodes, max_episode_steps and buffer_capacity must be >= 1");
        }
        if self.heatmap_period == 0 || self.log_period == 0 {
            return bad("heatmap_period and log_period must be >= 1");
        }
        if !(0.0..1.0).contains(&self.discount) {
            return bad("discount must lie in [0, 1)");
        }
        if !(self.plan_tol > 0.0) {
            return bad("plan_tol must be > 0");
        }
        if self.q_learning_rate_horizon == Some(0) || self.ppo_total_iters == Some(0) {
            return bad("horizons must be >= 1");
        }
        self.bonus.validate()
    }

    /// `H_eff`, defaulting to `ceil(1 / (1 - gamma))`. The small offset keeps
    /// exact reciprocals such as `1 / (1 - 0.9)` from rounding up to 11.
    pub fn effective_horizon(&self) -> usize {
        self.q_learning_rate_horizon
            .unwrap_or_else(|| (1.0 / (1.0 - self.discount) - 1e-9).ceil().max(1.0) as usize)
    }

    pub fn ppo_step(&self, n_actions: usize) -> f64 {
        ppo_step_size(
            n_actions,
            self.max_episode_steps,
            self.ppo_total_iters.unwrap_or(self.episodes),
        )
    }
}

/// `alpha = sqrt(2 ln A / (H K))`.
pub fn ppo_step_size(n_actions: usize, horizon: usize, total_iters: usize) -> f64 {
    (2.0 * (n_actions as f64).ln() / (horizon as f64 * total_iters as f64)).sqrt()
}

/// `alpha_t = (H + 1) / (H + t)`.
pub fn q_learning_rate(effective_horizon: usize, t: u64) -> f64 {
    let h = effective_horizon as f64;
    (h + 1.0) / (h + t as f64)
}

/// `pi'(a|s)` proportional to `pi(a|s) exp(alpha Q(s, a))`, computed with a
/// per-row max shift.
pub fn multiplicative_weights_update(policy: &Policy, q: &QTable, alpha: f64) -> Result<Policy> {
    let na = policy.n_actions();
    let mut probs = Vec::with_capacity(policy.as_slice().len());
    for s in 0..policy.n_states() {
        let logits: Vec<f64> = policy
            .row(s)
            .iter()
            .zip(q.row(s))
            .map(|(p, qv)| if *p > 0.0 { p.ln() + alpha * qv } else { f64::NEG_INFINITY })
            .collect();
        let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
        let total: f64 = w.iter().sum();
        probs.extend(w.into_iter().map(|x| x / total));
    }
    Policy::new(policy.n_states(), na, probs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepLog {
    pub episode: usize,
    pub step: usize,
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub bonus: f64,
    /// Environment steps taken so far, including this one.
    pub cum_steps: u64,
}

/// Per-state visit totals after `cum_steps` steps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatmapSnapshot {
    pub episode: usize,
    pub cum_steps: u64,
    pub state_counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalPoint {
    pub episode: usize,
    pub cum_steps: u64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BonusTrace {
    pub state: usize,
    pub action: usize,
    /// `(cum_steps, bonus)` at the start and after every episode.
    pub points: Vec<(u64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub learner: LearnerKind,
    pub bonus: BonusKind,
    pub steps: Vec<StepLog>,
    pub episode_returns: Vec<f64>,
    /// Evaluation of the policy the agent would run next, before the first
    /// episode and after every episode.
    pub evaluations: Vec<EvalPoint>,
    pub heatmaps: Vec<HeatmapSnapshot>,
    pub bonus_initial: BonusTable,
    pub bonus_final: BonusTable,
    pub traces: Vec<BonusTrace>,
    pub pair_counts: Vec<u64>,
    pub final_policy: Policy,
    /// Planned Q (value iteration), `Q^{pi_K}` on the final model (PPO) or
    /// the learned table (Q-learning).
    pub final_q: QTable,
    pub env_steps: u64,
}

impl RunRecord {
    pub fn total_steps(&self) -> u64 {
        self.env_steps
    }

    /// Steps consumed before the first evaluation reaching `target`.
    pub fn steps_to_reach(&self, target: f64) -> Option<u64> {
        self.evaluations
            .iter()
            .find(|e| e.value >= target)
            .map(|e| e.cum_steps)
    }

    /// Whether any action was taken in `state`.
    pub fn visited(&self, state: usize) -> bool {
        let na = self.bonus_final.n_actions;
        self.pair_counts[state * na..(state + 1) * na].iter().any(|&n| n > 0)
    }

    /// Pairs sorted by visit count, most visited first (ties by index).
    pub fn most_visited_pairs(&self, n: usize) -> Vec<(usize, usize)> {
        let na = self.bonus_final.n_actions;
        let mut idx: Vec<usize> = (0..self.pair_counts.len()).collect();
        idx.sort_by(|a, b| self.pair_counts[*b].cmp(&self.pair_counts[*a]).then(a.cmp(b)));
        idx.into_iter().take(n).map(|i| (i / na, i % na)).collect()
    }
}

/// Optional instrumentation supplied by the caller.
#[derive(Default)]
pub struct RunHooks<'a> {
    /// Scores a policy, e.g. its exact expected episode return.
    pub evaluator: Option<&'a dyn Fn(&Policy) -> f64>,
    pub trace_pairs: Vec<(usize, usize)>,
}

/// Counts, reward sums and absorbing flags learned from experience.
struct Knowledge {
    n_states: usize,
    n_actions: usize,
    counts: CountTable,
    buffer: RecentBuffer,
    reward_sum: Vec<f64>,
    absorbing: Vec<bool>,
}

impl Knowledge {
    fn new(n_states: usize, n_actions: usize, capacity: usize) -> Result<Self> {
        Ok(Self {
            n_states,
            n_actions,
            counts: CountTable::new(n_states, n_actions),
            buffer: RecentBuffer::new(n_states, n_actions, capacity)?,
            reward_sum: vec![0.0; n_states * n_actions],
            absorbing: vec![false; n_states],
        })
    }

    fn observe(&mut self, s: usize, a: usize, tr: &Transition) -> Result<()> {
        record_transition(&mut self.counts, &mut self.buffer, s, a, tr.next)?;
        self.reward_sum[s * self.n_actions + a] += tr.reward;
        if tr.done {
            self.absorbing[tr.next] = true;
        }
        Ok(())
    }

    /// Empirical mean reward; `default` before the first observation.
    fn reward_estimate(&self, default: f64) -> Vec<f64> {
        self.reward_sum
            .iter()
            .zip(self.counts.counts())
            .map(|(r, &n)| if n == 0 { default } else { r / n as f64 })
            .collect()
    }

    fn bonus(&self, kind: BonusKind, model: &[f64], values: &ValueTable, cfg: &BonusConfig) -> Result<BonusTable> {
        let mut table = match kind {
            BonusKind::Hoeffding => hoeffding_bonus(&self.counts, cfg),
            BonusKind::Bernstein => bernstein_bonus(&self.counts, model, values, cfg)?,
            BonusKind::Made => made_bonus(&self.counts, &self.buffer, cfg),
        };
        for s in (0..self.n_states).filter(|&s| self.absorbing[s]) {
            for a in 0..self.n_actions {
                table.values[s * self.n_actions + a] = 0.0;
            }
        }
        Ok(table)
    }

    fn pair_bonus(&self, kind: BonusKind, s: usize, a: usize, values: &[f64], cfg: &BonusConfig) -> f64 {
        if self.absorbing[s] {
            return 0.0;
        }
        let n = self.counts.get(s, a);
        match kind {
            BonusKind::Hoeffding => hoeffding_value(n, cfg),
            BonusKind::Bernstein => bernstein_value(&self.counts, s, a, values, cfg),
            BonusKind::Made => made_value(n, self.buffer.get(s, a), cfg),
        }
    }

    /// Empirical model with known absorbing states as zero-reward self-loops.
    fn model(&self) -> Vec<f64> {
        let ns = self.n_states;
        let mut model = empirical_model(&self.counts);
        for s in (0..ns).filter(|&s| self.absorbing[s]) {
            for a in 0..self.n_actions {
                let row = &mut model[(s * self.n_actions + a) * ns..(s * self.n_actions + a + 1) * ns];
                row.fill(0.0);
                row[s] = 1.0;
            }
        }
        model
    }

    fn planning_mdp(&self, model: Vec<f64>, bonus: &BonusTable, cfg: &LearnerConfig) -> Result<TabularMdp> {
        let ns = self.n_states;
        let na = self.n_actions;
        let mut reward: Vec<f64> = self
            .reward_estimate(cfg.bonus.v_max)
            .iter()
            .zip(&bonus.values)
            .map(|(r, b)| r + b)
            .collect();
        for s in (0..ns).filter(|&s| self.absorbing[s]) {
            reward[s * na..(s + 1) * na].fill(0.0);
        }
        let initial = vec![1.0 / ns as f64; ns];
        TabularMdp::new(ns, na, model, vec![0.0; ns * na], initial, cfg.discount)?.with_reward(reward)
    }

    fn state_counts(&self) -> Vec<u64> {
        self.counts
            .counts()
            .chunks(self.n_actions)
            .map(|row| row.iter().sum())
            .collect()
    }
}

/// Shared episode bookkeeping for all learners.
struct Recorder<'a> {
    learner: LearnerKind,
    kind: BonusKind,
    period: usize,
    log_period: usize,
    hooks: RunHooks<'a>,
    steps: Vec<StepLog>,
    episode_returns: Vec<f64>,
    evaluations: Vec<EvalPoint>,
    heatmaps: Vec<HeatmapSnapshot>,
    traces: Vec<BonusTrace>,
    bonus_initial: Option<BonusTable>,
    cum_steps: u64,
}

impl<'a> Recorder<'a> {
    fn new(learner: LearnerKind, kind: BonusKind, cfg: &LearnerConfig, hooks: RunHooks<'a>, n_states: usize, n_actions: usize) -> Result<Self> {
        for &(s, a) in &hooks.trace_pairs {
            if s >= n_states || a >= n_actions {
                return Err(Error::OutOfRange {
                    what: "traced pair",
                    index: s * n_actions + a,
                    size: n_states * n_actions,
                });
            }
        }
        let traces = hooks
            .trace_pairs
            .iter()
            .map(|&(state, action)| BonusTrace {
                state,
                action,
                points: Vec::new(),
            })
            .collect();
        Ok(Self {
            learner,
            kind,
            period: cfg.heatmap_period,
            log_period: cfg.log_period,
            hooks,
            steps: Vec::new(),
            episode_returns: Vec::with_capacity(cfg.episodes),
            evaluations: Vec::with_capacity(cfg.episodes / cfg.log_period + 2),
            heatmaps: Vec::new(),
            traces,
            bonus_initial: None,
            cum_steps: 0,
        })
    }

    fn log_step(&mut self, episode: usize, step: usize, s: usize, a: usize, tr: &Transition, bonus: f64) {
        self.cum_steps += 1;
        if episode % self.log_period != 0 {
            return;
        }
        self.steps.push(StepLog {
            episode,
            step,
            state: s,
            action: a,
            reward: tr.reward,
            bonus,
            cum_steps: self.cum_steps,
        });
    }

    /// Called before the first episode (`episode = 0`) and after each
    /// episode `e` with `episode = e + 1` completed episodes.
    fn checkpoint(&mut self, completed: usize, total: usize, know: &Knowledge, bonus: &BonusTable, next_policy: &Policy) {
        if completed == 0 {
            self.bonus_initial = Some(bonus.clone());
        }
        if completed % self.log_period == 0 || completed == total {
            if let Some(eval) = self.hooks.evaluator {
                self.evaluations.push(EvalPoint {
                    episode: completed,
                    cum_steps: self.cum_steps,
                    value: eval(next_policy),
                });
            }
            for t in &mut self.traces {
                t.points.push((self.cum_steps, bonus.get(t.state, t.action)));
            }
        }
        if completed % self.period == 0 || completed == total {
            self.heatmaps.push(HeatmapSnapshot {
                episode: completed,
                cum_steps: self.cum_steps,
                state_counts: know.state_counts(),
            });
        }
    }

    fn finish(self, know: &Knowledge, bonus_final: BonusTable, final_policy: Policy, final_q: QTable) -> RunRecord {
        RunRecord {
            learner: self.learner,
            bonus: self.kind,
            steps: self.steps,
            episode_returns: self.episode_returns,
            evaluations: self.evaluations,
            heatmaps: self.heatmaps,
            bonus_initial: self.bonus_initial.unwrap_or_else(|| bonus_final.clone()),
            bonus_final,
            traces: self.traces,
            pair_counts: know.counts.counts().to_vec(),
            final_policy,
            final_q,
            env_steps: self.cum_steps,
        }
    }
}

fn check_env(env: &dyn Environment) -> Result<()> {
    if env.n_states() == 0 || env.n_actions() == 0 {
        return Err(Error::InvalidConfig("environment has no states or actions".into()));
    }
    Ok(())
}

/// Model-based optimistic value iteration, replanned every episode on the
/// empirical model with reward `r_hat + bonus`, acting greedily.
pub fn run_vi_agent(
    env: &mut dyn Environment,
    kind: BonusKind,
    cfg: &LearnerConfig,
    hooks: RunHooks<'_>,
) -> Result<RunRecord> {
    cfg.validate()?;
    check_env(env)?;
    let (ns, na) = (env.n_states(), env.n_actions());
    let mut know = Knowledge::new(ns, na, cfg.buffer_capacity)?;
    let mut rec = Recorder::new(LearnerKind::Vi, kind, cfg, hooks, ns, na)?;
    let mut q: Option<QTable> = None;
    let mut values = ValueTable(vec![0.0; ns]);

    let plan = |know: &Knowledge, values: &ValueTable, q: &Option<QTable>| -> Result<(QTable, Policy, BonusTable)> {
        let model = know.model();
        let bonus = know.bonus(kind, &model, values, &cfg.bonus)?;
        let mdp = know.planning_mdp(model, &bonus, cfg)?;
        let (q, policy) = value_iteration_warm(&mdp, cfg.plan_tol, q.as_ref())?;
        Ok((q, policy, bonus))
    };

    let (mut q_now, mut policy, mut bonus) = plan(&know, &values, &q)?;
    rec.checkpoint(0, cfg.episodes, &know, &bonus, &policy);
    for episode in 0..cfg.episodes {
        let mut s = env.reset();
        let mut ret = 0.0;
        for step in 0..cfg.max_episode_steps {
            let a = argmax(q_now.row(s));
            let tr = env.step(a)?;
            rec.log_step(episode, step, s, a, &tr, bonus.get(s, a));
            know.observe(s, a, &tr)?;
            ret += tr.reward;
            if tr.done {
                break;
            }
            s = tr.next;
        }
        rec.episode_returns.push(ret);
        values = q_now.max_values();
        q = Some(q_now);
        (q_now, policy, bonus) = plan(&know, &values, &q)?;
        rec.checkpoint(episode + 1, cfg.episodes, &know, &bonus, &policy);
    }
    Ok(rec.finish(&know, bonus, policy, q_now))
}

/// Optimistic PPO: one trajectory per iteration under the stochastic policy,
/// exact evaluation of `Q^{pi_k}` on the empirical model with reward
/// `r_hat + bonus`, then a multiplicative-weights update.
pub fn run_ppo_agent(
    env: &mut dyn Environment,
    kind: BonusKind,
    cfg: &LearnerConfig,
    hooks: RunHooks<'_>,
) -> Result<RunRecord> {
    cfg.validate()?;
    check_env(env)?;
    let (ns, na) = (env.n_states(), env.n_actions());
    let alpha = cfg.ppo_step(na);
    let mut know = Knowledge::new(ns, na, cfg.buffer_capacity)?;
    let mut rec = Recorder::new(LearnerKind::Ppo, kind, cfg, hooks, ns, na)?;
    let mut rng = seeded(cfg.rng_seed);
    let mut policy = Policy::uniform(ns, na);
    let mut values = ValueTable(vec![0.0; ns]);
    let mut last_q = QTable {
        n_states: ns,
        n_actions: na,
        q: vec![0.0; ns * na],
    };

    let model = know.model();
    let mut bonus = know.bonus(kind, &model, &values, &cfg.bonus)?;
    rec.checkpoint(0, cfg.episodes, &know, &bonus, &policy);
    for episode in 0..cfg.episodes {
        let mut s = env.reset();
        let mut ret = 0.0;
        for step in 0..cfg.max_episode_steps {
            let a = sample_index(policy.row(s), &mut rng);
            let tr = env.step(a)?;
            rec.log_step(episode, step, s, a, &tr, bonus.get(s, a));
            know.observe(s, a, &tr)?;
            ret += tr.reward;
            if tr.done {
                break;
            }
            s = tr.next;
        }
        rec.episode_returns.push(ret);
        let model = know.model();
        bonus = know.bonus(kind, &model, &values, &cfg.bonus)?;
        let mdp = know.planning_mdp(model, &bonus, cfg)?;
        let (v, q) = policy_evaluation(&mdp, &policy)?;
        values = v;
        policy = multiplicative_weights_update(&policy, &q, alpha)?;
        last_q = q;
        rec.checkpoint(episode + 1, cfg.episodes, &know, &bonus, &policy);
    }
    Ok(rec.finish(&know, bonus, policy, last_q))
}

/// Optimistic Q-learning with a visit-indexed step size and greedy actions.
pub fn run_q_agent(
    env: &mut dyn Environment,
    kind: BonusKind,
    cfg: &LearnerConfig,
    hooks: RunHooks<'_>,
) -> Result<RunRecord> {
    cfg.validate()?;
    check_env(env)?;
    let (ns, na) = (env.n_states(), env.n_actions());
    let h_eff = cfg.effective_horizon();
    let mut know = Knowledge::new(ns, na, cfg.buffer_capacity)?;
    let mut rec = Recorder::new(LearnerKind::QLearning, kind, cfg, hooks, ns, na)?;
    let mut q = QTable {
        n_states: ns,
        n_actions: na,
        q: vec![cfg.bonus.v_max / (1.0 - cfg.discount); ns * na],
    };
    let bonus_table = |know: &Knowledge, q: &QTable| -> Result<BonusTable> {
        let values = q.max_values();
        know.bonus(kind, &know.model(), &values, &cfg.bonus)
    };

    rec.checkpoint(0, cfg.episodes, &know, &bonus_table(&know, &q)?, &q.greedy_policy());
    for episode in 0..cfg.episodes {
        let mut s = env.reset();
        let mut ret = 0.0;
        for step in 0..cfg.max_episode_steps {
            let a = argmax(q.row(s));
            let tr = env.step(a)?;
            know.observe(s, a, &tr)?;
            let values = q.max_values();
            let b = know.pair_bonus(kind, s, a, &values.0, &cfg.bonus);
            rec.log_step(episode, step, s, a, &tr, b);
            let bootstrap = if tr.done { 0.0 } else { values.0[tr.next] };
            let lr = q_learning_rate(h_eff, know.counts.get(s, a));
            let i = s * na + a;
            q.q[i] = (1.0 - lr) * q.q[i] + lr * (tr.reward + b + cfg.discount * bootstrap);
            ret += tr.reward;
            if tr.done {
                break;
            }
            s = tr.next;
        }
        rec.episode_returns.push(ret);
        let table = bonus_table(&know, &q)?;
        rec.checkpoint(episode + 1, cfg.episodes, &know, &table, &q.greedy_policy());
    }
    let table = bonus_table(&know, &q)?;
    let policy = q.greedy_policy();
    Ok(rec.finish(&know, table, policy, q))
}

pub fn run_learner(
    learner: LearnerKind,
    env: &mut dyn Environment,
    kind: BonusKind,
    cfg: &LearnerConfig,
    hooks: RunHooks<'_>,
) -> Result<RunRecord> {
    match learner {
        LearnerKind::Vi => run_vi_agent(env, kind, cfg, hooks),
        LearnerKind::Ppo => run_ppo_agent(env, kind, cfg, hooks),
        LearnerKind::QLearning => run_q_agent(env, kind, cfg, hooks),
    }
}
