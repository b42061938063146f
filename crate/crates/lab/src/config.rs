//! Experiment configuration: strict TOML input, fully resolved JSON echo.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use made_core::bonuses::BonusKind;
use made_core::envs::{ChainConfig, LockConfig};
use made_core::learners::LearnerKind;
use made_core::meta::MetaConfig;
use made_core::policy_grad::PgObjective;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config error at `{key}`: {message}")]
    Schema { key: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Lock,
    ChainPg,
    Meta,
    Checks,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Lock => "lock",
            ExperimentKind::ChainPg => "chain_pg",
            ExperimentKind::Meta => "meta",
            ExperimentKind::Checks => "checks",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lock" => Ok(ExperimentKind::Lock),
            "chain_pg" => Ok(ExperimentKind::ChainPg),
            "meta" => Ok(ExperimentKind::Meta),
            "checks" => Ok(ExperimentKind::Checks),
            other => Err(ConfigError::Invalid(format!(
                "unknown experiment `{other}` (expected lock, chain_pg, meta or checks)"
            ))),
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_heatmap_period() -> usize {
    200
}
fn default_trace_pairs() -> Vec<(usize, usize)> {
    vec![(0, 0), (0, 1)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Episodes between heatmap snapshots.
    #[serde(default = "default_heatmap_period")]
    pub heatmap_period: usize,
    #[serde(default = "default_trace_pairs")]
    pub bonus_trace_pairs: Vec<(usize, usize)>,
    /// Also write SVG line plots next to the curve CSVs.
    #[serde(default)]
    pub plots: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lock: Option<LockSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain_pg: Option<ChainPgSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<MetaSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checks: Option<ChecksSection>,
}

/// A value per learner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerLearner {
    pub vi: usize,
    pub ppo: usize,
    pub q_learning: usize,
}

impl PerLearner {
    pub fn get(&self, kind: LearnerKind) -> usize {
        match kind {
            LearnerKind::Vi => self.vi,
            LearnerKind::Ppo => self.ppo,
            LearnerKind::QLearning => self.q_learning,
        }
    }
}

fn all_learners() -> Vec<LearnerKind> {
    LearnerKind::ALL.to_vec()
}
fn all_bonuses() -> Vec<BonusKind> {
    BonusKind::ALL.to_vec()
}
fn default_scales() -> Vec<f64> {
    vec![1.0]
}
fn default_v_max() -> f64 {
    1.0
}
fn default_episodes() -> PerLearner {
    PerLearner {
        vi: 2_000,
        ppo: 600_000,
        q_learning: 10_000,
    }
}
fn default_log_period() -> PerLearner {
    PerLearner {
        vi: 1,
        ppo: 100,
        q_learning: 1,
    }
}
fn default_plan_tol() -> f64 {
    1e-6
}
fn default_buffer() -> usize {
    1000
}
fn default_fraction() -> f64 {
    0.9
}
fn default_true() -> bool {
    true
}
fn default_decay_pairs() -> usize {
    5
}
fn default_decay_ratio() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LockSection {
    #[serde(default)]
    pub env: LockConfig,
    /// Use each run seed as the layout seed; otherwise every run shares
    /// `env.env_seed`.
    #[serde(default = "default_true")]
    pub vary_layout: bool,
    #[serde(default = "all_learners")]
    pub learners: Vec<LearnerKind>,
    #[serde(default = "all_bonuses")]
    pub bonuses: Vec<BonusKind>,
    #[serde(default = "default_scales")]
    pub scales: Vec<f64>,
    #[serde(default = "default_v_max")]
    pub v_max: f64,
    #[serde(default = "default_episodes")]
    pub episodes: PerLearner,
    #[serde(default = "default_log_period")]
    pub log_period: PerLearner,
    /// `2H + 2` when absent.
    #[serde(default)]
    pub max_episode_steps: Option<usize>,
    #[serde(default = "default_plan_tol")]
    pub plan_tol: f64,
    #[serde(default = "default_buffer")]
    pub buffer_capacity: usize,
    #[serde(default)]
    pub q_learning_rate_horizon: Option<usize>,
    #[serde(default)]
    pub ppo_total_iters: Option<usize>,
    /// A run has reached the maximum return once its evaluated return is at
    /// least this fraction of the optimal episode return.
    #[serde(default = "default_fraction")]
    pub target_fraction: f64,
    /// Number of most-visited pairs in the bonus decay check.
    #[serde(default = "default_decay_pairs")]
    pub decay_pairs: usize,
    /// Largest final / initial bonus ratio that counts as decayed.
    #[serde(default = "default_decay_ratio")]
    pub decay_ratio: f64,
}

impl Default for LockSection {
    fn default() -> Self {
        toml::from_str("").expect("every lock field has a default")
    }
}

fn all_objectives() -> Vec<PgObjective> {
    PgObjective::ALL.to_vec()
}
fn default_step_sizes() -> Vec<f64> {
    vec![0.5, 1.0, 2.0, 5.0]
}
fn default_pg_iters() -> usize {
    10_000
}
fn default_tau0() -> f64 {
    0.1
}
fn default_sign() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainPgSection {
    #[serde(default)]
    pub env: ChainConfig,
    #[serde(default = "all_objectives")]
    pub objectives: Vec<PgObjective>,
    #[serde(default = "default_step_sizes")]
    pub step_sizes: Vec<f64>,
    #[serde(default = "default_pg_iters")]
    pub iters: usize,
    #[serde(default = "default_tau0")]
    pub tau0: f64,
    #[serde(default = "default_sign")]
    pub made_sign: f64,
    #[serde(default = "default_fraction")]
    pub target_fraction: f64,
}

impl Default for ChainPgSection {
    fn default() -> Self {
        toml::from_str("").expect("every chain_pg field has a default")
    }
}

fn default_meta_states() -> usize {
    5
}
fn default_meta_actions() -> usize {
    2
}
fn default_meta_discount() -> f64 {
    0.9
}
fn default_preset_gap() -> Option<f64> {
    Some(0.05)
}
fn default_smoothing() -> f64 {
    1.0
}
fn default_oracle_gap() -> f64 {
    1e-4
}
fn default_oracle_iters() -> usize {
    20_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaSection {
    /// Random MDP size; each run seed picks the instance.
    #[serde(default = "default_meta_states")]
    pub n_states: usize,
    #[serde(default = "default_meta_actions")]
    pub n_actions: usize,
    #[serde(default = "default_meta_discount")]
    pub discount: f64,
    /// Target gap used to derive `params` when they are not given.
    #[serde(default = "default_preset_gap")]
    pub preset_gap: Option<f64>,
    #[serde(default = "default_smoothing")]
    pub smoothing: f64,
    #[serde(default)]
    pub params: Option<MetaConfig>,
    /// Repeat every run with density noise of size `params.density_err`.
    #[serde(default = "default_true")]
    pub with_noise: bool,
    /// Duality-gap tolerance of the reference maximizer.
    #[serde(default = "default_oracle_gap")]
    pub oracle_gap: f64,
    #[serde(default = "default_oracle_iters")]
    pub oracle_max_iters: usize,
}

impl Default for MetaSection {
    fn default() -> Self {
        toml::from_str("").expect("every meta field has a default")
    }
}

fn default_occ_mdps() -> usize {
    20
}
fn default_occ_states() -> usize {
    6
}
fn default_max_actions() -> usize {
    3
}
fn default_occ_samples() -> usize {
    200_000
}
fn default_occ_tol() -> f64 {
    0.01
}
fn default_grad_mdps() -> usize {
    10
}
fn default_grad_states() -> usize {
    4
}
fn default_grad_tol() -> f64 {
    1e-4
}
fn default_fd_step() -> f64 {
    1e-6
}
fn default_argmax_instances() -> usize {
    10
}
fn default_argmax_size() -> usize {
    8
}
fn default_argmax_tol() -> f64 {
    1e-6
}
fn default_smoothings() -> Vec<f64> {
    vec![0.25, 1.0]
}
fn default_trials() -> usize {
    1000
}
fn default_drift_horizon() -> usize {
    10_000
}
fn default_check_temperature() -> f64 {
    0.1
}
fn default_check_mix_rate() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksSection {
    #[serde(default = "default_occ_mdps")]
    pub occupancy_mdps: usize,
    #[serde(default = "default_occ_states")]
    pub occupancy_max_states: usize,
    #[serde(default = "default_max_actions")]
    pub occupancy_max_actions: usize,
    #[serde(default = "default_occ_samples")]
    pub occupancy_samples: usize,
    #[serde(default = "default_occ_tol")]
    pub occupancy_tol: f64,
    #[serde(default = "default_grad_mdps")]
    pub gradient_mdps: usize,
    #[serde(default = "default_grad_states")]
    pub gradient_max_states: usize,
    #[serde(default = "default_max_actions")]
    pub gradient_max_actions: usize,
    #[serde(default = "default_grad_tol")]
    pub gradient_tol: f64,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
    #[serde(default = "default_tau0")]
    pub gradient_tau: f64,
    #[serde(default = "default_argmax_instances")]
    pub argmax_instances: usize,
    #[serde(default = "default_argmax_size")]
    pub argmax_size: usize,
    #[serde(default = "default_argmax_tol")]
    pub argmax_tol: f64,
    #[serde(default = "default_smoothings")]
    pub smoothings: Vec<f64>,
    #[serde(default = "default_trials")]
    pub regularity_trials: usize,
    #[serde(default = "default_drift_horizon")]
    pub drift_horizon: usize,
    #[serde(default = "default_meta_states")]
    pub regularity_states: usize,
    #[serde(default = "default_meta_actions")]
    pub regularity_actions: usize,
    #[serde(default = "default_check_temperature")]
    pub regularity_temperature: f64,
    #[serde(default = "default_check_mix_rate")]
    pub regularity_mix_rate: f64,
}

impl Default for ChecksSection {
    fn default() -> Self {
        toml::from_str("").expect("every checks field has a default")
    }
}

/// Reads and resolves a TOML config file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::Schema {
        key: String::new(),
        message: e.to_string(),
    })?;
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Schema {
        key: e.path().to_string(),
        message: e.inner().message().to_string(),
    })?;
    cfg.resolve()
}

/// Parses a `resolved_config.json` written by an earlier run.
pub fn parse_resolved_json(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| ConfigError::Schema {
        key: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    cfg.resolve()
}

pub fn to_resolved_json(cfg: &ExperimentConfig) -> String {
    let mut text = serde_json::to_string_pretty(cfg).expect("config serializes");
    text.push('\n');
    text
}

impl ExperimentConfig {
    /// Fills the section of the chosen experiment with defaults, makes every
    /// derived value explicit, and validates.
    pub fn resolve(mut self) -> Result<Self, ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.heatmap_period == 0 {
            return bad("heatmap_period must be >= 1".into());
        }
        let present = [
            (ExperimentKind::Lock, self.lock.is_some()),
            (ExperimentKind::ChainPg, self.chain_pg.is_some()),
            (ExperimentKind::Meta, self.meta.is_some()),
            (ExperimentKind::Checks, self.checks.is_some()),
        ];
        for (kind, is_set) in present {
            if is_set && kind != self.experiment {
                return bad(format!(
                    "section [{kind}] given but the experiment is `{}`",
                    self.experiment
                ));
            }
        }
        match self.experiment {
            ExperimentKind::Lock => {
                let lock = self.lock.get_or_insert_with(LockSection::default);
                lock.env.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
                lock.max_episode_steps.get_or_insert(lock.env.episode_horizon());
                if lock.learners.is_empty() || lock.bonuses.is_empty() || lock.scales.is_empty() {
                    return bad("lock needs at least one learner, bonus and scale".into());
                }
                if !(lock.target_fraction > 0.0 && lock.target_fraction <= 1.0) {
                    return bad("target_fraction must lie in (0, 1]".into());
                }
                for kind in LearnerKind::ALL {
                    if lock.episodes.get(kind) == 0 || lock.log_period.get(kind) == 0 {
                        return bad(format!("episodes and log_period for {kind} must be >= 1"));
                    }
                }
                let n_states = 4 * lock.env.depth + 2;
                if let Some(&(s, a)) = self.bonus_trace_pairs.iter().find(|(s, a)| *s >= n_states || *a >= 2) {
                    return bad(format!("traced pair ({s}, {a}) is outside the lock"));
                }
            }
            ExperimentKind::ChainPg => {
                let pg = self.chain_pg.get_or_insert_with(ChainPgSection::default);
                if pg.objectives.is_empty() || pg.step_sizes.is_empty() {
                    return bad("chain_pg needs at least one objective and step size".into());
                }
                if pg.step_sizes.iter().any(|s| !(*s > 0.0)) {
                    return bad("step sizes must be > 0".into());
                }
            }
            ExperimentKind::Meta => {
                let meta = self.meta.get_or_insert_with(MetaSection::default);
                if meta.params.is_none() {
                    let Some(eps) = meta.preset_gap else {
                        return bad("meta needs `params` or `preset_gap`".into());
                    };
                    let preset = MetaConfig::for_target_gap(eps, meta.smoothing, meta.n_states, meta.n_actions)
                        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                    meta.params = Some(preset);
                }
                let params = meta.params.as_ref().expect("filled above");
                params.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
                if params.smoothing != meta.smoothing {
                    return bad("params.smoothing must equal smoothing".into());
                }
                if !(0.0..1.0).contains(&meta.discount) {
                    return bad("discount must lie in [0, 1)".into());
                }
            }
            ExperimentKind::Checks => {
                self.checks.get_or_insert_with(ChecksSection::default);
            }
        }
        Ok(self)
    }

    pub fn lock(&self) -> &LockSection {
        self.lock.as_ref().expect("resolved lock config")
    }

    pub fn chain_pg(&self) -> &ChainPgSection {
        self.chain_pg.as_ref().expect("resolved chain_pg config")
    }

    pub fn meta(&self) -> &MetaSection {
        self.meta.as_ref().expect("resolved meta config")
    }

    pub fn checks(&self) -> &ChecksSection {
        self.checks.as_ref().expect("resolved checks config")
    }
}

/// Parses `0..9` (inclusive), `3` or `1,4,7`.
pub fn parse_seeds(spec: &str) -> Result<Vec<u64>, ConfigError> {
    let bad = || ConfigError::Invalid(format!("cannot parse seeds `{spec}`"));
    let seeds = if let Some((lo, hi)) = spec.split_once("..") {
        let lo: u64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: u64 = hi.trim().parse().map_err(|_| bad())?;
        if hi < lo {
            return Err(bad());
        }
        (lo..=hi).collect()
    } else {
        spec.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect::<Result<Vec<u64>, _>>()?
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_lock_config_is_filled() {
        let cfg = parse_config_str("experiment = \"lock\"\nseeds = [0]\n").unwrap();
        let lock = cfg.lock();
        assert_eq!(lock.env.depth, 5);
        assert_eq!(lock.max_episode_steps, Some(12));
        assert_eq!(lock.learners.len(), 3);
        assert_eq!(cfg.heatmap_period, 200);
        let json = to_resolved_json(&cfg);
        for key in ["max_episode_steps", "buffer_capacity", "slip", "target_fraction", "log_period"] {
            assert!(json.contains(key), "{key} missing from resolved config");
        }
    }

    #[test]
    fn unknown_key_names_the_path() {
        let err = parse_config_str("experiment = \"lock\"\nseeds = [0]\n[lock]\nbonuss = [\"made\"]\n").unwrap_err();
        let text = err.to_string();
        assert!(text.contains("bonuss"), "{text}");
        assert!(text.contains("lock"), "{text}");
    }

    #[test]
    fn type_mismatch_is_reported() {
        let err = parse_config_str("experiment = \"lock\"\nseeds = \"zero\"\n").unwrap_err();
        assert!(matches!(err, ConfigError::Schema { ref key, .. } if key == "seeds"), "{err}");
    }

    #[test]
    fn foreign_section_is_rejected() {
        let err = parse_config_str("experiment = \"lock\"\nseeds = [0]\n[meta]\n").unwrap_err();
        assert!(err.to_string().contains("[meta]"));
    }

    #[test]
    fn empty_seed_list_is_rejected() {
        assert!(parse_config_str("experiment = \"checks\"\nseeds = []\n").is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        for kind in ["lock", "chain_pg", "meta", "checks"] {
            let cfg = parse_config_str(&format!("experiment = \"{kind}\"\nseeds = [0, 1]\n")).unwrap();
            let json = to_resolved_json(&cfg);
            let again = parse_resolved_json(&json).unwrap();
            assert_eq!(again, cfg);
            assert_eq!(to_resolved_json(&again), json);
        }
    }

    #[test]
    fn meta_preset_is_materialized() {
        let cfg = parse_config_str("experiment = \"meta\"\nseeds = [0]\n").unwrap();
        let params = cfg.meta().params.clone().unwrap();
        assert_eq!(params.iters, 425);
    }

    #[test]
    fn seed_specs() {
        assert_eq!(parse_seeds("0..9").unwrap(), (0..10).collect::<Vec<u64>>());
        assert_eq!(parse_seeds("3").unwrap(), vec![3]);
        assert_eq!(parse_seeds("1, 4,7").unwrap(), vec![1, 4, 7]);
        assert!(parse_seeds("5..2").is_err());
        assert!(parse_seeds("a").is_err());
    }
}
