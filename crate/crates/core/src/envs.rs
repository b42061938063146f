//! Benchmark MDPs: the stochastic bidirectional combination lock, the
//! vanishing-gradient chain, and seeded random MDPs for tests.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::sampling::{flat_dirichlet, seeded};

fn default_depth() -> usize {
    5
}
fn default_slip() -> f64 {
    0.5
}
fn default_anti_reward() -> f64 {
    -0.01
}
fn default_big_reward() -> f64 {
    1.0
}
fn default_small_reward() -> f64 {
    0.1
}
fn default_true() -> bool {
    true
}
fn default_lock_discount() -> f64 {
    0.99
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LockConfig {
    /// Good states per chain (`H`).
    #[serde(default = "default_depth")]
    pub depth: usize,
    /// Probability that even the good action falls into the dead chain.
    #[serde(default = "default_slip")]
    pub slip: f64,
    /// Reward for transiting into a good state (expected over the slip).
    #[serde(default = "default_anti_reward")]
    pub anti_reward: f64,
    #[serde(default = "default_big_reward")]
    pub big_reward: f64,
    #[serde(default = "default_small_reward")]
    pub small_reward: f64,
    #[serde(default)]
    pub env_seed: u64,
    /// When false, action 0 is good everywhere and lock 0 pays `big_reward`.
    #[serde(default = "default_true")]
    pub randomize: bool,
    #[serde(default = "default_lock_discount")]
    pub discount: f64,
}

impl Default for LockConfig {
    fn default() -> Self {
        Self {
            depth: default_depth(),
            slip: default_slip(),
            anti_reward: default_anti_reward(),
            big_reward: default_big_reward(),
            small_reward: default_small_reward(),
            env_seed: 0,
            randomize: true,
            discount: default_lock_discount(),
        }
    }
}

impl LockConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.depth < 1 {
            return bad("lock depth must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.slip) {
            return bad(format!("slip {} not in [0, 1)", self.slip));
        }
        if !(self.big_reward > self.small_reward && self.small_reward > 0.0) {
            return bad("need big_reward > small_reward > 0".into());
        }
        if self.anti_reward > 0.0 {
            return bad("anti_reward must be <= 0".into());
        }
        if self.big_reward > 1.0 || self.anti_reward < -1.0 {
            return bad("lock rewards must lie in [-1, 1]".into());
        }
        Ok(())
    }

    /// Episodes stop at the terminal state or after `2H + 2` steps.
    pub fn episode_horizon(&self) -> usize {
        2 * self.depth + 2
    }
}

/// Index map and hidden structure of a constructed lock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LockLayout {
    pub depth: usize,
    /// `good_action[lock][i]` for good state `i + 1`.
    pub good_action: [Vec<usize>; 2],
    /// Lock whose end pays `big_reward`.
    pub big_lock: usize,
}

impl LockLayout {
    pub const START: usize = 0;

    pub fn n_states(&self) -> usize {
        4 * self.depth + 2
    }

    /// Good state `i` in `1..=H` of `lock`.
    pub fn good(&self, lock: usize, i: usize) -> usize {
        1 + lock * 2 * self.depth + (i - 1)
    }

    /// Dead state `i` in `1..=H` of `lock`.
    pub fn dead(&self, lock: usize, i: usize) -> usize {
        1 + lock * 2 * self.depth + self.depth + (i - 1)
    }

    pub fn terminal(&self) -> usize {
        4 * self.depth + 1
    }

    /// The last good state of `lock`; acting there collects the lock's end reward.
    pub fn lock_end(&self, lock: usize) -> usize {
        self.good(lock, self.depth)
    }

    pub fn is_good(&self, s: usize) -> bool {
        (0..2).any(|l| (1..=self.depth).any(|i| self.good(l, i) == s))
    }

    pub fn is_dead(&self, s: usize) -> bool {
        (0..2).any(|l| (1..=self.depth).any(|i| self.dead(l, i) == s))
    }

    /// Optimal good-action sequence through the big lock, as a full
    /// deterministic action assignment (dead/terminal states get action 0).
    pub fn optimal_actions(&self) -> Vec<usize> {
        let mut actions = vec![0; self.n_states()];
        actions[Self::START] = self.big_lock;
        for lock in 0..2 {
            for i in 1..=self.depth {
                actions[self.good(lock, i)] = self.good_action[lock][i - 1];
            }
        }
        actions
    }
}

/// Bidirectional lock with `4H + 2` states and 2 actions.
pub fn make_bidirectional_lock(cfg: &LockConfig) -> Result<TabularMdp> {
    Ok(make_bidirectional_lock_with_layout(cfg)?.0)
}

pub fn make_bidirectional_lock_with_layout(cfg: &LockConfig) -> Result<(TabularMdp, LockLayout)> {
    cfg.validate()?;
    let h = cfg.depth;
    let p = cfg.slip;
    let (good_action, big_lock) = if cfg.randomize {
        let mut rng = seeded(cfg.env_seed);
        let big = rng.random_range(0..2);
        let ga = [
            (0..h).map(|_| rng.random_range(0..2)).collect(),
            (0..h).map(|_| rng.random_range(0..2)).collect(),
        ];
        (ga, big)
    } else {
        ([vec![0; h], vec![0; h]], 0)
    };
    let layout = LockLayout {
        depth: h,
        good_action,
        big_lock,
    };
    let ns = layout.n_states();
    let na = 2;
    let mut transition = vec![0.0; ns * na * ns];
    let mut reward = vec![0.0; ns * na];
    let mut set = |s: usize, a: usize, next: &[(usize, f64)], r: f64| {
        for &(t, prob) in next {
            transition[(s * na + a) * ns + t] += prob;
        }
        reward[s * na + a] = r;
    };
    let entry_reward = (1.0 - p) * cfg.anti_reward;
    for a in 0..na {
        set(
            LockLayout::START,
            a,
            &[(layout.good(a, 1), 1.0 - p), (layout.dead(a, 1), p)],
            entry_reward,
        );
    }
    for lock in 0..2 {
        for i in 1..=h {
            let g = layout.good(lock, i);
            let d = layout.dead(lock, i);
            if i < h {
                let good = layout.good_action[lock][i - 1];
                for a in 0..na {
                    if a == good {
                        set(
                            g,
                            a,
                            &[(layout.good(lock, i + 1), 1.0 - p), (layout.dead(lock, i + 1), p)],
                            entry_reward,
                        );
                    } else {
                        set(g, a, &[(layout.dead(lock, i + 1), 1.0)], 0.0);
                    }
                    set(d, a, &[(layout.dead(lock, i + 1), 1.0)], 0.0);
                }
            } else {
                let end = if lock == layout.big_lock {
                    cfg.big_reward
                } else {
                    cfg.small_reward
                };
                for a in 0..na {
                    set(g, a, &[(layout.terminal(), 1.0)], end);
                    set(d, a, &[(layout.terminal(), 1.0)], 0.0);
                }
            }
        }
    }
    for a in 0..na {
        set(layout.terminal(), a, &[(layout.terminal(), 1.0)], 0.0);
    }
    let mut initial = vec![0.0; ns];
    initial[LockLayout::START] = 1.0;
    let mdp = TabularMdp::new(ns, na, transition, reward, initial, cfg.discount)?;
    Ok((mdp, layout))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub depth: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self { depth: 8 }
    }
}

impl ChainConfig {
    pub fn discount(&self) -> f64 {
        self.depth as f64 / (self.depth as f64 + 1.0)
    }

    /// Value of always advancing: `gamma^{H+1} / (1 - gamma)`.
    pub fn optimal_value(&self) -> f64 {
        let g = self.discount();
        g.powi(self.depth as i32 + 1) / (1.0 - g)
    }
}

/// Deterministic chain `s_0 ... s_{H+1}` with 4 actions: action 0 advances,
/// the others step back. The only reward is `r(s_{H+1}, a_0) = 1`.
pub fn make_chain_mdp(cfg: &ChainConfig) -> Result<TabularMdp> {
    if cfg.depth < 1 {
        return Err(Error::InvalidConfig("chain depth must be >= 1".into()));
    }
    let ns = cfg.depth + 2;
    let na = 4;
    let last = ns - 1;
    let mut transition = vec![0.0; ns * na * ns];
    let mut reward = vec![0.0; ns * na];
    for s in 0..ns {
        transition[(s * na) * ns + (s + 1).min(last)] = 1.0;
        for a in 1..na {
            transition[(s * na + a) * ns + s.saturating_sub(1)] = 1.0;
        }
    }
    reward[last * na] = 1.0;
    let mut initial = vec![0.0; ns];
    initial[0] = 1.0;
    TabularMdp::new(ns, na, transition, reward, initial, cfg.discount())
}

/// Dirichlet(1) transition rows, Uniform[0, 1] rewards, uniform start, discount 0.9.
pub fn make_random_mdp(n_states: usize, n_actions: usize, rng_seed: u64) -> Result<TabularMdp> {
    if n_states == 0 || n_actions == 0 {
        return Err(Error::InvalidConfig("dimensions must be >= 1".into()));
    }
    let mut rng = seeded(rng_seed);
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        transition.extend(flat_dirichlet(n_states, &mut rng));
    }
    let reward = (0..n_states * n_actions).map(|_| rng.random::<f64>()).collect();
    let initial = vec![1.0 / n_states as f64; n_states];
    TabularMdp::new(n_states, n_actions, transition, reward, initial, 0.9)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{exact_occupancy, mc_occupancy, policy_value, Policy};
    use approx::assert_abs_diff_eq;

    fn reachable_from(mdp: &TabularMdp, start: usize) -> Vec<bool> {
        let mut seen = vec![false; mdp.n_states()];
        let mut stack = vec![start];
        while let Some(s) = stack.pop() {
            if std::mem::replace(&mut seen[s], true) {
                continue;
            }
            for a in 0..mdp.n_actions() {
                for (t, &p) in mdp.transition_row(s, a).iter().enumerate() {
                    if p > 0.0 && !seen[t] {
                        stack.push(t);
                    }
                }
            }
        }
        seen
    }

    #[test]
    fn lock_structure_small() {
        let cfg = LockConfig {
            depth: 2,
            slip: 0.5,
            env_seed: 0,
            ..Default::default()
        };
        let (mdp, layout) = make_bidirectional_lock_with_layout(&cfg).unwrap();
        assert_eq!(mdp.n_states(), 10);
        for s in 0..10 {
            for a in 0..2 {
                assert_abs_diff_eq!(mdp.transition_row(s, a).iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            }
        }
        let positive: Vec<usize> = (0..10)
            .filter(|&s| (0..2).any(|a| mdp.reward(s, a) > 0.0))
            .collect();
        assert_eq!(positive, vec![layout.lock_end(0), layout.lock_end(1)]);
        let ends: Vec<f64> = (0..2).map(|l| mdp.reward(layout.lock_end(l), 0)).collect();
        assert_eq!(ends[layout.big_lock], 1.0);
        assert_eq!(ends[1 - layout.big_lock], 0.1);
    }

    #[test]
    fn dead_chain_is_reward_free_and_inescapable() {
        for seed in 0..5 {
            let cfg = LockConfig {
                depth: 4,
                env_seed: seed,
                ..Default::default()
            };
            let (mdp, layout) = make_bidirectional_lock_with_layout(&cfg).unwrap();
            for lock in 0..2 {
                for i in 1..=4 {
                    let d = layout.dead(lock, i);
                    assert!((0..2).all(|a| mdp.reward(d, a) == 0.0));
                    let reach = reachable_from(&mdp, d);
                    assert!(reach.iter().enumerate().all(|(s, &r)| !r || !layout.is_good(s)));
                }
            }
        }
    }

    #[test]
    fn myopic_greedy_falls_into_dead_chain() {
        let cfg = LockConfig {
            depth: 5,
            env_seed: 3,
            ..Default::default()
        };
        let (mdp, layout) = make_bidirectional_lock_with_layout(&cfg).unwrap();
        for lock in 0..2 {
            for i in 1..5 {
                let s = layout.good(lock, i);
                let myopic = if mdp.reward(s, 0) >= mdp.reward(s, 1) { 0 } else { 1 };
                assert_ne!(myopic, layout.good_action[lock][i - 1]);
                assert_eq!(mdp.transition_row(s, myopic)[layout.dead(lock, i + 1)], 1.0);
            }
        }
    }

    #[test]
    fn deterministic_lock_reaches_big_reward() {
        let cfg = LockConfig {
            depth: 5,
            slip: 0.0,
            env_seed: 12,
            ..Default::default()
        };
        let (mdp, layout) = make_bidirectional_lock_with_layout(&cfg).unwrap();
        let pi = Policy::deterministic(2, &layout.optimal_actions()).unwrap();
        let d = exact_occupancy(&mdp, &pi).unwrap();
        let end = layout.lock_end(layout.big_lock);
        let g = cfg.discount;
        // Step H reaches the end with probability one.
        assert_abs_diff_eq!(d.state_marginal()[end], (1.0 - g) * g.powi(5), epsilon = 1e-12);
    }

    #[test]
    fn fixed_layout_for_debugging() {
        let cfg = LockConfig {
            randomize: false,
            ..Default::default()
        };
        let (_, layout) = make_bidirectional_lock_with_layout(&cfg).unwrap();
        assert_eq!(layout.big_lock, 0);
        assert!(layout.good_action.iter().all(|v| v.iter().all(|&a| a == 0)));
    }

    #[test]
    fn lock_rejects_bad_config() {
        let bad = LockConfig {
            slip: 1.0,
            ..Default::default()
        };
        assert!(make_bidirectional_lock(&bad).is_err());
        let bad = LockConfig {
            small_reward: 2.0,
            ..Default::default()
        };
        assert!(make_bidirectional_lock(&bad).is_err());
        assert!(make_chain_mdp(&ChainConfig { depth: 0 }).is_err());
    }

    #[test]
    fn chain_structure() {
        let cfg = ChainConfig { depth: 8 };
        let mdp = make_chain_mdp(&cfg).unwrap();
        assert_eq!(mdp.discount(), 8.0 / 9.0);
        assert_eq!(mdp.n_states(), 10);
        let uniform = policy_value(&mdp, &Policy::uniform(10, 4)).unwrap();
        assert!(uniform < 0.01);
        let best = policy_value(&mdp, &Policy::deterministic(4, &[0; 10]).unwrap()).unwrap();
        assert_abs_diff_eq!(best, cfg.optimal_value(), epsilon = 1e-10);
    }

    #[test]
    fn chain_optimum_requires_always_advancing() {
        for h in 1..=4usize {
            let cfg = ChainConfig { depth: h };
            let mdp = make_chain_mdp(&cfg).unwrap();
            let ns = h + 2;
            let target = cfg.optimal_value() - 1e-9;
            for code in 0..4usize.pow(ns as u32) {
                let mut c = code;
                let actions: Vec<usize> = (0..ns)
                    .map(|_| {
                        let a = c % 4;
                        c /= 4;
                        a
                    })
                    .collect();
                let j = policy_value(&mdp, &Policy::deterministic(4, &actions).unwrap()).unwrap();
                if j >= target {
                    assert!(actions.iter().all(|&a| a == 0), "{actions:?}");
                }
            }
        }
    }

    #[test]
    fn random_mdp_is_seeded() {
        let a = make_random_mdp(4, 2, 5).unwrap();
        let b = make_random_mdp(4, 2, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, make_random_mdp(4, 2, 6).unwrap());
        for s in 0..4 {
            for act in 0..2 {
                assert_abs_diff_eq!(a.transition_row(s, act).iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn random_mdp_occupancy_matches_rollouts() {
        let mdp = make_random_mdp(4, 2, 5).unwrap();
        let pi = Policy::new(4, 2, vec![0.2, 0.8, 0.5, 0.5, 0.9, 0.1, 0.35, 0.65]).unwrap();
        let exact = exact_occupancy(&mdp, &pi).unwrap();
        let mc = mc_occupancy(&mdp, &pi, 200_000, 1).unwrap();
        assert!(exact.linf_distance(&mc) < 0.01);
    }

    #[test]
    fn json_layout_round_trips() {
        let mdp = make_random_mdp(3, 2, 1).unwrap();
        let text = serde_json::to_string(&mdp.to_json(Some(1))).unwrap();
        let back: crate::mdp::MdpJson = serde_json::from_str(&text).unwrap();
        assert_eq!(back.seed, Some(1));
        assert_eq!(TabularMdp::try_from(back).unwrap(), mdp);
    }
}
