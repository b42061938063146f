//! Exact-gradient projected policy ascent under the direct parameterization
//! `pi(a|s) = theta[s][a]`, for the plain objective and three regularized
//! variants (relative entropy, policy entropy, square-root occupancy).
//!
//! Gradients are partial derivatives with respect to `theta[s][a]` taken
//! as independent coordinates. Only their component in the simplex tangent
//! space (row-centred) matters for projected ascent, because Euclidean
//! projection onto the simplex is invariant to adding a constant to a row.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::mdp::{policy_evaluation, Policy, TabularMdp, OccupancySolver};

/// Lower bound applied after each projection for the regularized objectives,
/// whose gradients involve `1/theta`, `log theta` or `1/sqrt(d)`.
pub const INTERIOR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PgObjective {
    Vanilla,
    Entropy,
    RelEntropy,
    Made,
}

impl PgObjective {
    pub const ALL: [PgObjective; 4] = [
        PgObjective::Vanilla,
        PgObjective::Entropy,
        PgObjective::RelEntropy,
        PgObjective::Made,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PgObjective::Vanilla => "vanilla",
            PgObjective::Entropy => "entropy",
            PgObjective::RelEntropy => "rel_entropy",
            PgObjective::Made => "made",
        }
    }

    pub fn is_regularized(&self) -> bool {
        !matches!(self, PgObjective::Vanilla)
    }
}

impl std::fmt::Display for PgObjective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PgObjective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PgObjective::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown objective `{s}`")))
    }
}

/// Gradient table over `theta[s][a]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGradient {
    pub n_states: usize,
    pub n_actions: usize,
    pub g: Vec<f64>,
}

impl PolicyGradient {
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.g[s * self.n_actions + a]
    }

    /// Component in the simplex tangent space: each row minus its mean.
    pub fn tangent(&self) -> Vec<f64> {
        let mut out = self.g.clone();
        for row in out.chunks_mut(self.n_actions) {
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            for x in row {
                *x -= mean;
            }
        }
        out
    }

    pub fn tangent_inf_norm(&self) -> f64 {
        self.tangent().iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn inf_norm(&self) -> f64 {
        self.g.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

fn require_interior(policy: &Policy) -> Result<()> {
    if policy.is_interior() {
        Ok(())
    } else {
        Err(Error::Domain(
            "entropy-type gradients need a strictly positive policy".into(),
        ))
    }
}

/// `dJ/dtheta[s][a] = d^pi(s) Q^pi(s, a) / (1 - gamma)`.
pub fn grad_vanilla(mdp: &TabularMdp, policy: &Policy) -> Result<PolicyGradient> {
    let solver = OccupancySolver::new(mdp, policy)?;
    let ds = solver.state_occupancy()?;
    let (_, q) = policy_evaluation(mdp, policy)?;
    let scale = 1.0 / (1.0 - mdp.discount());
    let na = mdp.n_actions();
    let g = (0..mdp.n_pairs())
        .map(|i| scale * ds[i / na] * q.q[i])
        .collect();
    Ok(PolicyGradient {
        n_states: mdp.n_states(),
        n_actions: na,
        g,
    })
}

/// Gradient of `J + tau sum_{s,a} log theta[s][a]`.
pub fn grad_rel_entropy(mdp: &TabularMdp, policy: &Policy, tau: f64) -> Result<PolicyGradient> {
    let mut grad = grad_vanilla(mdp, policy)?;
    if tau == 0.0 {
        return Ok(grad);
    }
    require_interior(policy)?;
    for (g, th) in grad.g.iter_mut().zip(policy.as_slice()) {
        *g += tau / th;
    }
    Ok(grad)
}

/// Shared pieces of the occupancy-based regularizer gradients:
/// for each `(s, a)`, the expectation weight `d(s, a) grad log pi(a|s)`,
/// which for the direct parameterization is the state occupancy `d(s)`,
/// and the successor occupancy (steps `t >= 1` after forcing `(s, a)`).
fn regularizer_gradient<F>(mdp: &TabularMdp, policy: &Policy, mut per_pair: F) -> Result<Vec<f64>>
where
    F: FnMut(usize, usize, f64, &[f64], &[f64]) -> f64,
{
    let solver = OccupancySolver::new(mdp, policy)?;
    let d = solver.occupancy()?;
    let ds = d.state_marginal();
    let na = mdp.n_actions();
    let mut out = vec![0.0; mdp.n_pairs()];
    for s in 0..mdp.n_states() {
        if ds[s] == 0.0 {
            continue;
        }
        for a in 0..na {
            let succ = solver.successor_occupancy(s, a)?;
            out[s * na + a] = ds[s] * per_pair(s, a, ds[s], &succ, d.as_slice());
        }
    }
    Ok(out)
}

/// Gradient of the policy-entropy regularizer
/// `-(1 - gamma)^{-1} E_{d^pi}[log pi(a|s)]`, assembled as
/// `E_{(s,a) ~ d}[grad log pi(a|s) ((1-gamma)^{-1} <d'_{s,a}, -log pi> - log pi(a|s))] / (1 - gamma)`
/// where `d'_{s,a}` is the successor occupancy of `(s, a)`. Exact on the
/// simplex tangent space (it omits the row-constant `E[grad log pi]` term).
pub fn entropy_regularizer_grad(mdp: &TabularMdp, policy: &Policy) -> Result<Vec<f64>> {
    require_interior(policy)?;
    let scale = 1.0 / (1.0 - mdp.discount());
    let neg_log: Vec<f64> = policy.as_slice().iter().map(|p| -p.ln()).collect();
    let na = mdp.n_actions();
    regularizer_gradient(mdp, policy, |s, a, _, succ, _| {
        let inner: f64 = succ.iter().zip(&neg_log).map(|(x, y)| x * y).sum();
        scale * (scale * inner + neg_log[s * na + a])
    })
}

/// Gradient of `J - tau (1 - gamma)^{-1} E_{d^pi}[log pi]`.
pub fn grad_entropy(mdp: &TabularMdp, policy: &Policy, tau: f64) -> Result<PolicyGradient> {
    let mut grad = grad_vanilla(mdp, policy)?;
    if tau == 0.0 {
        return Ok(grad);
    }
    let reg = entropy_regularizer_grad(mdp, policy)?;
    for (g, r) in grad.g.iter_mut().zip(reg) {
        *g += tau * r;
    }
    Ok(grad)
}

/// Gradient of `R = sum_{s,a} sqrt(d^pi(s, a))`:
/// `1/2 E_{(s,a) ~ d}[grad log pi(a|s) ((1-gamma)^{-1} <d'_{s,a}, 1/sqrt(d)> + 1/sqrt(d(s,a)))]`.
pub fn sqrt_occupancy_regularizer_grad(mdp: &TabularMdp, policy: &Policy) -> Result<Vec<f64>> {
    let scale = 1.0 / (1.0 - mdp.discount());
    let na = mdp.n_actions();
    regularizer_gradient(mdp, policy, |s, a, _, succ, d| {
        let inner: f64 = succ
            .iter()
            .zip(d)
            .filter(|(x, _)| **x > 0.0)
            .map(|(x, y)| x / y.sqrt())
            .sum();
        0.5 * (scale * inner + 1.0 / d[s * na + a].sqrt())
    })
}

/// Gradient of `J + sign tau sum_{s,a} sqrt(d^pi(s, a))`.
pub fn grad_made(mdp: &TabularMdp, policy: &Policy, tau: f64, sign: f64) -> Result<PolicyGradient> {
    let mut grad = grad_vanilla(mdp, policy)?;
    if tau == 0.0 {
        return Ok(grad);
    }
    let reg = sqrt_occupancy_regularizer_grad(mdp, policy)?;
    for (g, r) in grad.g.iter_mut().zip(reg) {
        *g += sign * tau * r;
    }
    Ok(grad)
}

/// Euclidean projection onto `{x >= 0, sum x = 1}` (sort and threshold).
pub fn simplex_project(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut threshold = 0.0;
    for (j, &x) in u.iter().enumerate() {
        cumsum += x;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if x - t > 0.0 {
            threshold = t;
        }
    }
    v.iter().map(|x| (x - threshold).max(0.0)).collect()
}

fn default_tau0() -> f64 {
    0.1
}
fn default_sign() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgConfig {
    pub objective: PgObjective,
    pub step_size: f64,
    pub iters: usize,
    /// `tau_k = tau0 / sqrt(k)` for `k = 1, 2, ...`.
    #[serde(default = "default_tau0")]
    pub tau0: f64,
    /// Sign of the square-root occupancy regularizer (`+1` rewards spread).
    #[serde(default = "default_sign")]
    pub made_sign: f64,
    /// Uniform when absent.
    #[serde(default)]
    pub init_policy: Option<Policy>,
    /// Keep a policy snapshot every this many iterations (0: final only).
    #[serde(default)]
    pub snapshot_every: usize,
}

impl PgConfig {
    pub fn new(objective: PgObjective, step_size: f64, iters: usize) -> Self {
        Self {
            objective,
            step_size,
            iters,
            tau0: default_tau0(),
            made_sign: default_sign(),
            init_policy: None,
            snapshot_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) {
            return Err(Error::InvalidConfig("step size must be > 0".into()));
        }
        if !(self.tau0 >= 0.0) {
            return Err(Error::InvalidConfig("tau0 must be >= 0".into()));
        }
        if self.made_sign != 1.0 && self.made_sign != -1.0 {
            return Err(Error::InvalidConfig("made_sign must be +1 or -1".into()));
        }
        Ok(())
    }

    pub fn tau(&self, k: usize) -> f64 {
        self.tau0 / (k as f64).sqrt()
    }
}

pub fn objective_gradient(
    mdp: &TabularMdp,
    policy: &Policy,
    objective: PgObjective,
    tau: f64,
    made_sign: f64,
) -> Result<PolicyGradient> {
    match objective {
        PgObjective::Vanilla => grad_vanilla(mdp, policy),
        PgObjective::Entropy => grad_entropy(mdp, policy, tau),
        PgObjective::RelEntropy => grad_rel_entropy(mdp, policy, tau),
        PgObjective::Made => grad_made(mdp, policy, tau, made_sign),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgStep {
    pub iter: usize,
    /// Extrinsic value of the policy after this iteration's update.
    pub j: f64,
    /// Tangent-space sup norm of the gradient used in this iteration.
    pub grad_inf_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgTrajectory {
    pub objective: PgObjective,
    pub step_size: f64,
    pub initial_j: f64,
    pub steps: Vec<PgStep>,
    pub snapshots: Vec<(usize, Policy)>,
    pub final_policy: Policy,
}

impl PgTrajectory {
    /// First iteration whose post-update value reaches `target`.
    pub fn iters_to_reach(&self, target: f64) -> Option<usize> {
        self.steps.iter().find(|s| s.j >= target).map(|s| s.iter)
    }

    pub fn final_j(&self) -> f64 {
        self.steps.last().map_or(self.initial_j, |s| s.j)
    }
}

fn value(mdp: &TabularMdp, policy: &Policy) -> Result<f64> {
    crate::mdp::policy_value(mdp, policy)
}

/// Projected gradient ascent, row by row, with the temperature schedule
/// advanced once per iteration.
pub fn pg_run(mdp: &TabularMdp, cfg: &PgConfig) -> Result<PgTrajectory> {
    cfg.validate()?;
    let ns = mdp.n_states();
    let na = mdp.n_actions();
    let mut policy = cfg
        .init_policy
        .clone()
        .unwrap_or_else(|| Policy::uniform(ns, na));
    check_dim("initial policy states", ns, policy.n_states())?;
    check_dim("initial policy actions", na, policy.n_actions())?;
    let initial_j = value(mdp, &policy)?;
    let mut steps = Vec::with_capacity(cfg.iters);
    let mut snapshots = Vec::new();
    for k in 1..=cfg.iters {
        let grad = objective_gradient(mdp, &policy, cfg.objective, cfg.tau(k), cfg.made_sign)?;
        let mut theta = Vec::with_capacity(ns * na);
        for s in 0..ns {
            let moved: Vec<f64> = policy
                .row(s)
                .iter()
                .zip(&grad.g[s * na..(s + 1) * na])
                .map(|(t, g)| t + cfg.step_size * g)
                .collect();
            let mut row = simplex_project(&moved);
            if cfg.objective.is_regularized() {
                for x in &mut row {
                    *x = x.max(INTERIOR_FLOOR);
                }
            }
            let total: f64 = row.iter().sum();
            theta.extend(row.into_iter().map(|x| x / total));
        }
        policy = Policy::new(ns, na, theta)?;
        steps.push(PgStep {
            iter: k,
            j: value(mdp, &policy)?,
            grad_inf_norm: grad.tangent_inf_norm(),
        });
        if cfg.snapshot_every > 0 && k % cfg.snapshot_every == 0 {
            snapshots.push((k, policy.clone()));
        }
    }
    Ok(PgTrajectory {
        objective: cfg.objective,
        step_size: cfg.step_size,
        initial_j,
        steps,
        snapshots,
        final_policy: policy,
    })
}
