//! Mixture meta-algorithm for the adaptively regularized objective
//! `L_k(d) = J(d) + tau_k R_lambda(d; rho_cov^k)`, where
//! `R_lambda(d) = sum sqrt((d + lambda) / (rho_cov + lambda))` and
//! `rho_cov^k` is the uniform average of the first `k` policies' occupancies.
//!
//! Each iteration plans against the linearization of `L_k` at the current
//! mixture density and mixes the planned policy in with weight `eta`.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::mdp::{
    exact_occupancy, mixture_occupancy, value_iteration_plan, Policy, PolicyMixture, TabularMdp,
    VisitationDensity,
};
use crate::sampling::{flat_dirichlet, seeded};

fn default_decay() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaConfig {
    /// Number of outer iterations `K`.
    pub iters: usize,
    /// Mixing rate `eta`.
    pub mix_rate: f64,
    /// Base temperature `tau`; `tau_k = tau / k^c`.
    pub temperature: f64,
    #[serde(default = "default_decay")]
    pub decay_exponent: f64,
    /// Smoothing `lambda` of the regularizer.
    pub smoothing: f64,
    /// Planning accuracy `eps_p` (value units of `J`).
    pub plan_err: f64,
    /// Sup-norm bound `eps_d` on injected density noise.
    pub density_err: f64,
    /// Target gap `eps` the parameters were derived from, if any.
    #[serde(default)]
    pub target_gap: Option<f64>,
}

impl MetaConfig {
    /// Parameters sufficient for a final gap of `eps` on an `S x A` problem:
    /// `eta = 0.1 eps / beta`, `eps_p = 0.1 eps`, `eps_d = 0.1 eps / beta`,
    /// `tau = 0.1 eps`, `K = ceil(ln(10 B / eps) / eta)`, `c = 2`.
    pub fn for_target_gap(eps: f64, smoothing: f64, n_states: usize, n_actions: usize) -> Result<Self> {
        if !(eps > 0.0 && smoothing > 0.0) {
            return Err(Error::InvalidConfig("eps and lambda must be > 0".into()));
        }
        let c = RegularityConstants::new(n_states, n_actions, smoothing, 0.1 * eps, 2.0);
        let eta = (0.1 * eps / c.beta).min(0.5);
        let iters = ((10.0 * c.bound_b / eps).ln() / eta).ceil().max(1.0) as usize;
        let cfg = Self {
            iters,
            mix_rate: eta,
            temperature: 0.1 * eps,
            decay_exponent: 2.0,
            smoothing,
            plan_err: 0.1 * eps,
            density_err: 0.1 * eps / c.beta,
            target_gap: Some(eps),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.iters == 0 {
            return bad("iters must be >= 1");
        }
        if !(self.mix_rate > 0.0 && self.mix_rate < 1.0) {
            return bad("mix_rate must lie in (0, 1)");
        }
        if !(self.temperature > 0.0 && self.temperature < 1.0) {
            return bad("temperature must lie in (0, 1)");
        }
        if !(self.decay_exponent > 0.0) {
            return bad("decay_exponent must be > 0");
        }
        if !(self.smoothing > 0.0) {
            return bad("smoothing must be > 0");
        }
        if !(self.plan_err > 0.0) {
            return bad("plan_err must be > 0");
        }
        if !(self.density_err >= 0.0 && self.density_err < self.smoothing) {
            return bad("density_err must lie in [0, smoothing)");
        }
        Ok(())
    }

    pub fn tau(&self, k: usize) -> f64 {
        self.temperature / (k as f64).powf(self.decay_exponent)
    }

    pub fn constants(&self, n_states: usize, n_actions: usize) -> RegularityConstants {
        RegularityConstants::new(
            n_states,
            n_actions,
            self.smoothing,
            self.temperature,
            self.decay_exponent,
        )
    }

    /// Value-iteration residual that makes the greedy policy `eps_p`-optimal.
    pub fn plan_tol(&self, discount: f64) -> f64 {
        if discount == 0.0 {
            return self.plan_err;
        }
        self.plan_err * (1.0 - discount) / (2.0 * discount)
    }
}

/// Smoothness, boundedness and drift constants of `L_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegularityConstants {
    pub beta: f64,
    pub bound_b: f64,
    pub xi: f64,
    pub n_pairs: usize,
    pub smoothing: f64,
    pub temperature: f64,
    pub decay_exponent: f64,
}

impl RegularityConstants {
    pub fn new(n_states: usize, n_actions: usize, smoothing: f64, temperature: f64, c: f64) -> Self {
        let sa = (n_states * n_actions) as f64;
        let root = ((1.0 + smoothing) / smoothing).sqrt();
        Self {
            beta: 1.0 / (4.0 * smoothing * smoothing),
            bound_b: sa * (1.0 + root),
            xi: PI * PI * sa / 6.0 * root,
            n_pairs: n_states * n_actions,
            smoothing,
            temperature,
            decay_exponent: c,
        }
    }

    /// `delta_k = S A tau / (k + 1)^c * sqrt((1 + lambda) / lambda)`.
    pub fn delta(&self, k: usize) -> f64 {
        let root = ((1.0 + self.smoothing) / self.smoothing).sqrt();
        self.n_pairs as f64 * self.temperature / ((k + 1) as f64).powf(self.decay_exponent) * root
    }

    /// `sum_{i=0}^{k} (1 - eta)^i delta_{k-i}` for `k = 0..=k_max`.
    pub fn accumulated_drift(&self, eta: f64, k_max: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(k_max + 1);
        let mut acc = 0.0;
        for k in 0..=k_max {
            acc = self.delta(k) + (1.0 - eta) * acc;
            out.push(acc);
        }
        out
    }

    /// Per-iteration slack `delta_k + eta eps_p + 2 eta beta eps_d + 4 eta^2 beta`.
    pub fn step_slack(&self, k: usize, eta: f64, plan_err: f64, density_err: f64) -> f64 {
        self.delta(k)
            + eta * plan_err
            + 2.0 * eta * self.beta * density_err
            + 4.0 * eta * eta * self.beta
    }
}

/// Running uniform average of the occupancies of all policies so far.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyCover {
    pub rho: Vec<f64>,
    pub k: usize,
}

impl PolicyCover {
    pub fn new(first: &VisitationDensity) -> Self {
        Self {
            rho: first.as_slice().to_vec(),
            k: 1,
        }
    }

    pub fn from_table(rho: Vec<f64>) -> Result<Self> {
        let total: f64 = rho.iter().sum();
        if rho.iter().any(|x| !(*x >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution("policy cover".into()));
        }
        Ok(Self { rho, k: 1 })
    }

    pub fn push(&mut self, d: &VisitationDensity) -> Result<()> {
        check_dim("policy cover", self.rho.len(), d.as_slice().len())?;
        let k = self.k as f64;
        for (r, x) in self.rho.iter_mut().zip(d.as_slice()) {
            *r = (k * *r + x) / (k + 1.0);
        }
        self.k += 1;
        Ok(())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rho
    }
}

/// `R_lambda(d) = sum sqrt((d + lambda) / (rho + lambda))`.
pub fn smoothed_regularizer(d: &[f64], rho: &[f64], lambda: f64) -> f64 {
    d.iter()
        .zip(rho)
        .map(|(x, r)| ((x + lambda) / (r + lambda)).sqrt())
        .sum()
}

/// `dR_lambda / dd = 1 / (2 sqrt((d + lambda)(rho + lambda)))`.
pub fn regularizer_grad(d: &[f64], rho: &[f64], lambda: f64) -> Vec<f64> {
    d.iter()
        .zip(rho)
        .map(|(x, r)| 0.5 / ((x + lambda) * (r + lambda)).sqrt())
        .collect()
}

/// Diagonal of the Hessian of `tau_k R_lambda`.
pub fn regularizer_hessian_diag(d: &[f64], rho: &[f64], lambda: f64, tau_k: f64) -> Vec<f64> {
    d.iter()
        .zip(rho)
        .map(|(x, r)| -0.25 * tau_k / ((x + lambda).powf(1.5) * (r + lambda).sqrt()))
        .collect()
}

/// `r_k = r + (1 - gamma) tau_k dR_lambda/dd` evaluated at `d_hat`.
pub fn meta_reward(
    mdp: &TabularMdp,
    d_hat: &[f64],
    rho: &[f64],
    tau_k: f64,
    lambda: f64,
) -> Result<Vec<f64>> {
    check_dim("density estimate", mdp.n_pairs(), d_hat.len())?;
    check_dim("policy cover", mdp.n_pairs(), rho.len())?;
    let scale = (1.0 - mdp.discount()) * tau_k;
    Ok(mdp
        .rewards()
        .iter()
        .zip(regularizer_grad(d_hat, rho, lambda))
        .map(|(r, g)| r + scale * g)
        .collect())
}

/// `L_k(d) = (1 - gamma)^{-1} <d, r> + tau_k R_lambda(d)`.
pub fn regularized_objective(mdp: &TabularMdp, d: &[f64], rho: &[f64], tau_k: f64, lambda: f64) -> f64 {
    let j: f64 = d.iter().zip(mdp.rewards()).map(|(x, r)| x * r).sum::<f64>() / (1.0 - mdp.discount());
    j + tau_k * smoothed_regularizer(d, rho, lambda)
}

/// Gradient of [`regularized_objective`] in `d`.
pub fn objective_grad(mdp: &TabularMdp, d: &[f64], rho: &[f64], tau_k: f64, lambda: f64) -> Vec<f64> {
    let scale = 1.0 / (1.0 - mdp.discount());
    mdp.rewards()
        .iter()
        .zip(regularizer_grad(d, rho, lambda))
        .map(|(r, g)| scale * r + tau_k * g)
        .collect()
}

/// Maximizer of `sum sqrt(d / rho)` over the simplex: `d` proportional to `1 / rho`.
pub fn regularizer_argmax(rho: &[f64]) -> Result<Vec<f64>> {
    if rho.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Domain("policy cover has a zero entry".into()));
    }
    let inv: Vec<f64> = rho.iter().map(|r| 1.0 / r).collect();
    let total: f64 = inv.iter().sum();
    Ok(inv.into_iter().map(|x| x / total).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetaStep {
    pub k: usize,
    pub tau_k: f64,
    /// Extrinsic value of the mixture entering iteration `k`.
    pub j: f64,
    pub r_lambda: f64,
    pub l_k: f64,
    /// `<grad L_k(d_hat), d^{pi_{k+1}} - d_mix>`: how much the planned
    /// policy improves the linearized objective.
    pub plan_gap: f64,
}

#[derive(Debug, Clone)]
pub struct MetaRun {
    pub mixture: PolicyMixture,
    pub log: Vec<MetaStep>,
    /// Cover after the last iteration's update, i.e. over `pi_1..pi_K`,
    /// which together with `tau_K` defines the final objective `L_K`.
    pub final_cover: PolicyCover,
    pub final_tau: f64,
    pub final_density: VisitationDensity,
}

impl MetaRun {
    /// `L_K` at the returned mixture.
    pub fn final_objective(&self, mdp: &TabularMdp, lambda: f64) -> f64 {
        regularized_objective(
            mdp,
            self.final_density.as_slice(),
            self.final_cover.as_slice(),
            self.final_tau,
            lambda,
        )
    }
}

/// Source of the perturbation added to the mixture density before the
/// reward is formed. Entries are drawn uniformly from `[-eps_d, eps_d]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityNoise {
    pub seed: u64,
}

/// Runs `K` iterations starting from the uniform policy. The returned
/// mixture holds `K + 1` policies.
pub fn run_algorithm1(
    mdp: &TabularMdp,
    cfg: &MetaConfig,
    noise: Option<DensityNoise>,
) -> Result<MetaRun> {
    cfg.validate()?;
    let lambda = cfg.smoothing;
    let plan_tol = cfg.plan_tol(mdp.discount());
    let first = Policy::uniform(mdp.n_states(), mdp.n_actions());
    let first_d = exact_occupancy(mdp, &first)?;
    let mut cover = PolicyCover::new(&first_d);
    let mut mixture = PolicyMixture::initial(first, cfg.mix_rate)?;
    let mut d_mix = first_d;
    let mut rng = noise.map(|n| seeded(n.seed));
    let mut log = Vec::with_capacity(cfg.iters);

    for k in 1..=cfg.iters {
        let tau_k = cfg.tau(k);
        let mut d_hat = d_mix.as_slice().to_vec();
        if let Some(rng) = rng.as_mut() {
            if cfg.density_err > 0.0 {
                for x in &mut d_hat {
                    *x += rng.random_range(-cfg.density_err..=cfg.density_err);
                }
            }
        }
        let reward = meta_reward(mdp, &d_hat, cover.as_slice(), tau_k, lambda)?;
        let planning_mdp = mdp.with_reward(reward)?;
        let (_, next) = value_iteration_plan(&planning_mdp, plan_tol)?;
        let next_d = exact_occupancy(mdp, &next)?;

        let grad = objective_grad(mdp, &d_hat, cover.as_slice(), tau_k, lambda);
        let plan_gap: f64 = grad
            .iter()
            .zip(next_d.as_slice().iter().zip(d_mix.as_slice()))
            .map(|(g, (a, b))| g * (a - b))
            .sum();
        let j = d_mix.dot(mdp.rewards()) / (1.0 - mdp.discount());
        let r_lambda = smoothed_regularizer(d_mix.as_slice(), cover.as_slice(), lambda);
        log.push(MetaStep {
            k,
            tau_k,
            j,
            r_lambda,
            l_k: j + tau_k * r_lambda,
            plan_gap,
        });

        mixture.push(next);
        let mixed: Vec<f64> = d_mix
            .as_slice()
            .iter()
            .zip(next_d.as_slice())
            .map(|(a, b)| (1.0 - cfg.mix_rate) * a + cfg.mix_rate * b)
            .collect();
        d_mix = VisitationDensity::new(mdp.n_states(), mdp.n_actions(), mixed)?;
        if k < cfg.iters {
            cover.push(&next_d)?;
        }
    }
    // Recompute from the components so accumulated rounding in the
    // incremental update does not leak into the reported objective.
    let final_density = mixture_occupancy(mdp, &mixture)?;
    Ok(MetaRun {
        mixture,
        log,
        final_cover: cover,
        final_tau: cfg.tau(cfg.iters),
        final_density,
    })
}

/// Result of a conditional-gradient maximization of `L` over the
/// occupancy polytope.
#[derive(Debug, Clone, PartialEq)]
pub struct FrankWolfeResult {
    pub value: f64,
    /// Duality gap at termination; `value + gap` upper-bounds the maximum.
    pub gap: f64,
    pub iters: usize,
    pub density: Vec<f64>,
}

impl FrankWolfeResult {
    pub fn upper_bound(&self) -> f64 {
        self.value + self.gap
    }
}

/// Conditional gradient on `L(d) = J(d) + tau R_lambda(d; rho)` with exact
/// planning as the linear oracle and golden-section line search.
pub fn frank_wolfe_maximize(
    mdp: &TabularMdp,
    rho: &[f64],
    tau: f64,
    lambda: f64,
    gap_tol: f64,
    max_iters: usize,
) -> Result<FrankWolfeResult> {
    let f = |d: &[f64]| regularized_objective(mdp, d, rho, tau, lambda);
    let vertex = |g: &[f64]| -> Result<Vec<f64>> {
        let reward: Vec<f64> = g.iter().map(|x| (1.0 - mdp.discount()) * x).collect();
        let (_, pi) = value_iteration_plan(&mdp.with_reward(reward)?, 1e-13)?;
        Ok(exact_occupancy(mdp, &pi)?.into_vec())
    };
    let uniform = Policy::uniform(mdp.n_states(), mdp.n_actions());
    let mut d = exact_occupancy(mdp, &uniform)?.into_vec();
    let mut gap = f64::INFINITY;
    let mut iters = 0;
    while iters < max_iters {
        let g = objective_grad(mdp, &d, rho, tau, lambda);
        let v = vertex(&g)?;
        gap = g.iter().zip(v.iter().zip(&d)).map(|(g, (a, b))| g * (a - b)).sum();
        if gap <= gap_tol {
            break;
        }
        let point = |t: f64| -> Vec<f64> { d.iter().zip(&v).map(|(a, b)| a + t * (b - a)).collect() };
        let step = golden_section_max(|t| f(&point(t)), 0.0, 1.0, 1e-12);
        d = point(step);
        iters += 1;
    }
    Ok(FrankWolfeResult {
        value: f(&d),
        gap,
        iters,
        density: d,
    })
}

fn golden_section_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        }
    }
    let mid = 0.5 * (lo + hi);
    // The endpoints are often optimal for near-linear objectives.
    [mid, 0.0, 1.0]
        .into_iter()
        .max_by(|a, b| f(*a).total_cmp(&f(*b)))
        .unwrap_or(mid)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClaimOutcome {
    pub claim: &'static str,
    pub passed: bool,
    /// Largest violation margin seen (positive means violated).
    pub worst_margin: f64,
    pub witness: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityReport {
    pub constants: RegularityConstants,
    pub trials: usize,
    pub claims: Vec<ClaimOutcome>,
}

impl RegularityReport {
    pub fn passed(&self) -> bool {
        self.claims.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularityCheckConfig {
    pub n_states: usize,
    pub n_actions: usize,
    pub smoothing: f64,
    pub temperature: f64,
    pub decay_exponent: f64,
    pub mix_rate: f64,
    pub trials: usize,
    /// Largest `k` for the accumulated-drift claim.
    pub drift_horizon: usize,
    pub seed: u64,
}

struct Claim {
    name: &'static str,
    worst: f64,
    witness: Option<String>,
}

impl Claim {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            worst: f64::NEG_INFINITY,
            witness: None,
        }
    }

    /// Records `margin` (violation when positive) with a lazily built witness.
    fn observe(&mut self, margin: f64, witness: impl FnOnce() -> String) {
        if margin > self.worst {
            self.worst = margin;
            if margin > 0.0 {
                self.witness = Some(witness());
            }
        }
    }

    fn finish(self) -> ClaimOutcome {
        ClaimOutcome {
            claim: self.name,
            passed: !(self.worst > 0.0),
            worst_margin: self.worst,
            witness: self.witness,
        }
    }
}

/// Checks concavity, the Hessian bound, boundedness and the drift bound of
/// `L_k(d) = <d, r> + tau_k R_lambda(d)` on random densities, covers,
/// rewards `r` in `[0, 1]` and iteration indices.
pub fn regularity_check(cfg: &RegularityCheckConfig) -> Result<RegularityReport> {
    if !(cfg.smoothing > 0.0) {
        return Err(Error::InvalidConfig("smoothing must be > 0".into()));
    }
    if cfg.n_states == 0 || cfg.n_actions == 0 || cfg.trials == 0 {
        return Err(Error::InvalidConfig("empty regularity check".into()));
    }
    let consts = RegularityConstants::new(
        cfg.n_states,
        cfg.n_actions,
        cfg.smoothing,
        cfg.temperature,
        cfg.decay_exponent,
    );
    let n = consts.n_pairs;
    let lambda = cfg.smoothing;
    let mut rng = seeded(cfg.seed);
    let mut concave = Claim::new("concavity");
    let mut smooth = Claim::new("hessian_bound");
    let mut bounded = Claim::new("boundedness");
    let mut drift = Claim::new("drift");

    for trial in 0..cfg.trials {
        let d = flat_dirichlet(n, &mut rng);
        let d2 = flat_dirichlet(n, &mut rng);
        let rho = flat_dirichlet(n, &mut rng);
        let r: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let k = rng.random_range(1..=1000usize);
        let tau_k = cfg.temperature / (k as f64).powf(cfg.decay_exponent);
        let l = |x: &[f64]| -> f64 {
            x.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>()
                + tau_k * smoothed_regularizer(x, &rho, lambda)
        };

        let alpha: f64 = rng.random();
        let mid: Vec<f64> = d.iter().zip(&d2).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
        let margin = alpha * l(&d) + (1.0 - alpha) * l(&d2) - l(&mid) - 1e-9;
        concave.observe(margin, || format!("trial {trial}, k {k}, alpha {alpha}"));

        for (i, h) in regularizer_hessian_diag(&d, &rho, lambda, tau_k).into_iter().enumerate() {
            let margin = (-consts.beta - h).max(h);
            smooth.observe(margin, || format!("trial {trial}, pair {i}, hessian {h}"));
        }

        let value = l(&d);
        let grad_sup = r
            .iter()
            .zip(regularizer_grad(&d, &rho, lambda))
            .map(|(a, g)| (a + tau_k * g).abs())
            .fold(0.0, f64::max);
        let margin = value.max(grad_sup) - consts.bound_b;
        bounded.observe(margin, || {
            format!("trial {trial}, L = {value}, grad sup = {grad_sup}")
        });
    }

    let bound = cfg.temperature * consts.xi;
    for (k, s) in consts
        .accumulated_drift(cfg.mix_rate, cfg.drift_horizon)
        .into_iter()
        .enumerate()
    {
        drift.observe(s - bound, || format!("k {k}: drift {s} > tau xi {bound}"));
    }

    Ok(RegularityReport {
        constants: consts,
        trials: cfg.trials,
        claims: vec![concave.finish(), smooth.finish(), bounded.finish(), drift.finish()],
    })
}
