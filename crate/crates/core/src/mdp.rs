//! Exact finite-MDP machinery: occupancy measures, values, planning and
//! policy mixtures.
//!
//! Tables are stored flat and row-major: `transition[(s * A + a) * S + s']`,
//! `reward[s * A + a]`, `policy[s * A + a]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::sampling::{sample_index, seeded, Rng64};

pub const DEFAULT_TOL: f64 = 1e-10;
const STOCHASTIC_TOL: f64 = 1e-12;
const DENSITY_TOL: f64 = 1e-9;
const RESIDUAL_TOL: f64 = 1e-10;

fn check_simplex(what: &str, row: &[f64], tol: f64) -> Result<()> {
    if let Some(x) = row.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidDistribution(format!(
            "{what}: entry {x} is negative or not finite"
        )));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(Error::InvalidDistribution(format!(
            "{what}: sums to {sum}"
        )));
    }
    Ok(())
}

/// A finite discounted MDP with an explicit transition tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    initial: Vec<f64>,
    discount: f64,
}

impl TabularMdp {
    /// Validates every structural invariant, including rewards in `[-1, 1]`.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        initial: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        let mdp = Self::build(n_states, n_actions, transition, reward, initial, discount)?;
        if let Some(r) = mdp.reward.iter().find(|r| r.abs() > 1.0) {
            return Err(Error::InvalidConfig(format!("reward {r} outside [-1, 1]")));
        }
        Ok(mdp)
    }

    fn build(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        initial: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidConfig("empty state or action space".into()));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidConfig(format!(
                "discount {discount} not in [0, 1)"
            )));
        }
        check_dim("transition", n_states * n_actions * n_states, transition.len())?;
        check_dim("reward", n_states * n_actions, reward.len())?;
        check_dim("initial", n_states, initial.len())?;
        for (i, row) in transition.chunks(n_states).enumerate() {
            check_simplex(
                &format!("P[{}][{}]", i / n_actions, i % n_actions),
                row,
                STOCHASTIC_TOL,
            )?;
        }
        check_simplex("initial distribution", &initial, STOCHASTIC_TOL)?;
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidConfig("non-finite reward".into()));
        }
        Ok(Self {
            n_states,
            n_actions,
            transition,
            reward,
            initial,
            discount,
        })
    }

    /// Same dynamics with a replacement reward table. Augmented rewards
    /// (extrinsic plus bonus) may leave `[-1, 1]`; only finiteness is checked.
    pub fn with_reward(&self, reward: Vec<f64>) -> Result<Self> {
        check_dim("reward", self.n_states * self.n_actions, reward.len())?;
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidConfig("non-finite reward".into()));
        }
        Ok(Self {
            reward,
            ..self.clone()
        })
    }

    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        Self::build(
            self.n_states,
            self.n_actions,
            self.transition.clone(),
            self.reward.clone(),
            self.initial.clone(),
            discount,
        )
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn transition(&self) -> &[f64] {
        &self.transition
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn to_json(&self, seed: Option<u64>) -> MdpJson {
        MdpJson {
            n_states: self.n_states,
            n_actions: self.n_actions,
            discount: self.discount,
            transition: self.transition.clone(),
            reward: self.reward.clone(),
            initial: self.initial.clone(),
            seed,
        }
    }

    fn check_policy(&self, policy: &Policy) -> Result<()> {
        check_dim("policy states", self.n_states, policy.n_states)?;
        check_dim("policy actions", self.n_actions, policy.n_actions)
    }

    fn check_state(&self, s: usize) -> Result<()> {
        if s < self.n_states {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                what: "state",
                index: s,
                size: self.n_states,
            })
        }
    }

    fn check_action(&self, a: usize) -> Result<()> {
        if a < self.n_actions {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                what: "action",
                index: a,
                size: self.n_actions,
            })
        }
    }

    /// State-to-state kernel under `policy`: `P_pi[s][s']`.
    fn policy_kernel(&self, policy: &Policy) -> DMatrix<f64> {
        let n = self.n_states;
        DMatrix::from_fn(n, n, |s, t| {
            (0..self.n_actions)
                .map(|a| policy.prob(s, a) * self.transition_row(s, a)[t])
                .sum()
        })
    }
}

/// Documented JSON layout for environments: dimensions plus row-major
/// flattened tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpJson {
    pub n_states: usize,
    pub n_actions: usize,
    pub discount: f64,
    /// `P[s][a][s']` flattened row-major.
    pub transition: Vec<f64>,
    /// `r[s][a]` flattened row-major.
    pub reward: Vec<f64>,
    pub initial: Vec<f64>,
    pub seed: Option<u64>,
}

impl TryFrom<MdpJson> for TabularMdp {
    type Error = Error;

    fn try_from(j: MdpJson) -> Result<Self> {
        TabularMdp::new(
            j.n_states,
            j.n_actions,
            j.transition,
            j.reward,
            j.initial,
            j.discount,
        )
    }
}

/// Stochastic action table `pi(a|s)`, one row per state. Also serves as the
/// direct parameterization `theta[s][a] = pi(a|s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        check_dim("policy table", n_states * n_actions, probs.len())?;
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidConfig("empty policy".into()));
        }
        for (s, row) in probs.chunks(n_actions).enumerate() {
            check_simplex(&format!("pi(.|{s})"), row, STOCHASTIC_TOL)?;
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// One action per state, played with probability one.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::OutOfRange {
                    what: "action",
                    index: a,
                    size: n_actions,
                });
            }
            probs[s * n_actions + a] = 1.0;
        }
        Self::new(actions.len(), n_actions, probs)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn is_interior(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }

    /// Most likely action per state (lowest index on ties).
    pub fn greedy_actions(&self) -> Vec<usize> {
        (0..self.n_states).map(|s| argmax(self.row(s))).collect()
    }
}

/// Index of the maximum; the lowest index wins ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Discounted state-action occupancy `d[s][a]`, normalized to sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitationDensity {
    n_states: usize,
    n_actions: usize,
    d: Vec<f64>,
}

impl VisitationDensity {
    pub fn new(n_states: usize, n_actions: usize, d: Vec<f64>) -> Result<Self> {
        check_dim("density table", n_states * n_actions, d.len())?;
        check_simplex("visitation density", &d, DENSITY_TOL)?;
        Ok(Self {
            n_states,
            n_actions,
            d,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let n = n_states * n_actions;
        Self {
            n_states,
            n_actions,
            d: vec![1.0 / n as f64; n],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.d[s * self.n_actions + a]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.d
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.d
    }

    /// Marginal over states, `d(s) = sum_a d(s, a)`.
    pub fn state_marginal(&self) -> Vec<f64> {
        self.d.chunks(self.n_actions).map(|r| r.iter().sum()).collect()
    }

    pub fn dot(&self, table: &[f64]) -> f64 {
        self.d.iter().zip(table).map(|(x, y)| x * y).sum()
    }

    pub fn linf_distance(&self, other: &VisitationDensity) -> f64 {
        self.d
            .iter()
            .zip(&other.d)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }
}

/// A weighted sequence of policies; sampling one policy per episode and
/// following it induces the weighted average of the components' occupancies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyMixture {
    policies: Vec<Policy>,
    weights: Vec<f64>,
    eta: f64,
}

impl PolicyMixture {
    pub fn new(policies: Vec<Policy>, weights: Vec<f64>, eta: f64) -> Result<Self> {
        check_dim("mixture weights", policies.len(), weights.len())?;
        if policies.is_empty() {
            return Err(Error::InvalidConfig("empty mixture".into()));
        }
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::InvalidConfig(format!("mixing rate {eta} not in (0, 1)")));
        }
        check_simplex("mixture weights", &weights, STOCHASTIC_TOL)?;
        Ok(Self {
            policies,
            weights,
            eta,
        })
    }

    /// Single-policy mixture with weight one.
    pub fn initial(policy: Policy, eta: f64) -> Result<Self> {
        Self::new(vec![policy], vec![1.0], eta)
    }

    /// Appends a policy: `w <- ((1 - eta) w, eta)`.
    pub fn push(&mut self, policy: Policy) {
        for w in &mut self.weights {
            *w *= 1.0 - self.eta;
        }
        self.weights.push(self.eta);
        self.policies.push(policy);
    }

    pub fn policies(&self) -> &[Policy] {
        &self.policies
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }
}

/// Mixture weights after `k` policies: `((1-eta)^{k-1}, (1-eta)^{k-2} eta, ..., eta)`.
pub fn geometric_weights(k: usize, eta: f64) -> Vec<f64> {
    let mut w = vec![1.0];
    for _ in 1..k {
        for x in &mut w {
            *x *= 1.0 - eta;
        }
        w.push(eta);
    }
    w
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub n_states: usize,
    pub n_actions: usize,
    pub q: Vec<f64>,
}

impl QTable {
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.q[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.q[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn max_values(&self) -> ValueTable {
        ValueTable(
            (0..self.n_states)
                .map(|s| self.row(s).iter().cloned().fold(f64::NEG_INFINITY, f64::max))
                .collect(),
        )
    }

    /// Greedy deterministic policy, lowest action index on ties.
    pub fn greedy_policy(&self) -> Policy {
        let actions: Vec<usize> = (0..self.n_states).map(|s| argmax(self.row(s))).collect();
        Policy::deterministic(self.n_actions, &actions).expect("argmax is in range")
    }
}

/// LU factorization of `I - gamma P_pi^T`, reusable across initial
/// distributions (the conditional occupancies of every (s, a) share it).
pub struct OccupancySolver<'a> {
    mdp: &'a TabularMdp,
    policy: &'a Policy,
    operator: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl<'a> OccupancySolver<'a> {
    pub fn new(mdp: &'a TabularMdp, policy: &'a Policy) -> Result<Self> {
        mdp.check_policy(policy)?;
        let n = mdp.n_states;
        let operator =
            DMatrix::identity(n, n) - mdp.policy_kernel(policy).transpose() * mdp.discount;
        let lu = operator.clone().lu();
        Ok(Self {
            mdp,
            policy,
            operator,
            lu,
        })
    }

    /// Solves `(I - gamma P_pi^T) x = rhs` and verifies the residual.
    fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let b = DVector::from_column_slice(rhs);
        let x = self
            .lu
            .solve(&b)
            .ok_or_else(|| Error::Solver("singular occupancy system".into()))?;
        let residual = (&self.operator * &x - &b).amax();
        if !(residual <= RESIDUAL_TOL) {
            return Err(Error::Solver(format!("occupancy residual {residual}")));
        }
        Ok(x.iter().map(|v| v.max(0.0)).collect())
    }

    /// State occupancy for an arbitrary (unnormalized) start measure `mu`:
    /// solves `d = (1 - gamma) mu + gamma P_pi^T d`.
    pub fn state_occupancy_from_measure(&self, mu: &[f64]) -> Result<Vec<f64>> {
        check_dim("start measure", self.mdp.n_states, mu.len())?;
        let g = self.mdp.discount;
        let rhs: Vec<f64> = mu.iter().map(|m| (1.0 - g) * m).collect();
        self.solve(&rhs)
    }

    pub fn state_occupancy(&self) -> Result<Vec<f64>> {
        self.state_occupancy_from_measure(self.mdp.initial())
    }

    fn lift(&self, d_states: &[f64]) -> Vec<f64> {
        let na = self.mdp.n_actions;
        let mut d = vec![0.0; self.mdp.n_pairs()];
        for (s, ds) in d_states.iter().enumerate() {
            for a in 0..na {
                d[s * na + a] = ds * self.policy.prob(s, a);
            }
        }
        d
    }

    pub fn occupancy(&self) -> Result<VisitationDensity> {
        let ds = self.state_occupancy()?;
        VisitationDensity::new(self.mdp.n_states, self.mdp.n_actions, self.lift(&ds))
    }

    /// Occupancy over steps `t >= 1` only, when step 0 is forced to
    /// `(s0, a0)`. Sums to `gamma`.
    pub fn successor_occupancy(&self, s0: usize, a0: usize) -> Result<Vec<f64>> {
        self.mdp.check_state(s0)?;
        self.mdp.check_action(a0)?;
        let g = self.mdp.discount;
        let mu: Vec<f64> = self.mdp.transition_row(s0, a0).iter().map(|p| g * p).collect();
        let ds = self.state_occupancy_from_measure(&mu)?;
        Ok(self.lift(&ds))
    }

    pub fn occupancy_from(&self, s0: usize, a0: usize) -> Result<VisitationDensity> {
        let mut d = self.successor_occupancy(s0, a0)?;
        d[s0 * self.mdp.n_actions + a0] += 1.0 - self.mdp.discount;
        VisitationDensity::new(self.mdp.n_states, self.mdp.n_actions, d)
    }
}

/// `d^pi(s, a) = (1 - gamma) sum_t gamma^t P_t(s_t = s, a_t = a)` by direct solve.
pub fn exact_occupancy(mdp: &TabularMdp, policy: &Policy) -> Result<VisitationDensity> {
    OccupancySolver::new(mdp, policy)?.occupancy()
}

/// Occupancy when step 0 is forced to `(s0, a0)` and `policy` is followed afterwards.
pub fn occupancy_from(
    mdp: &TabularMdp,
    policy: &Policy,
    s0: usize,
    a0: usize,
) -> Result<VisitationDensity> {
    OccupancySolver::new(mdp, policy)?.occupancy_from(s0, a0)
}

/// Unbiased Monte-Carlo occupancy estimate: each rollout stops at
/// `T ~ Geometric(1 - gamma)` and records `(s_T, a_T)`.
pub fn mc_occupancy(
    mdp: &TabularMdp,
    policy: &Policy,
    n_rollouts: usize,
    rng_seed: u64,
) -> Result<VisitationDensity> {
    mdp.check_policy(policy)?;
    if n_rollouts == 0 {
        return Err(Error::InvalidConfig("n_rollouts must be >= 1".into()));
    }
    let mut rng: Rng64 = seeded(rng_seed);
    let g = mdp.discount;
    let mut counts = vec![0u64; mdp.n_pairs()];
    for _ in 0..n_rollouts {
        let mut s = sample_index(mdp.initial(), &mut rng);
        loop {
            let a = sample_index(policy.row(s), &mut rng);
            // Stop with probability 1 - gamma at every step.
            if rand::Rng::random::<f64>(&mut rng) >= g {
                counts[s * mdp.n_actions + a] += 1;
                break;
            }
            s = sample_index(mdp.transition_row(s, a), &mut rng);
        }
    }
    let d = counts
        .iter()
        .map(|&c| c as f64 / n_rollouts as f64)
        .collect();
    VisitationDensity::new(mdp.n_states, mdp.n_actions, d)
}

/// `sum_i w_i d^{pi_i}`.
pub fn mixture_occupancy(mdp: &TabularMdp, mix: &PolicyMixture) -> Result<VisitationDensity> {
    let mut d = vec![0.0; mdp.n_pairs()];
    for (policy, w) in mix.policies.iter().zip(&mix.weights) {
        let di = exact_occupancy(mdp, policy)?;
        for (x, y) in d.iter_mut().zip(di.as_slice()) {
            *x += w * y;
        }
    }
    VisitationDensity::new(mdp.n_states, mdp.n_actions, d)
}

/// Exact `V^pi` and `Q^pi` by linear solve.
pub fn policy_evaluation(mdp: &TabularMdp, policy: &Policy) -> Result<(ValueTable, QTable)> {
    mdp.check_policy(policy)?;
    let n = mdp.n_states;
    let na = mdp.n_actions;
    let g = mdp.discount;
    let op = DMatrix::identity(n, n) - mdp.policy_kernel(policy) * g;
    let r_pi = DVector::from_fn(n, |s, _| {
        (0..na).map(|a| policy.prob(s, a) * mdp.reward(s, a)).sum()
    });
    let v = op
        .clone()
        .lu()
        .solve(&r_pi)
        .ok_or_else(|| Error::Solver("singular evaluation system".into()))?;
    let residual = (&op * &v - &r_pi).amax();
    let scale = 1.0 + r_pi.amax() / (1.0 - g);
    if !(residual <= RESIDUAL_TOL * scale) {
        return Err(Error::Solver(format!("evaluation residual {residual}")));
    }
    let v: Vec<f64> = v.iter().cloned().collect();
    let q = q_from_values(mdp, &v);
    Ok((ValueTable(v), q))
}

/// `Q(s, a) = r(s, a) + gamma sum_s' P(s'|s, a) V(s')`.
pub fn q_from_values(mdp: &TabularMdp, v: &[f64]) -> QTable {
    let na = mdp.n_actions;
    let g = mdp.discount;
    let mut q = vec![0.0; mdp.n_pairs()];
    for s in 0..mdp.n_states {
        for a in 0..na {
            let ev: f64 = mdp
                .transition_row(s, a)
                .iter()
                .zip(v)
                .map(|(p, x)| p * x)
                .sum();
            q[s * na + a] = mdp.reward(s, a) + g * ev;
        }
    }
    QTable {
        n_states: mdp.n_states,
        n_actions: na,
        q,
    }
}

/// `J(pi) = (1 - gamma)^{-1} <d^pi, r>`.
pub fn policy_value(mdp: &TabularMdp, policy: &Policy) -> Result<f64> {
    let d = exact_occupancy(mdp, policy)?;
    Ok(d.dot(mdp.rewards()) / (1.0 - mdp.discount))
}

/// Value iteration to Bellman residual `tol`, then the greedy policy
/// (lowest action index on ties). The greedy policy is within
/// `2 gamma tol / (1 - gamma)` of optimal.
pub fn value_iteration_plan(mdp: &TabularMdp, tol: f64) -> Result<(QTable, Policy)> {
    value_iteration_warm(mdp, tol, None)
}

/// [`value_iteration_plan`] started from a previous Q table.
pub fn value_iteration_warm(
    mdp: &TabularMdp,
    tol: f64,
    init: Option<&QTable>,
) -> Result<(QTable, Policy)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!("tolerance {tol} must be > 0")));
    }
    let mut q = match init {
        Some(q0) => {
            check_dim("warm-start Q", mdp.n_pairs(), q0.q.len())?;
            q0.clone()
        }
        None => QTable {
            n_states: mdp.n_states,
            n_actions: mdp.n_actions,
            q: vec![0.0; mdp.n_pairs()],
        },
    };
    loop {
        let v = q.max_values();
        let next = q_from_values(mdp, &v.0);
        let residual = next
            .q
            .iter()
            .zip(&q.q)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        q = next;
        if residual <= tol {
            break;
        }
    }
    // One more backup so the returned table's own residual is <= gamma * tol.
    let v = q.max_values();
    q = q_from_values(mdp, &v.0);
    let policy = q.greedy_policy();
    Ok((q, policy))
}

/// Bellman optimality residual `max |T Q - Q|`.
pub fn bellman_residual(mdp: &TabularMdp, q: &QTable) -> f64 {
    let next = q_from_values(mdp, &q.max_values().0);
    next.q
        .iter()
        .zip(&q.q)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Expected undiscounted return of `horizon` steps from the initial
/// distribution.
pub fn expected_episode_return(mdp: &TabularMdp, policy: &Policy, horizon: usize) -> Result<f64> {
    mdp.check_policy(policy)?;
    let na = mdp.n_actions;
    let mut mu = mdp.initial.clone();
    let mut total = 0.0;
    for _ in 0..horizon {
        let mut next = vec![0.0; mdp.n_states];
        for (s, &m) in mu.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for a in 0..na {
                let w = m * policy.prob(s, a);
                if w == 0.0 {
                    continue;
                }
                total += w * mdp.reward(s, a);
                for (x, p) in next.iter_mut().zip(mdp.transition_row(s, a)) {
                    *x += w * p;
                }
            }
        }
        mu = next;
    }
    Ok(total)
}

/// Best expected undiscounted `horizon`-step return over all (possibly
/// time-dependent) policies, by backward induction.
pub fn optimal_episode_return(mdp: &TabularMdp, horizon: usize) -> f64 {
    let mut v = vec![0.0; mdp.n_states];
    for _ in 0..horizon {
        v = (0..mdp.n_states)
            .map(|s| {
                (0..mdp.n_actions)
                    .map(|a| {
                        mdp.reward(s, a)
                            + mdp.transition_row(s, a).iter().zip(&v).map(|(p, x)| p * x).sum::<f64>()
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
    }
    mdp.initial.iter().zip(&v).map(|(p, x)| p * x).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_chain_mdp, make_random_mdp, ChainConfig};
    use approx::assert_abs_diff_eq;

    fn two_cycle(gamma: f64) -> TabularMdp {
        TabularMdp::new(
            2,
            1,
            vec![0.0, 1.0, 1.0, 0.0],
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            gamma,
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_rows_and_discount() {
        assert!(TabularMdp::new(1, 1, vec![0.9], vec![0.0], vec![1.0], 0.5).is_err());
        assert!(TabularMdp::new(1, 1, vec![1.0], vec![0.0], vec![1.0], 1.0).is_err());
        assert!(TabularMdp::new(1, 1, vec![1.0], vec![1.5], vec![1.0], 0.5).is_err());
        assert!(TabularMdp::new(1, 1, vec![1.0], vec![-1.0], vec![1.0], 0.5).is_ok());
    }

    #[test]
    fn two_state_cycle_occupancy() {
        let mdp = two_cycle(0.5);
        let d = exact_occupancy(&mdp, &Policy::uniform(2, 1)).unwrap();
        assert_abs_diff_eq!(d.get(0, 0), 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.get(1, 0), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn chain_always_advance_tail_mass() {
        let mdp = make_chain_mdp(&ChainConfig { depth: 8 }).unwrap();
        let pi = Policy::deterministic(4, &[0; 10]).unwrap();
        let d = exact_occupancy(&mdp, &pi).unwrap();
        let g: f64 = 8.0 / 9.0;
        assert_abs_diff_eq!(d.get(9, 0), g.powi(9), epsilon = 1e-12);
        assert_abs_diff_eq!(d.get(9, 0), 0.346_439_416_114_618, epsilon = 1e-12);
        let j = policy_value(&mdp, &pi).unwrap();
        assert_abs_diff_eq!(j, g.powi(9) / (1.0 - g), epsilon = 1e-10);
        assert_abs_diff_eq!(j, 3.117_954_745_031_565, epsilon = 1e-10);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mdp = two_cycle(0.5);
        let err = exact_occupancy(&mdp, &Policy::uniform(3, 1)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
        assert!(occupancy_from(&mdp, &Policy::uniform(2, 1), 0, 3).is_err());
    }

    #[test]
    fn conditional_occupancy_step_zero_mass() {
        let mdp = make_random_mdp(5, 2, 3).unwrap();
        let pi = Policy::uniform(5, 2);
        for s in 0..5 {
            for a in 0..2 {
                let d = occupancy_from(&mdp, &pi, s, a).unwrap();
                assert_abs_diff_eq!(d.as_slice().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
                assert!(d.get(s, a) >= 1.0 - mdp.discount() - 1e-15);
            }
        }
        let single = TabularMdp::new(1, 1, vec![1.0], vec![0.5], vec![1.0], 0.7).unwrap();
        let d = occupancy_from(&single, &Policy::uniform(1, 1), 0, 0).unwrap();
        assert_abs_diff_eq!(d.get(0, 0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn conditional_occupancies_recompose_the_occupancy() {
        // d(s, a) = (1 - gamma) rho(s) pi(a|s) + (gamma-shifted successor mass of d)
        // so sum_{s', a'} d(s', a') d_{s', a'} is the occupancy of the
        // "restart from a d-sampled pair" process; it must be a density.
        let mdp = make_random_mdp(5, 2, 3).unwrap();
        let pi = Policy::uniform(5, 2);
        let d = exact_occupancy(&mdp, &pi).unwrap();
        let mut total = vec![0.0; 10];
        for s in 0..5 {
            for a in 0..2 {
                let c = occupancy_from(&mdp, &pi, s, a).unwrap();
                for (t, x) in total.iter_mut().zip(c.as_slice()) {
                    *t += d.get(s, a) * x;
                }
            }
        }
        assert_abs_diff_eq!(total.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mc_occupancy_basics() {
        let mdp = two_cycle(0.5);
        let pi = Policy::uniform(2, 1);
        let one = mc_occupancy(&mdp, &pi, 1, 4).unwrap();
        assert_eq!(one.as_slice().iter().filter(|&&x| x == 1.0).count(), 1);
        let a = mc_occupancy(&mdp, &pi, 5000, 9).unwrap();
        let b = mc_occupancy(&mdp, &pi, 5000, 9).unwrap();
        assert_eq!(a, b);
        assert!(mc_occupancy(&mdp, &pi, 0, 9).is_err());
    }

    #[test]
    fn mc_occupancy_two_cycle_half_million() {
        let mdp = two_cycle(0.5);
        let pi = Policy::uniform(2, 1);
        let exact = exact_occupancy(&mdp, &pi).unwrap();
        let est = mc_occupancy(&mdp, &pi, 500_000, 17).unwrap();
        assert!(exact.linf_distance(&est) < 0.005);
    }

    #[test]
    fn mixture_occupancy_cases() {
        let mdp = make_random_mdp(4, 3, 21).unwrap();
        let p1 = Policy::uniform(4, 3);
        let p2 = Policy::deterministic(3, &[0, 1, 2, 0]).unwrap();
        let p3 = Policy::deterministic(3, &[2, 2, 1, 1]).unwrap();
        let single = PolicyMixture::initial(p2.clone(), 0.5).unwrap();
        assert_eq!(
            mixture_occupancy(&mdp, &single).unwrap(),
            exact_occupancy(&mdp, &p2).unwrap()
        );
        let mut mix = PolicyMixture::initial(p1.clone(), 0.5).unwrap();
        mix.push(p2.clone());
        mix.push(p3.clone());
        assert_eq!(mix.weights(), &[0.25, 0.25, 0.5]);
        assert_eq!(geometric_weights(3, 0.5), vec![0.25, 0.25, 0.5]);
        let dm = mixture_occupancy(&mdp, &mix).unwrap();
        let d1 = exact_occupancy(&mdp, &p1).unwrap();
        let d2 = exact_occupancy(&mdp, &p2).unwrap();
        let d3 = exact_occupancy(&mdp, &p3).unwrap();
        for i in 0..12 {
            let want = 0.25 * d1.as_slice()[i] + 0.25 * d2.as_slice()[i] + 0.5 * d3.as_slice()[i];
            assert_abs_diff_eq!(dm.as_slice()[i], want, epsilon = 1e-14);
        }
        let twin = PolicyMixture::new(vec![p3.clone(), p3.clone()], vec![0.3, 0.7], 0.5).unwrap();
        let dt = mixture_occupancy(&mdp, &twin).unwrap();
        assert!(dt.linf_distance(&d3) < 1e-14);
    }

    #[test]
    fn policy_value_zero_reward_and_evaluation_agree() {
        let mdp = make_random_mdp(6, 3, 11).unwrap();
        let zero = mdp.with_reward(vec![0.0; 18]).unwrap();
        let pi = Policy::uniform(6, 3);
        assert_eq!(policy_value(&zero, &pi).unwrap(), 0.0);
        let (v, _) = policy_evaluation(&mdp, &pi).unwrap();
        let ev: f64 = mdp.initial().iter().zip(&v.0).map(|(p, x)| p * x).sum();
        assert_abs_diff_eq!(policy_value(&mdp, &pi).unwrap(), ev, epsilon = 1e-8);
    }

    #[test]
    fn value_iteration_residual_and_tie_break() {
        let mdp = make_random_mdp(4, 2, 8).unwrap();
        let (q, _) = value_iteration_plan(&mdp, 1e-9).unwrap();
        assert!(bellman_residual(&mdp, &q) <= 1e-9);
        // All-zero rewards: every action ties, lowest index wins.
        let flat = mdp.with_reward(vec![0.0; 8]).unwrap();
        let (_, pi) = value_iteration_plan(&flat, 1e-9).unwrap();
        assert_eq!(pi.greedy_actions(), vec![0; 4]);
        assert!(value_iteration_plan(&mdp, 0.0).is_err());
    }

    #[test]
    fn value_iteration_plays_advance_on_chain() {
        let mdp = make_chain_mdp(&ChainConfig { depth: 8 }).unwrap();
        let (_, pi) = value_iteration_plan(&mdp, 1e-10).unwrap();
        assert_eq!(pi.greedy_actions(), vec![0; 10]);
    }

    #[test]
    fn episode_return_on_chain() {
        let mdp = make_chain_mdp(&ChainConfig { depth: 3 }).unwrap();
        let forward = Policy::deterministic(4, &[0; 5]).unwrap();
        // Reward starts once the last state is reached after 4 moves.
        assert_abs_diff_eq!(expected_episode_return(&mdp, &forward, 6).unwrap(), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(optimal_episode_return(&mdp, 6), 2.0, epsilon = 1e-15);
        assert_eq!(optimal_episode_return(&mdp, 4), 0.0);
        let uniform = Policy::uniform(5, 4);
        assert!(expected_episode_return(&mdp, &uniform, 6).unwrap() < 2.0);
    }
}
