//! Independent cross-checks for the closed forms: finite differences for
//! the policy gradients, sampled rollouts for occupancies, and plain
//! projected-gradient ascent for the regularizer maximizer.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::{exact_occupancy, mc_occupancy, policy_value, Policy, TabularMdp};
use crate::policy_grad::{objective_gradient, simplex_project, PgObjective};
use crate::sampling::flat_dirichlet;

/// Random policy whose rows are Dirichlet draws mixed with the uniform row,
/// so every entry is at least `floor / A`.
pub fn random_interior_policy<R: Rng + ?Sized>(
    n_states: usize,
    n_actions: usize,
    floor: f64,
    rng: &mut R,
) -> Result<Policy> {
    let mut probs = Vec::with_capacity(n_states * n_actions);
    for _ in 0..n_states {
        let row = flat_dirichlet(n_actions, rng);
        probs.extend(row.into_iter().map(|p| (1.0 - floor) * p + floor / n_actions as f64));
    }
    Policy::new(n_states, n_actions, probs)
}

/// Scalar objective whose gradient `objective_gradient` returns.
pub fn objective_value(
    mdp: &TabularMdp,
    policy: &Policy,
    objective: PgObjective,
    tau: f64,
    made_sign: f64,
) -> Result<f64> {
    let j = policy_value(mdp, policy)?;
    if tau == 0.0 {
        return Ok(j);
    }
    Ok(match objective {
        PgObjective::Vanilla => j,
        PgObjective::RelEntropy => j + tau * policy.as_slice().iter().map(|p| p.ln()).sum::<f64>(),
        PgObjective::Entropy => {
            let d = exact_occupancy(mdp, policy)?;
            let e: f64 = d
                .as_slice()
                .iter()
                .zip(policy.as_slice())
                .filter(|(x, _)| **x > 0.0)
                .map(|(x, p)| x * p.ln())
                .sum();
            j - tau * e / (1.0 - mdp.discount())
        }
        PgObjective::Made => {
            let d = exact_occupancy(mdp, policy)?;
            j + made_sign * tau * d.as_slice().iter().map(|x| x.sqrt()).sum::<f64>()
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FdReport {
    /// `max |fd - analytic| / max |analytic|` over tangent directions.
    pub rel_error: f64,
    pub max_abs_error: f64,
    pub analytic_norm: f64,
}

/// Compares the tangent component of the analytic gradient with central
/// differences along `e_{s,a} - (1/A) sum_b e_{s,b}`, which keep every row
/// on the simplex.
pub fn fd_check_gradient(
    mdp: &TabularMdp,
    policy: &Policy,
    objective: PgObjective,
    tau: f64,
    made_sign: f64,
    h: f64,
) -> Result<FdReport> {
    let na = policy.n_actions();
    let grad = objective_gradient(mdp, policy, objective, tau, made_sign)?;
    let tangent = grad.tangent();
    let base = policy.as_slice();
    let mut max_abs = 0.0f64;
    for s in 0..policy.n_states() {
        for a in 0..na {
            let shifted = |sign: f64| -> Result<f64> {
                let mut theta = base.to_vec();
                for b in 0..na {
                    let e = if a == b { 1.0 } else { 0.0 } - 1.0 / na as f64;
                    theta[s * na + b] += sign * h * e;
                }
                let pi = Policy::new(policy.n_states(), na, theta)?;
                objective_value(mdp, &pi, objective, tau, made_sign)
            };
            let fd = (shifted(1.0)? - shifted(-1.0)?) / (2.0 * h);
            // <g, e_{s,a} - mean> equals the row-centred gradient entry.
            max_abs = max_abs.max((fd - tangent[s * na + a]).abs());
        }
    }
    let norm = tangent.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(FdReport {
        rel_error: max_abs / norm.max(1e-12),
        max_abs_error: max_abs,
        analytic_norm: norm,
    })
}

/// Sup-norm distance between the exact occupancy and a rollout estimate.
pub fn occupancy_mc_gap(
    mdp: &TabularMdp,
    policy: &Policy,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let exact = exact_occupancy(mdp, policy)?;
    let mc = mc_occupancy(mdp, policy, samples, seed)?;
    Ok(exact.linf_distance(&mc))
}

/// Maximizes `sum sqrt(d / rho)` over the simplex by projected gradient
/// ascent with backtracking, without using the closed-form maximizer.
pub fn pga_regularizer_argmax(rho: &[f64], max_iters: usize, tol: f64) -> Result<Vec<f64>> {
    if rho.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Domain("policy cover has a zero entry".into()));
    }
    let n = rho.len();
    let f = |d: &[f64]| -> f64 { d.iter().zip(rho).map(|(x, r)| (x.max(0.0) / r).sqrt()).sum() };
    let mut d = vec![1.0 / n as f64; n];
    let mut step = 1e-2;
    for _ in 0..max_iters {
        let grad: Vec<f64> = d
            .iter()
            .zip(rho)
            .map(|(x, r)| 0.5 / (x.max(1e-300) * r).sqrt())
            .collect();
        let current = f(&d);
        let mut next;
        loop {
            let moved: Vec<f64> = d.iter().zip(&grad).map(|(x, g)| x + step * g).collect();
            next = simplex_project(&moved);
            if f(&next) >= current || step < 1e-20 {
                break;
            }
            step *= 0.5;
        }
        let change: f64 = next.iter().zip(&d).map(|(a, b)| (a - b).abs()).sum();
        d = next;
        if change < tol {
            break;
        }
        step *= 1.5;
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::make_random_mdp;
    use crate::sampling::seeded;

    #[test]
    fn interior_policy_respects_floor() {
        let mut rng = seeded(1);
        let pi = random_interior_policy(5, 3, 0.3, &mut rng).unwrap();
        assert!(pi.as_slice().iter().all(|&p| p >= 0.1 - 1e-15));
    }

    #[test]
    fn vanilla_fd_on_one_instance() {
        let mdp = make_random_mdp(3, 2, 11).unwrap();
        let pi = random_interior_policy(3, 2, 0.2, &mut seeded(2)).unwrap();
        let r = fd_check_gradient(&mdp, &pi, PgObjective::Vanilla, 0.0, 1.0, 1e-6).unwrap();
        assert!(r.rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn pga_finds_reciprocal_density() {
        let d = pga_regularizer_argmax(&[0.64, 0.16, 0.16, 0.04], 200_000, 1e-15).unwrap();
        let expected = [0.04, 0.16, 0.16, 0.64];
        let l1: f64 = d.iter().zip(expected).map(|(a, b)| (a - b).abs()).sum();
        assert!(l1 < 1e-6, "{d:?}");
    }
}
