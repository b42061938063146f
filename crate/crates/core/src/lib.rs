//! Tabular exploration laboratory: exact MDP machinery, count-based
//! exploration bonuses, online learners, exact-gradient policy
//! optimization on the simplex, and the mixture meta-algorithm for the
//! adaptively regularized objective `L_k(d) = J(d) + tau_k R(d)`.

pub mod bonuses;
pub mod envs;
pub mod error;
pub mod learners;
pub mod mdp;
pub mod meta;
pub mod oracles;
pub mod policy_grad;
pub mod sampling;

pub use error::{Error, Result};
