//! Visit-count bookkeeping and the three tabular exploration bonuses:
//! Hoeffding (count only), Bernstein (variance aware) and MADE
//! (total count times recent-window count).

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::ValueTable;

/// Total visit counts `N(s, a)`, successor counts `N(s, a, s')` and `N_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTable {
    n_states: usize,
    n_actions: usize,
    n: Vec<u64>,
    successors: Vec<u64>,
    total: u64,
}

impl CountTable {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            n: vec![0; n_states * n_actions],
            successors: vec![0; n_states * n_actions * n_states],
            total: 0,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: usize, a: usize) -> u64 {
        self.n[s * self.n_actions + a]
    }

    pub fn counts(&self) -> &[u64] {
        &self.n
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn successor_counts(&self, s: usize, a: usize) -> &[u64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.successors[start..start + self.n_states]
    }

    /// Empirical policy cover `N(s, a) / N_k` (all zeros before any visit).
    pub fn cover(&self) -> Vec<f64> {
        let t = self.total.max(1) as f64;
        self.n.iter().map(|&c| c as f64 / t).collect()
    }

    fn check(&self, s: usize, a: usize) -> Result<()> {
        if s >= self.n_states {
            return Err(Error::OutOfRange {
                what: "state",
                index: s,
                size: self.n_states,
            });
        }
        if a >= self.n_actions {
            return Err(Error::OutOfRange {
                what: "action",
                index: a,
                size: self.n_actions,
            });
        }
        Ok(())
    }

    pub fn observe_successor(&mut self, s: usize, a: usize, next: usize) -> Result<()> {
        self.check(s, a)?;
        if next >= self.n_states {
            return Err(Error::OutOfRange {
                what: "next state",
                index: next,
                size: self.n_states,
            });
        }
        self.successors[(s * self.n_actions + a) * self.n_states + next] += 1;
        Ok(())
    }
}

/// The last `capacity` visited pairs and their window counts `B(s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecentBuffer {
    capacity: usize,
    n_actions: usize,
    ring: VecDeque<(usize, usize)>,
    b: Vec<u64>,
}

impl RecentBuffer {
    pub fn new(n_states: usize, n_actions: usize, capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidConfig("buffer capacity must be >= 1".into()));
        }
        Ok(Self {
            capacity,
            n_actions,
            ring: VecDeque::with_capacity(capacity),
            b: vec![0; n_states * n_actions],
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, s: usize, a: usize) -> u64 {
        self.b[s * self.n_actions + a]
    }

    pub fn counts(&self) -> &[u64] {
        &self.b
    }

    pub fn contents(&self) -> impl Iterator<Item = &(usize, usize)> {
        self.ring.iter()
    }

    pub fn len(&self) -> usize {
        self.ring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.is_empty()
    }

    fn push(&mut self, s: usize, a: usize) {
        if self.ring.len() == self.capacity {
            let (os, oa) = self.ring.pop_front().expect("full ring");
            self.b[os * self.n_actions + oa] -= 1;
        }
        self.ring.push_back((s, a));
        self.b[s * self.n_actions + a] += 1;
    }
}

/// Counts one visit of `(s, a)` in both the total table and the recent window.
pub fn record(counts: &mut CountTable, buffer: &mut RecentBuffer, s: usize, a: usize) -> Result<()> {
    counts.check(s, a)?;
    if buffer.b.len() != counts.n.len() {
        return Err(Error::DimensionMismatch {
            what: "buffer table",
            expected: counts.n.len(),
            got: buffer.b.len(),
        });
    }
    counts.n[s * counts.n_actions + a] += 1;
    counts.total += 1;
    buffer.push(s, a);
    Ok(())
}

/// [`record`] plus the successor count used by the empirical model.
pub fn record_transition(
    counts: &mut CountTable,
    buffer: &mut RecentBuffer,
    s: usize,
    a: usize,
    next: usize,
) -> Result<()> {
    counts.observe_successor(s, a, next)?;
    record(counts, buffer, s, a)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BonusConfig {
    pub v_max: f64,
    /// Multiplier applied to every bonus. Zero switches the bonus off
    /// (used for ablations); negative values are rejected.
    pub scale: f64,
}

impl Default for BonusConfig {
    fn default() -> Self {
        Self {
            v_max: 1.0,
            scale: 1.0,
        }
    }
}

impl BonusConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_max > 0.0) || !(self.scale >= 0.0) || !self.scale.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "bonus needs v_max > 0 and scale >= 0 (got {}, {})",
                self.v_max, self.scale
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BonusKind {
    Hoeffding,
    Bernstein,
    Made,
}

impl BonusKind {
    pub const ALL: [BonusKind; 3] = [BonusKind::Hoeffding, BonusKind::Bernstein, BonusKind::Made];

    pub fn name(&self) -> &'static str {
        match self {
            BonusKind::Hoeffding => "hoeffding",
            BonusKind::Bernstein => "bernstein",
            BonusKind::Made => "made",
        }
    }
}

impl std::fmt::Display for BonusKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for BonusKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hoeffding" => Ok(BonusKind::Hoeffding),
            "bernstein" => Ok(BonusKind::Bernstein),
            "made" => Ok(BonusKind::Made),
            other => Err(Error::InvalidConfig(format!("unknown bonus `{other}`"))),
        }
    }
}

/// Bonus values per `(s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BonusTable {
    pub n_states: usize,
    pub n_actions: usize,
    pub values: Vec<f64>,
}

impl BonusTable {
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    /// Rows are states, columns are actions.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("state");
        for a in 0..self.n_actions {
            let _ = write!(out, ",a{a}");
        }
        out.push('\n');
        for s in 0..self.n_states {
            let _ = write!(out, "{s}");
            for a in 0..self.n_actions {
                let _ = write!(out, ",{}", self.get(s, a));
            }
            out.push('\n');
        }
        out
    }
}

fn floored(c: u64) -> f64 {
    c.max(1) as f64
}

pub fn hoeffding_value(n: u64, cfg: &BonusConfig) -> f64 {
    cfg.scale * cfg.v_max / floored(n).sqrt()
}

pub fn made_value(n: u64, b: u64, cfg: &BonusConfig) -> f64 {
    cfg.scale / (floored(n) * floored(b)).sqrt()
}

/// Bernstein bonus of one pair, straight from its successor counts.
/// Unvisited pairs count as `N = 1` with zero variance.
pub fn bernstein_value(counts: &CountTable, s: usize, a: usize, values: &[f64], cfg: &BonusConfig) -> f64 {
    let n = counts.get(s, a);
    let var = if n == 0 {
        0.0
    } else {
        let nf = n as f64;
        let succ = counts.successor_counts(s, a);
        let mean: f64 = succ.iter().zip(values).map(|(&c, v)| c as f64 * v).sum::<f64>() / nf;
        let second: f64 = succ.iter().zip(values).map(|(&c, v)| c as f64 * (v - mean).powi(2)).sum::<f64>() / nf;
        second.max(0.0)
    };
    let nf = floored(n);
    cfg.scale * ((var / nf).sqrt() + 1.0 / nf)
}

/// `scale * V_max / sqrt(N(s, a))`.
pub fn hoeffding_bonus(counts: &CountTable, cfg: &BonusConfig) -> BonusTable {
    BonusTable {
        n_states: counts.n_states,
        n_actions: counts.n_actions,
        values: counts.n.iter().map(|&n| hoeffding_value(n, cfg)).collect(),
    }
}

/// `scale * (sqrt(Var_{s' ~ P_k(.|s,a)} V(s') / N(s, a)) + 1 / N(s, a))`.
pub fn bernstein_bonus(
    counts: &CountTable,
    model: &[f64],
    values: &ValueTable,
    cfg: &BonusConfig,
) -> Result<BonusTable> {
    let ns = counts.n_states;
    let na = counts.n_actions;
    if model.len() != ns * na * ns {
        return Err(Error::DimensionMismatch {
            what: "empirical model",
            expected: ns * na * ns,
            got: model.len(),
        });
    }
    if values.0.len() != ns {
        return Err(Error::DimensionMismatch {
            what: "value table",
            expected: ns,
            got: values.0.len(),
        });
    }
    if values.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("Bernstein bonus needs finite values".into()));
    }
    let v = &values.0;
    let mut out = Vec::with_capacity(ns * na);
    for s in 0..ns {
        for a in 0..na {
            let n = counts.get(s, a);
            let var = if n == 0 {
                0.0
            } else {
                let row = &model[(s * na + a) * ns..(s * na + a + 1) * ns];
                let mean: f64 = row.iter().zip(v).map(|(p, x)| p * x).sum();
                row.iter()
                    .zip(v)
                    .map(|(p, x)| p * (x - mean).powi(2))
                    .sum::<f64>()
                    .max(0.0)
            };
            let nf = floored(n);
            out.push(cfg.scale * ((var / nf).sqrt() + 1.0 / nf));
        }
    }
    Ok(BonusTable {
        n_states: ns,
        n_actions: na,
        values: out,
    })
}

/// `scale / sqrt(N(s, a) B(s, a))`, both counts floored at one.
pub fn made_bonus(counts: &CountTable, buffer: &RecentBuffer, cfg: &BonusConfig) -> BonusTable {
    BonusTable {
        n_states: counts.n_states,
        n_actions: counts.n_actions,
        values: counts
            .n
            .iter()
            .zip(&buffer.b)
            .map(|(&n, &b)| made_value(n, b, cfg))
            .collect(),
    }
}

/// `P_k(s'|s, a) = N(s, a, s') / N(s, a)`; unvisited rows are uniform.
pub fn empirical_model(counts: &CountTable) -> Vec<f64> {
    let ns = counts.n_states;
    let mut model = Vec::with_capacity(counts.successors.len());
    for row in counts.successors.chunks(ns) {
        let seen: u64 = row.iter().sum();
        if seen == 0 {
            model.extend(std::iter::repeat_n(1.0 / ns as f64, ns));
        } else {
            model.extend(row.iter().map(|&c| c as f64 / seen as f64));
        }
    }
    model
}
