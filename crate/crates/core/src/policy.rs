//! Row-stochastic per-state action tables shared by target and behavior policies.

use crate::error::{Error, Result};

/// Tolerance for "row sums to one" checks on constructed policies.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Anything that assigns a distribution over actions to every state.
pub trait StochasticPolicy {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn row(&self, state: usize) -> &[f64];

    fn prob(&self, state: usize, action: usize) -> f64 {
        self.row(state)[action]
    }
}

/// Dense `n_states × n_actions` table of action probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyTable {
    n_actions: usize,
    probs: Vec<f64>,
}

impl PolicyTable {
    /// Builds a table from explicit rows, checking each is a distribution.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_actions = rows.first().map_or(0, Vec::len);
        if n_actions == 0 {
            return Err(Error::InvalidMdp("policy needs at least one state and action".into()));
        }
        let mut probs = Vec::with_capacity(rows.len() * n_actions);
        for (s, row) in rows.iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::DimensionMismatch {
                    context: "policy row",
                    expected: n_actions,
                    actual: row.len(),
                });
            }
            check_distribution(row, &format!("policy[{s}]"), ROW_SUM_TOL)?;
            probs.extend_from_slice(row);
        }
        Ok(Self { n_actions, probs })
    }

    /// The same action distribution replicated across `n_states` states.
    pub fn replicated(n_states: usize, row: &[f64]) -> Result<Self> {
        check_distribution(row, "policy row", ROW_SUM_TOL)?;
        let mut probs = Vec::with_capacity(n_states * row.len());
        for _ in 0..n_states {
            probs.extend_from_slice(row);
        }
        Ok(Self {
            n_actions: row.len(),
            probs,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// Wraps a flat buffer without validation. Callers own the invariant.
    pub(crate) fn from_flat_unchecked(n_actions: usize, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len() % n_actions, 0);
        Self { n_actions, probs }
    }

    pub fn row_mut(&mut self, state: usize) -> &mut [f64] {
        let n = self.n_actions;
        &mut self.probs[state * n..(state + 1) * n]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.probs
    }
}

impl StochasticPolicy for PolicyTable {
    fn n_states(&self) -> usize {
        self.probs.len() / self.n_actions
    }

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn row(&self, state: usize) -> &[f64] {
        let n = self.n_actions;
        &self.probs[state * n..(state + 1) * n]
    }
}

pub(crate) fn check_distribution(row: &[f64], name: &str, tol: f64) -> Result<()> {
    if let Some(&bad) = row.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(Error::NotStochastic {
            row: name.to_string(),
            sum: bad,
        });
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(Error::NotStochastic {
            row: name.to_string(),
            sum,
        });
    }
    Ok(())
}

/// Draws an index from a probability row with a single uniform variate.
pub fn sample_index(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the cumulative sum; take the last
    // index with positive mass.
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
}
