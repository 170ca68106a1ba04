//! Exact tabular solvers: exponentially discounted value iteration, finite
//! horizon backward induction, and hyperbolic Q-functions assembled from a
//! mixture of exponential ones.

mod hyperbolic;
mod value_iteration;

pub use hyperbolic::{
    default_lambda_grid, hyperbolic_q, hyperbolic_q_from_grid, hyperbolic_weight, hyperbolic_weights,
    LambdaGridSolution,
};
pub use value_iteration::{finite_horizon_q, value_iteration, SparseDynamics, MAX_SWEEPS};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TabularModel;

/// Default convergence tolerance for value iteration.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Optimality criterion attached to a Q-table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiscountSpec {
    Exponential { lambda: f64 },
    Hyperbolic { gamma: f64 },
    Undiscounted { horizon: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
    discount: DiscountSpec,
}

impl QTable {
    pub fn new(n_states: usize, n_actions: usize, values: Vec<f64>, discount: DiscountSpec) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::InvalidModel(format!(
                "Q-table has {} entries, expected {}",
                values.len(),
                n_states * n_actions
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("Q-table has a non-finite entry".into()));
        }
        Ok(Self { n_states, n_actions, values, discount })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> DiscountSpec {
        self.discount
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn q(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// `max_a Q(s, a)`.
    pub fn value(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action with ties going to the lowest index.
    pub fn greedy_action(&self, s: usize) -> usize {
        argmax(self.row(s))
    }

    /// How much worse `a` is than the greedy action at `s`.
    pub fn gap(&self, s: usize, a: usize) -> f64 {
        self.value(s) - self.q(s, a)
    }

    /// Belief-weighted values `Q(b, a) = Σ_s b(s) Q(s, a)`.
    pub fn belief_row(&self, b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_actions];
        for (s, &p) in b.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (o, q) in out.iter_mut().zip(self.row(s)) {
                *o += p * q;
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Deterministic stationary policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    actions: Vec<usize>,
}

impl Policy {
    pub fn new(actions: Vec<usize>, n_actions: usize) -> Result<Self> {
        if let Some(&a) = actions.iter().find(|&&a| a >= n_actions) {
            return Err(Error::InvalidAction { action: a, n_actions });
        }
        Ok(Self { actions })
    }

    pub fn action(&self, s: usize) -> usize {
        self.actions[s]
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

pub fn greedy_policy(q: &QTable) -> Policy {
    Policy { actions: (0..q.n_states).map(|s| q.greedy_action(s)).collect() }
}

/// Undiscounted Monte Carlo returns of `policy` from `start`, one per seed.
/// Rollouts stop at terminal states or after `horizon` steps.
pub fn evaluate_return(
    model: &TabularModel,
    policy: &Policy,
    start: usize,
    horizon: usize,
    seeds: &[u64],
) -> Result<Vec<f64>> {
    model.check_state(start)?;
    if policy.len() != model.n_states() {
        return Err(Error::InvalidModel("policy length does not match the model".into()));
    }
    if horizon == 0 {
        return Err(Error::InvalidSpec("horizon must be at least 1".into()));
    }
    Ok(seeds
        .iter()
        .map(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = start;
            let mut total = 0.0;
            for _ in 0..horizon {
                if model.is_terminal(s) {
                    break;
                }
                let a = policy.action(s);
                total += model.r(s, a);
                s = model.sample_next(a, s, rng.gen::<f64>());
            }
            total
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_ties_go_to_lowest_index() {
        let q = QTable::new(2, 3, vec![1.0, 1.0, 1.0, 0.0, 2.0, 2.0], DiscountSpec::Exponential { lambda: 0.9 })
            .unwrap();
        assert_eq!(greedy_policy(&q).actions(), &[0, 1]);
    }

    #[test]
    fn deterministic_model_returns_match_across_seeds() {
        let t = vec![vec![vec![0.0, 1.0], vec![0.0, 1.0]]];
        let m = TabularModel::from_mdp(t, vec![vec![-1.0], vec![0.0]], vec![1]).unwrap();
        let p = Policy::new(vec![0, 0], 1).unwrap();
        let r = evaluate_return(&m, &p, 0, 10, &[1, 2, 3]).unwrap();
        assert_eq!(r, vec![-1.0, -1.0, -1.0]);
    }

    #[test]
    fn qtable_json_round_trip() {
        let q = QTable::new(1, 2, vec![0.5, -1.0], DiscountSpec::Hyperbolic { gamma: 7.5 }).unwrap();
        assert_eq!(QTable::from_json(&q.to_json().unwrap()).unwrap(), q);
    }
}
