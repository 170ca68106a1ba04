use super::{DiscountSpec, QTable};
use crate::error::{Error, Result};
use crate::model::TabularModel;

/// Sweep cap for value iteration.
pub const MAX_SWEEPS: usize = 1_000_000;

/// Nonzero transition entries of a model, grouped per `(s, a)`. Benchmark
/// models are mostly deterministic, so sweeping sparse rows is far cheaper
/// than sweeping dense ones.
#[derive(Debug, Clone)]
pub struct SparseDynamics {
    n_states: usize,
    n_actions: usize,
    offsets: Vec<usize>,
    next: Vec<usize>,
    prob: Vec<f64>,
    reward: Vec<f64>,
}

impl SparseDynamics {
    pub fn new(model: &TabularModel) -> Self {
        let (n, na) = (model.n_states(), model.n_actions());
        let mut offsets = Vec::with_capacity(n * na + 1);
        let mut next = Vec::new();
        let mut prob = Vec::new();
        let mut reward = Vec::with_capacity(n * na);
        offsets.push(0);
        for s in 0..n {
            for a in 0..na {
                for (s2, &p) in model.transition_row(a, s).iter().enumerate() {
                    if p > 0.0 {
                        next.push(s2);
                        prob.push(p);
                    }
                }
                offsets.push(next.len());
                reward.push(model.r(s, a));
            }
        }
        Self { n_states: n, n_actions: na, offsets, next, prob, reward }
    }

    /// `R(s,a) + λ Σ_{s'} T(s'|s,a) V(s')` for the row index `s * n_actions + a`.
    #[inline]
    fn backup(&self, idx: usize, lambda: f64, v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for k in self.offsets[idx]..self.offsets[idx + 1] {
            acc += self.prob[k] * v[self.next[k]];
        }
        self.reward[idx] + lambda * acc
    }

    fn values(&self, q: &[f64], v: &mut [f64]) {
        for (s, vs) in v.iter_mut().enumerate() {
            *vs = q[s * self.n_actions..(s + 1) * self.n_actions]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }

    /// Solves for `Q*_λ` until the sup-norm Bellman residual is at most `tol`.
    pub fn solve(&self, lambda: f64, tol: f64) -> Result<QTable> {
        if !(0.0..1.0).contains(&lambda) {
            return Err(Error::InvalidModel(format!("discount {lambda} outside [0, 1)")));
        }
        if !(tol > 0.0) {
            return Err(Error::InvalidModel("tolerance must be positive".into()));
        }
        let rows = self.n_states * self.n_actions;
        let mut q = self.reward.clone();
        let mut v = vec![0.0; self.n_states];
        let mut residual = f64::INFINITY;
        if lambda == 0.0 {
            return QTable::new(self.n_states, self.n_actions, q, DiscountSpec::Exponential { lambda });
        }
        for _ in 0..MAX_SWEEPS {
            self.values(&q, &mut v);
            let mut diff: f64 = 0.0;
            for idx in 0..rows {
                let new = self.backup(idx, lambda, &v);
                diff = diff.max((new - q[idx]).abs());
                q[idx] = new;
            }
            // The new table is one Bellman step from the old one, so its own
            // residual is at most λ times the change.
            residual = lambda * diff;
            if residual <= tol {
                return QTable::new(self.n_states, self.n_actions, q, DiscountSpec::Exponential { lambda });
            }
        }
        Err(Error::NonconvergenceAfterMaxIterations { sweeps: MAX_SWEEPS, residual })
    }

    /// Largest `|(BQ)(s,a) − Q(s,a)|` for the discounted Bellman operator.
    pub fn bellman_residual(&self, q: &QTable, lambda: f64) -> f64 {
        let mut v = vec![0.0; self.n_states];
        self.values(q.values(), &mut v);
        (0..self.n_states * self.n_actions)
            .map(|idx| (self.backup(idx, lambda, &v) - q.values()[idx]).abs())
            .fold(0.0, f64::max)
    }
}

/// Optimal Q-function of a fully observable model under exponential
/// discounting with factor `lambda`.
pub fn value_iteration(model: &TabularModel, lambda: f64, tol: f64) -> Result<QTable> {
    if !model.is_fully_observable() {
        return Err(Error::NotFullyObservable);
    }
    SparseDynamics::new(model).solve(lambda, tol)
}

/// Undiscounted `horizon`-step optimal Q-function by backward induction.
pub fn finite_horizon_q(model: &TabularModel, horizon: usize) -> Result<QTable> {
    if !model.is_fully_observable() {
        return Err(Error::NotFullyObservable);
    }
    if horizon == 0 {
        return Err(Error::InvalidSpec("horizon must be at least 1".into()));
    }
    let dyn_ = SparseDynamics::new(model);
    let mut q = dyn_.reward.clone();
    let mut v = vec![0.0; model.n_states()];
    for _ in 1..horizon {
        dyn_.values(&q, &mut v);
        for (idx, qi) in q.iter_mut().enumerate() {
            *qi = dyn_.backup(idx, 1.0, &v);
        }
    }
    QTable::new(model.n_states(), model.n_actions(), q, DiscountSpec::Undiscounted { horizon })
}
