//! Dirichlet count dynamics of a Bayes-adaptive POMDP.
//!
//! The counts `θ[s][a][s'][o]` define the expected joint transition and
//! observation probability `θ^{s',o}_{s,a} / Σ θ_{s,a}`, and every observed
//! `(s, a, s', o)` increments its own cell by one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletCounts {
    n_states: usize,
    n_actions: usize,
    n_observations: usize,
    counts: Vec<f64>,
}

impl DirichletCounts {
    /// Uniform prior with every cell set to `value`.
    pub fn uniform(n_states: usize, n_actions: usize, n_observations: usize, value: f64) -> Result<Self> {
        if value < 0.0 || n_states == 0 || n_actions == 0 || n_observations == 0 {
            return Err(Error::InvalidModel("invalid Dirichlet prior".into()));
        }
        Ok(Self {
            n_states,
            n_actions,
            n_observations,
            counts: vec![value; n_states * n_actions * n_states * n_observations],
        })
    }

    pub fn from_counts(n_states: usize, n_actions: usize, n_observations: usize, counts: Vec<f64>) -> Result<Self> {
        if counts.len() != n_states * n_actions * n_states * n_observations {
            return Err(Error::InvalidModel("count table has wrong length".into()));
        }
        if counts.iter().any(|&c| !(c >= 0.0)) {
            return Err(Error::InvalidModel("negative count".into()));
        }
        Ok(Self { n_states, n_actions, n_observations, counts })
    }

    fn row_offset(&self, s: usize, a: usize) -> usize {
        (s * self.n_actions + a) * self.n_states * self.n_observations
    }

    fn index(&self, s: usize, a: usize, next: usize, o: usize) -> Result<usize> {
        if s >= self.n_states || next >= self.n_states || a >= self.n_actions || o >= self.n_observations {
            return Err(Error::IndexOutOfRange(format!("count cell ({s},{a},{next},{o})")));
        }
        Ok(self.row_offset(s, a) + next * self.n_observations + o)
    }

    pub fn count(&self, s: usize, a: usize, next: usize, o: usize) -> Result<f64> {
        Ok(self.counts[self.index(s, a, next, o)?])
    }

    pub fn row_total(&self, s: usize, a: usize) -> f64 {
        let off = self.row_offset(s, a);
        self.counts[off..off + self.n_states * self.n_observations].iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Expected probability of `(next, o)` after `(s, a)` under the counts.
    pub fn probability(&self, s: usize, a: usize, next: usize, o: usize) -> Result<f64> {
        let idx = self.index(s, a, next, o)?;
        let total = self.row_total(s, a);
        if !(total > 0.0) {
            return Err(Error::AllZeroCounts { state: s, action: a });
        }
        Ok(self.counts[idx] / total)
    }

    /// Returns the predictive probability of the observed tuple together with
    /// the counts after incrementing that tuple's cell.
    pub fn ba_count_update(&self, s: usize, a: usize, next: usize, o: usize) -> Result<(f64, DirichletCounts)> {
        let p = self.probability(s, a, next, o)?;
        let mut updated = self.clone();
        let idx = updated.index(s, a, next, o)?;
        updated.counts[idx] += 1.0;
        Ok((p, updated))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_prior_mean() {
        let c = DirichletCounts::uniform(3, 2, 4, 1.0).unwrap();
        let (p, _) = c.ba_count_update(0, 1, 2, 3).unwrap();
        assert!((p - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn single_nonzero_cell() {
        let mut counts = vec![0.0; 2 * 1 * 2 * 2];
        counts[3] = 5.0; // s=0, a=0, s'=1, o=1
        let c = DirichletCounts::from_counts(2, 1, 2, counts).unwrap();
        assert_eq!(c.probability(0, 0, 1, 1).unwrap(), 1.0);
    }

    #[test]
    fn sequential_posterior_mean() {
        // 2 successor states x 1 observation... use 2x2 outcomes with one state
        let c = DirichletCounts::uniform(1, 1, 4, 1.0).unwrap();
        let (p1, c) = c.ba_count_update(0, 0, 0, 2).unwrap();
        let (p2, _) = c.ba_count_update(0, 0, 0, 2).unwrap();
        assert!((p1 - 0.25).abs() < 1e-15);
        assert!((p2 - 2.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn zero_row_is_an_error() {
        let c = DirichletCounts::uniform(2, 2, 1, 0.0).unwrap();
        assert!(matches!(c.ba_count_update(1, 1, 0, 0), Err(Error::AllZeroCounts { state: 1, action: 1 })));
    }

    proptest! {
        #[test]
        fn totals_grow_by_one_per_update(steps in proptest::collection::vec((0usize..3, 0usize..2, 0usize..3, 0usize..2), 0..40)) {
            let mut c = DirichletCounts::uniform(3, 2, 2, 0.5).unwrap();
            let prior = c.total();
            for &(s, a, n, o) in &steps {
                let before = c.count(s, a, n, o).unwrap();
                let (_, next) = c.ba_count_update(s, a, n, o).unwrap();
                prop_assert_eq!(next.count(s, a, n, o).unwrap(), before + 1.0);
                c = next;
            }
            prop_assert!((c.total() - (prior + steps.len() as f64)).abs() < 1e-9);
        }
    }
}
