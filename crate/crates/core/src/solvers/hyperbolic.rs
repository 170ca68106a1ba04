//! Hyperbolic discounting as a mixture of exponential discounting.
//!
//! For a fixed reward stream, `∫₀¹ w(γ,λ) λ^t dλ = 1/(1+γt)` with
//! `w(γ,λ) = (1/γ) λ^{1/γ−1}`, so the hyperbolic Q-function is approximated by
//! `Σ_k W_k Q*_{λ_k}` over a fixed λ-grid.
//!
//! The density is singular at λ = 0 whenever γ > 1 (at γ = 7.5 more than half
//! of its mass sits below λ = 0.01), so plain density-times-width weights lose
//! most of that mass. Instead each grid node gets the exact integral of the
//! density over its cell, and an extra node at λ = 0 (where `Q*_0 = R`) takes
//! part of the first cell's mass so that the first cell reproduces both the
//! zeroth and first moments exactly. The grid itself does not depend on γ, so
//! one set of `Q*_λ` solutions serves every γ.

use rayon::prelude::*;

use super::value_iteration::SparseDynamics;
use super::{DiscountSpec, QTable, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::model::TabularModel;

/// Mixture density `w(γ, λ) = (1/γ) λ^{1/γ − 1}`.
pub fn hyperbolic_weight(gamma: f64, lambda: f64) -> f64 {
    (1.0 / gamma) * lambda.powf(1.0 / gamma - 1.0)
}

/// `n` uniform midpoints on (0, 1).
pub fn default_lambda_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| (k as f64 + 0.5) / n as f64).collect()
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidModel("empty λ-grid".into()));
    }
    if grid.iter().any(|&l| !(l > 0.0 && l < 1.0)) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidModel("λ-grid must be strictly increasing inside (0, 1)".into()));
    }
    Ok(())
}

/// Quadrature weights for nodes `[0, grid...]`: entry 0 belongs to the extra
/// node at λ = 0, entry `k + 1` to `grid[k]`. Cells are bounded by midpoints
/// between neighbouring nodes, and the weights sum to exactly one.
pub fn hyperbolic_weights(gamma: f64, grid: &[f64]) -> Result<Vec<f64>> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidModel(format!("hyperbolic γ must be positive, got {gamma}")));
    }
    check_grid(grid)?;
    let a = 1.0 / gamma;
    let n = grid.len();
    let mut edges = Vec::with_capacity(n + 1);
    edges.push(0.0);
    edges.extend(grid.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    edges.push(1.0);
    let cdf = |x: f64| x.powf(a);
    let mut weights = Vec::with_capacity(n + 1);
    let first_mass = cdf(edges[1]);
    let first_moment = a / (a + 1.0) * edges[1].powf(a + 1.0);
    let at_first = (first_moment / grid[0]).min(first_mass);
    weights.push(first_mass - at_first);
    weights.push(at_first);
    for k in 1..n {
        weights.push(cdf(edges[k + 1]) - cdf(edges[k]));
    }
    Ok(weights)
}

/// Exponential solutions `Q*_λ` for every node of a λ-grid, plus `Q*_0 = R`.
/// Solve once and combine for as many γ values as needed.
#[derive(Debug, Clone)]
pub struct LambdaGridSolution {
    grid: Vec<f64>,
    zero: Vec<f64>,
    solutions: Vec<QTable>,
    n_states: usize,
    n_actions: usize,
}

impl LambdaGridSolution {
    /// Solves every grid node; nodes are independent and solved in parallel,
    /// results are kept in grid order.
    pub fn solve(model: &TabularModel, grid: &[f64], tol: f64) -> Result<Self> {
        if !model.is_fully_observable() {
            return Err(Error::NotFullyObservable);
        }
        check_grid(grid)?;
        let dynamics = SparseDynamics::new(model);
        let solutions = grid
            .par_iter()
            .map(|&l| dynamics.solve(l, tol))
            .collect::<Result<Vec<_>>>()?;
        let zero = (0..model.n_states())
            .flat_map(|s| (0..model.n_actions()).map(move |a| (s, a)))
            .map(|(s, a)| model.r(s, a))
            .collect();
        Ok(Self {
            grid: grid.to_vec(),
            zero,
            solutions,
            n_states: model.n_states(),
            n_actions: model.n_actions(),
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn solution(&self, k: usize) -> &QTable {
        &self.solutions[k]
    }

    /// `Σ_k W_k(γ) Q*_{λ_k}`, accumulated in grid order.
    pub fn combine(&self, gamma: f64) -> Result<QTable> {
        let w = hyperbolic_weights(gamma, &self.grid)?;
        let mut values: Vec<f64> = self.zero.iter().map(|r| w[0] * r).collect();
        for (wk, q) in w[1..].iter().zip(&self.solutions) {
            for (v, qk) in values.iter_mut().zip(q.values()) {
                *v += wk * qk;
            }
        }
        QTable::new(self.n_states, self.n_actions, values, DiscountSpec::Hyperbolic { gamma })
    }
}

/// Hyperbolic Q-function on a uniform midpoint grid of `grid_size` nodes.
pub fn hyperbolic_q(model: &TabularModel, gamma: f64, grid_size: usize) -> Result<QTable> {
    hyperbolic_q_from_grid(model, gamma, &default_lambda_grid(grid_size))
}

pub fn hyperbolic_q_from_grid(model: &TabularModel, gamma: f64, grid: &[f64]) -> Result<QTable> {
    LambdaGridSolution::solve(model, grid, DEFAULT_TOL)?.combine(gamma)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_values() {
        assert_eq!(hyperbolic_weight(1.0, 0.3), 1.0);
        assert!((hyperbolic_weight(7.5, 0.5) - 0.2432).abs() < 1e-4);
    }

    #[test]
    fn weights_are_nonnegative_and_sum_to_one() {
        let grid = default_lambda_grid(101);
        for &g in &[0.05, 0.1, 0.5, 1.0, 2.0, 7.5, 10.0] {
            let w = hyperbolic_weights(g, &grid).unwrap();
            assert!(w.iter().all(|&x| x >= 0.0), "γ = {g}");
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12, "γ = {g}");
        }
    }

    #[test]
    fn weights_reproduce_hyperbolic_discount() {
        let grid = default_lambda_grid(101);
        let mut nodes = vec![0.0];
        nodes.extend(&grid);
        for &g in &[0.5, 1.0, 7.5] {
            let w = hyperbolic_weights(g, &grid).unwrap();
            for t in 0..30 {
                let approx: f64 = w.iter().zip(&nodes).map(|(w, l)| w * l.powi(t)).sum();
                assert!((approx - 1.0 / (1.0 + g * t as f64)).abs() < 1e-3, "γ = {g}, t = {t}");
            }
        }
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(hyperbolic_weights(1.0, &[0.5, 0.2]).is_err());
        assert!(hyperbolic_weights(1.0, &[1.0]).is_err());
        assert!(hyperbolic_weights(0.0, &[0.5]).is_err());
    }
}
