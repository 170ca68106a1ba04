//! Particle solvers and prior grids for the two benchmark tasks.

use std::sync::Arc;

use super::particles::{ParticleParams, ParticleSolver};
use crate::env::food_shelter::FoodShelterSpace;
use crate::error::{Error, Result};
use crate::human::SubjectiveTaskModel;
use crate::model::TabularModel;
use crate::solvers::{default_lambda_grid, value_iteration, DiscountSpec, LambdaGridSolution, DEFAULT_TOL};

/// Hyperbolic humans on a shared task model. Every particle's Q-table is a
/// reweighting of the same exponential solutions.
#[derive(Debug, Clone)]
pub struct HyperbolicParticles {
    model: Arc<TabularModel>,
    grid: Arc<LambdaGridSolution>,
}

pub const MIN_GAMMA: f64 = 1e-3;

impl HyperbolicParticles {
    pub fn new(model: Arc<TabularModel>, grid_size: usize) -> Result<Self> {
        let grid = LambdaGridSolution::solve(&model, &default_lambda_grid(grid_size), DEFAULT_TOL)?;
        Ok(Self { model, grid: Arc::new(grid) })
    }
}

impl ParticleSolver for HyperbolicParticles {
    fn solve_model(&self, params: &ParticleParams) -> Result<SubjectiveTaskModel> {
        let ParticleParams::Hyperbolic { gamma, c_h } = *params else {
            return Err(Error::InvalidSpec(format!("expected a gamma particle, got {params:?}")));
        };
        let q = self.grid.combine(gamma)?;
        SubjectiveTaskModel::new(self.model.clone(), DiscountSpec::Hyperbolic { gamma }, c_h.max(0.0))?
            .with_solution(Arc::new(q))
    }

    fn task_model(&self, params: &ParticleParams) -> Result<SubjectiveTaskModel> {
        let ParticleParams::Hyperbolic { gamma, c_h } = *params else {
            return Err(Error::InvalidSpec(format!("expected a gamma particle, got {params:?}")));
        };
        SubjectiveTaskModel::new(self.model.clone(), DiscountSpec::Hyperbolic { gamma }, c_h.max(0.0))
    }

    fn feasible(&self, params: &ParticleParams) -> bool {
        matches!(*params, ParticleParams::Hyperbolic { gamma, c_h } if gamma > 0.0 && gamma.is_finite() && c_h >= 0.0)
    }

    fn clamp(&self, params: ParticleParams) -> ParticleParams {
        params.with_values(params.model_param().max(MIN_GAMMA), params.c_h().max(0.0))
    }
}

/// Humans who overestimate action noise by ε in Food Shelter.
#[derive(Debug, Clone)]
pub struct NoiseParticles {
    space: FoodShelterSpace,
    lambda: f64,
}

impl NoiseParticles {
    pub fn new(space: FoodShelterSpace, lambda: f64) -> Self {
        Self { space, lambda }
    }

    fn max_epsilon(&self) -> f64 {
        (1.0 - self.space.cfg.base_noise) / 2.0
    }
}

impl ParticleSolver for NoiseParticles {
    fn solve_model(&self, params: &ParticleParams) -> Result<SubjectiveTaskModel> {
        let ParticleParams::Noise { epsilon, c_h } = *params else {
            return Err(Error::InvalidSpec(format!("expected an epsilon particle, got {params:?}")));
        };
        let model = self.space.build(&self.space.noise_profile(epsilon)?)?;
        let q = value_iteration(&model, self.lambda, DEFAULT_TOL)?;
        SubjectiveTaskModel::new(Arc::new(model), DiscountSpec::Exponential { lambda: self.lambda }, c_h.max(0.0))?
            .with_solution(Arc::new(q))
    }

    fn task_model(&self, params: &ParticleParams) -> Result<SubjectiveTaskModel> {
        let ParticleParams::Noise { epsilon, c_h } = *params else {
            return Err(Error::InvalidSpec(format!("expected an epsilon particle, got {params:?}")));
        };
        let model = self.space.build(&self.space.noise_profile(epsilon)?)?;
        SubjectiveTaskModel::new(Arc::new(model), DiscountSpec::Exponential { lambda: self.lambda }, c_h.max(0.0))
    }

    fn feasible(&self, params: &ParticleParams) -> bool {
        matches!(*params, ParticleParams::Noise { epsilon, c_h }
            if epsilon >= 0.0 && epsilon <= self.max_epsilon() + 1e-12 && c_h >= 0.0)
    }

    fn clamp(&self, params: ParticleParams) -> ParticleParams {
        params.with_values(params.model_param().clamp(0.0, self.max_epsilon()), params.c_h().max(0.0))
    }
}

/// `n` midpoints of equal cells covering `[lo, hi]`.
pub fn midpoint_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let h = (hi - lo) / n as f64;
    (0..n).map(|i| lo + h * (i as f64 + 0.5)).collect()
}

/// `n_low` γ values in (0, 0.5] and `n_high` in [2, 10] (cell midpoints),
/// crossed with the given override costs.
pub fn food_truck_prior_grid(n_low: usize, n_high: usize, c_values: &[f64]) -> Vec<ParticleParams> {
    let gammas = midpoint_grid(0.0, 0.5, n_low).into_iter().chain(midpoint_grid(2.0, 10.0, n_high));
    gammas
        .flat_map(|gamma| c_values.iter().map(move |&c_h| ParticleParams::Hyperbolic { gamma, c_h }))
        .collect()
}

/// Override costs of the default Food Truck prior: one low, one medium and
/// three high values. Putting more weight on high costs makes the planner
/// try the direct route before settling for a detour.
pub const FOOD_TRUCK_C_VALUES: [f64; 5] = [0.01, 0.21, 0.45, 0.6, 0.8];

/// `n_eps` ε values evenly spaced on `[0, eps_max]` (both ends included)
/// crossed with `n_c` costs `c_step · i`, `i = 0..n_c`.
pub fn food_shelter_prior_grid(n_eps: usize, eps_max: f64, n_c: usize, c_step: f64) -> Vec<ParticleParams> {
    let eps: Vec<f64> = if n_eps == 1 {
        vec![eps_max]
    } else {
        (0..n_eps).map(|i| eps_max * i as f64 / (n_eps - 1) as f64).collect()
    };
    eps.iter()
        .flat_map(|&epsilon| (0..n_c).map(move |i| ParticleParams::Noise { epsilon, c_h: c_step * i as f64 }))
        .collect()
}
