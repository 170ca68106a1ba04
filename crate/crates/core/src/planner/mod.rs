//! The machine's Bayes-adaptive best response to a machine-optimistic human.
//!
//! The human's STM is unknown; the machine holds weighted particles over it,
//! each carrying a precomputed response table. Planning is UCT where every
//! simulation samples one particle at the root and keeps it, and filtering
//! zeroes the particles whose (deterministic) response disagrees with what
//! the human did.

mod domains;
mod exact;
mod heuristic;
mod machine;
mod mcts;
mod particles;

pub use domains::{
    food_shelter_prior_grid, food_truck_prior_grid, midpoint_grid, HyperbolicParticles, NoiseParticles,
    FOOD_TRUCK_C_VALUES, MIN_GAMMA,
};
pub use exact::{best_response_q, induced_machine_mdp};
pub use heuristic::{heuristic_values, rollout_heuristic_value, HeuristicContext, HEURISTIC_NAMES};
pub use machine::CentaurMachine;
pub use mcts::{plan, plan_detailed, PlanOutcome, PlannerConfig, SearchModel};
pub use particles::{
    filter_particles, init_particles, reinvigorate, write_posterior_csv, Observed, ParticleBelief, ParticleParams,
    ParticleSolver, PosteriorSnapshot, StmParticle, MAX_NEW_PARTICLES,
};
