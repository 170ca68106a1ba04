//! Human-machine centaur planning.
//!
//! A machine planner shares control with a bounded-rational human who may
//! override its proposals. The crate provides the tabular decision-making
//! substrate, the machine-optimistic human model, the Food Truck and Food
//! Shelter benchmarks, a particle-filtered root-sampling MCTS planner, a
//! belief-alignment analysis toolkit and the experiment harness behind the
//! `centaur-lab` binary.

pub mod alignment;
pub mod belief;
pub mod dirichlet;
pub mod env;
pub mod error;
pub mod harness;
pub mod human;
pub mod model;
pub mod planner;
pub mod solvers;

pub use belief::{belief_condition, belief_kl, belief_propagate, belief_update, kl_divergence, BeliefState};
pub use dirichlet::DirichletCounts;
pub use error::{Error, Result};
pub use model::TabularModel;
