mod common;

use std::sync::Arc;

use centaur_core::env::{
    build_food_truck, run_episode, CentaurConfig, FoodShelterConfig, FoodShelterSpace, FoodTruckLayout, TruckState,
};
use centaur_core::human::{HumanResponse, OverrideTable, SubjectiveTaskModel};
use centaur_core::planner::{
    filter_particles, food_shelter_prior_grid, heuristic_values, init_particles, plan, reinvigorate,
    rollout_heuristic_value, CentaurMachine, HeuristicContext, NoiseParticles, ParticleBelief, ParticleParams,
    ParticleSolver, PlannerConfig, SearchModel, StmParticle,
};
use centaur_core::solvers::DiscountSpec;
use centaur_core::{Error, TabularModel};
use common::{argmax, oracle_q, random_mdp};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn human(model: &Arc<TabularModel>, lambda: f64, c_h: f64) -> SubjectiveTaskModel {
    SubjectiveTaskModel::new(model.clone(), DiscountSpec::Exponential { lambda }, c_h).unwrap().solve().unwrap()
}

/// A grid of humans on one model; particle `k` is labelled `Noise { epsilon: k }`.
fn human_grid(model: &Arc<TabularModel>) -> (Vec<(f64, f64)>, ParticleBelief) {
    let mut params = Vec::new();
    for &lambda in &[0.3, 0.6, 0.9] {
        for &c in &[0.0, 0.05, 0.2, 0.6] {
            params.push((lambda, c));
        }
    }
    let particles = params
        .iter()
        .enumerate()
        .map(|(k, &(lambda, c))| {
            let label = ParticleParams::Noise { epsilon: k as f64, c_h: c };
            StmParticle::from_stm(k, label, 1.0, human(model, lambda, c)).unwrap()
        })
        .collect();
    (params, ParticleBelief::new(particles).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn true_human_survives_its_own_trace(seed in any::<u64>(), truth in 0usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, na) = (rng.gen_range(2..8), rng.gen_range(2..4));
        let model = Arc::new(random_mdp(&mut rng, n, na));
        let (params, mut belief) = human_grid(&model);
        let (lambda, c) = params[truth];
        let true_stm = human(&model, lambda, c);
        let mut support = belief.support_size();
        for _ in 0..40 {
            let s = rng.gen_range(0..model.n_states());
            let a_m = rng.gen_range(0..model.n_actions());
            let response = true_stm.respond_at_state(s, a_m).unwrap();
            belief = filter_particles(&belief, s, a_m, response).unwrap();
            prop_assert!(belief.particles[truth].weight > 0.0);
            let now = belief.support_size();
            prop_assert!(now <= support);
            support = now;
            let total: f64 = belief.weights().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn filtering_keeps_exactly_the_agreeing_particles(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = Arc::new(random_mdp(&mut rng, 5, 3));
        let (_, belief) = human_grid(&model);
        let s = rng.gen_range(0..5);
        let a_m = rng.gen_range(0..3);
        let noop = filter_particles(&belief, s, a_m, HumanResponse::Noop);
        match noop {
            Ok(next) => {
                for (before, after) in belief.particles.iter().zip(&next.particles) {
                    prop_assert_eq!(after.weight > 0.0, !before.response(s, a_m).is_override());
                }
            }
            Err(e) => {
                prop_assert!(matches!(e, Error::AllParticlesEliminated));
                prop_assert!(belief.particles.iter().all(|p| p.response(s, a_m).is_override()));
            }
        }
    }

    #[test]
    fn identical_responders_keep_their_weight_ratio(seed in any::<u64>(), w1 in 0.1f64..5.0, w2 in 0.1f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = Arc::new(random_mdp(&mut rng, 6, 3));
        let stm = human(&model, 0.8, 0.1);
        let other = human(&model, 0.2, 0.0);
        let label = ParticleParams::Noise { epsilon: 0.0, c_h: 0.1 };
        let mut belief = ParticleBelief::new(vec![
            StmParticle::from_stm(0, label, w1, stm.clone()).unwrap(),
            StmParticle::from_stm(1, label, w2, stm.clone()).unwrap(),
            StmParticle::from_stm(2, label, 1.0, other).unwrap(),
        ])
        .unwrap();
        let ratio = w1 / w2;
        for _ in 0..30 {
            let s = rng.gen_range(0..6);
            let a_m = rng.gen_range(0..3);
            belief.filter(s, a_m, stm.respond_at_state(s, a_m).unwrap()).unwrap();
            let w = belief.weights();
            prop_assert!((w[0] / w[1] - ratio).abs() <= 1e-9 * ratio);
        }
    }
}

#[test]
fn single_never_override_particle_plans_the_value_iteration_policy() {
    let lambda = 0.9;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    while checked < 3 {
        let model = Arc::new(random_mdp(&mut rng, 10, 3));
        let q = oracle_q(&model, lambda);
        // plans compare visit counts, so skip models with near-ties
        let min_gap = q
            .iter()
            .map(|row| {
                let best = row[argmax(row)];
                row.iter().filter(|&&x| x < best).map(|x| best - x).fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min);
        if min_gap < 0.1 {
            continue;
        }
        checked += 1;
        let v: Vec<f64> = q.iter().map(|row| row[argmax(row)]).collect();
        let never = OverrideTable::never(10, 3);
        let belief = ParticleBelief::single(StmParticle::from_table(
            0,
            ParticleParams::Noise { epsilon: 0.0, c_h: f64::INFINITY },
            1.0,
            never,
        ));
        let search = SearchModel::new(model.clone(), 0.0).unwrap();
        let cfg = PlannerConfig { iterations: 50_000, c_uct: 1.0, lambda, ..Default::default() };
        for s in 0..10 {
            let a = plan(&belief, s, 50, &search, &v, &cfg, s as u64).unwrap();
            assert_eq!(a, argmax(&q[s]), "state {s}: q = {:?}", q[s]);
        }
    }
}

#[test]
fn planning_is_deterministic_given_the_seed() {
    let space = FoodShelterSpace::new(&FoodShelterConfig::default()).unwrap();
    let solver = NoiseParticles::new(space.clone(), 0.95);
    let belief = init_particles(&food_shelter_prior_grid(3, 0.45, 4, 0.05), &solver).unwrap();
    let stm_m = solver.solve_model(&ParticleParams::Noise { epsilon: 0.0, c_h: 0.0 }).unwrap();
    let h = heuristic_values("machine_q", &HeuristicContext::Model { model: stm_m.model(), lambda: 0.95 }).unwrap();
    let search = SearchModel::new(stm_m.model_arc().clone(), 0.2).unwrap();
    let cfg = PlannerConfig { iterations: 300, heuristic: "machine_q".into(), ..Default::default() };
    let s0 = space.start_state();
    let a = plan(&belief, s0, 100, &search, &h, &cfg, 11).unwrap();
    assert_eq!(a, plan(&belief, s0, 100, &search, &h, &cfg, 11).unwrap());

    let stm_h = solver.solve_model(&ParticleParams::Noise { epsilon: 0.45, c_h: 0.05 }).unwrap();
    let ep = CentaurConfig {
        otm: Arc::new(space.build(&space.noise_profile(0.0).unwrap()).unwrap()),
        stm_m: stm_m.clone(),
        stm_h,
        c_m: 0.2,
        horizon: 30,
        start_state: s0,
    };
    let run = || {
        let mut m = CentaurMachine::new(search.clone(), h.clone(), cfg.clone(), belief.clone(), 30, 5)
            .unwrap()
            .with_snapshots();
        let log = run_episode(&ep, &mut m, 5).unwrap();
        (log, m.snapshots)
    };
    assert_eq!(run(), run());
}

#[test]
fn posterior_is_uniform_within_each_surviving_class() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = Arc::new(random_mdp(&mut rng, 6, 3));
    let (params, mut belief) = human_grid(&model);
    let true_stm = human(&model, params[5].0, params[5].1);
    for _ in 0..25 {
        let s = rng.gen_range(0..6);
        let a_m = rng.gen_range(0..3);
        belief.filter(s, a_m, true_stm.respond_at_state(s, a_m).unwrap()).unwrap();
    }
    let alive: Vec<&StmParticle> = belief.particles.iter().filter(|p| p.weight > 0.0).collect();
    for p in &alive {
        for q in &alive {
            if p.table == q.table {
                assert!((p.weight - q.weight).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn reinvigorate_without_jitter_duplicates_survivors() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let model = Arc::new(random_mdp(&mut rng, 5, 3));
    let (params, mut belief) = human_grid(&model);
    let true_stm = human(&model, params[0].0, params[0].1);
    for _ in 0..20 {
        let s = rng.gen_range(0..5);
        let a_m = rng.gen_range(0..3);
        belief.filter(s, a_m, true_stm.respond_at_state(s, a_m).unwrap()).unwrap();
    }
    belief.prune();
    let survivors = belief.len();
    let grown = reinvigorate(&belief, 0.0, None, &[], &mut rng).unwrap();
    assert_eq!(grown.len(), 12);
    let total: f64 = grown.weights().iter().sum();
    assert!((total - 1.0).abs() < 1e-9);
    for p in &grown.particles {
        assert!(belief.particles.iter().any(|s| s.table == p.table));
    }
    assert!(survivors <= 12);
}

#[test]
fn everyone_eliminated_brings_back_the_prior() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = Arc::new(random_mdp(&mut rng, 4, 2));
    let (_, belief) = human_grid(&model);
    let mut dead = belief.clone();
    dead.particles.iter_mut().for_each(|p| p.weight = 0.0);
    let fresh = reinvigorate(&dead, 0.0, None, &[], &mut rng).unwrap();
    assert_eq!(fresh.len(), belief.len());
    for w in fresh.weights() {
        assert!((w - 1.0 / 12.0).abs() < 1e-12);
    }
}

#[test]
fn infeasible_grid_points_are_dropped() {
    let space = FoodShelterSpace::new(&FoodShelterConfig::default()).unwrap();
    let solver = NoiseParticles::new(space, 0.95);
    let grid = [
        ParticleParams::Noise { epsilon: 0.2, c_h: 0.0 },
        ParticleParams::Noise { epsilon: 0.6, c_h: 0.0 },
    ];
    let belief = init_particles(&grid, &solver).unwrap();
    assert_eq!(belief.len(), 1);
    assert_eq!(belief.particles[0].weight, 1.0);
    assert!(matches!(init_particles(&grid[1..], &solver), Err(Error::EmptyGrid)));
}

#[test]
fn food_shelter_prior_has_1200_uniform_particles() {
    let grid = food_shelter_prior_grid(12, 0.45, 100, 0.005);
    assert_eq!(grid.len(), 1200);
    let eps: Vec<f64> = grid.iter().map(|p| p.model_param()).collect();
    assert!(eps.iter().all(|&e| (0.0..=0.45 + 1e-12).contains(&e)));
    assert!(grid.iter().all(|p| p.c_h() >= 0.0 && p.c_h() < 0.5));
}

#[test]
fn chain_states_are_valued_by_their_remaining_reward() {
    let truck = build_food_truck(&FoodTruckLayout::default_layout()).unwrap();
    let lambda = 0.95;
    let ctx = HeuristicContext::FoodTruck { truck: &truck, lambda };
    let values = heuristic_values("vegan_distance", &ctx).unwrap();
    let mut seen = 0;
    for (s, st) in truck.states.iter().enumerate() {
        if matches!(st, TruckState::Entry { .. } | TruckState::Exit { .. }) {
            // roll the chain: every action leads along it
            let (mut x, mut disc, mut total) = (s, 1.0, 0.0);
            while !truck.model.is_terminal(x) {
                total += disc * truck.model.r(x, 0);
                disc *= lambda;
                x = truck.next(x, 0);
            }
            assert!((values[s] - total).abs() < 1e-12, "{}", truck.describe(s));
            assert_eq!(rollout_heuristic_value("vegan_distance", s, &ctx).unwrap(), values[s]);
            seen += 1;
        }
    }
    assert!(seen >= 4);
}

#[test]
fn machine_q_heuristic_is_the_optimal_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = random_mdp(&mut rng, 8, 3);
    let q = oracle_q(&model, 0.9);
    let h = heuristic_values("machine_q", &HeuristicContext::Model { model: &model, lambda: 0.9 }).unwrap();
    for s in 0..8 {
        assert!((h[s] - q[s][argmax(&q[s])]).abs() < 1e-6);
    }
    assert!(heuristic_values("none", &HeuristicContext::Model { model: &model, lambda: 0.9 }).unwrap().iter().all(|&v| v == 0.0));
    assert!(matches!(
        heuristic_values("distance", &HeuristicContext::Model { model: &model, lambda: 0.9 }),
        Err(Error::UnknownHeuristic(_))
    ));
}

#[test]
fn degenerate_belief_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let model = Arc::new(random_mdp(&mut rng, 4, 2));
    let (_, belief) = human_grid(&model);
    let mut dead = belief;
    dead.particles.iter_mut().for_each(|p| p.weight = 0.0);
    let search = SearchModel::new(model, 0.0).unwrap();
    let cfg = PlannerConfig { iterations: 10, ..Default::default() };
    assert!(matches!(plan(&dead, 0, 5, &search, &[0.0; 4], &cfg, 0), Err(Error::DegenerateBelief)));
    assert!(PlannerConfig { iterations: 0, ..Default::default() }.validate().is_err());
}
