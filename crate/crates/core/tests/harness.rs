use std::fs;
use std::sync::Arc;

use centaur_core::env::{build_food_truck, FoodTruckLayout};
use centaur_core::harness::{
    build_task, load_or_solve_particles, plot_summary, read_summary_csv, render_summary_svg, run_experiment, run_seed,
    solve_cache, CacheStatus, Experiment, ExperimentSpec, Mode, SummaryRow,
};
use centaur_core::human::SubjectiveTaskModel;
use centaur_core::planner::{ParticleBelief, ParticleParams, ParticleSolver, PlannerConfig};
use centaur_core::{Error, Result};

fn small_truck() -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(Experiment::Foodtruck);
    spec.seeds = vec![0, 1];
    let p = &mut spec.food_truck;
    p.episodes = 3;
    p.prior_low = 3;
    p.prior_high = 3;
    p.planner.iterations = 300;
    spec
}

fn small_shelter(experiment: Experiment) -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(experiment);
    spec.seeds = vec![0, 1, 2];
    let p = &mut spec.food_shelter;
    p.horizon = 25;
    p.prior_eps = 3;
    p.prior_c = 4;
    p.prior_c_step = 0.05;
    p.planner.iterations = 200;
    spec
}

#[test]
fn specs_are_validated() {
    let mut spec = small_truck();
    spec.seeds.clear();
    assert!(matches!(run_experiment(&spec), Err(Error::InvalidSpec(_))));

    let mut spec = small_truck();
    spec.modes = vec![Mode::Human, Mode::Human];
    assert!(matches!(spec.validate(), Err(Error::InvalidSpec(_))));

    let mut spec = ExperimentSpec::new(Experiment::Alignment);
    spec.modes = vec![Mode::Centaur];
    assert!(matches!(spec.validate(), Err(Error::InvalidSpec(_))));

    let mut spec = small_truck();
    spec.food_truck.planner = PlannerConfig { iterations: 0, ..Default::default() };
    assert!(spec.validate().is_err());

    assert!(matches!(Mode::parse("oracle"), Err(Error::InvalidSpec(_))));
    assert_eq!(Experiment::parse("foodshelter_swapped").unwrap(), Experiment::FoodshelterSwapped);
}

#[test]
fn spec_json_round_trips_with_defaults() {
    let spec = ExperimentSpec::from_json(r#"{"experiment": "foodshelter", "modes": ["ideal"]}"#).unwrap();
    assert_eq!(spec.seeds, (0..19).collect::<Vec<u64>>());
    assert_eq!(spec.food_shelter.horizon, 100);
    assert_eq!(spec.modes, vec![Mode::Ideal]);
    let back = ExperimentSpec::from_json(&serde_json::to_string(&spec).unwrap()).unwrap();
    assert_eq!(back, spec);
    assert!(ExperimentSpec::from_json(r#"{"experiment": "chess"}"#).is_err());
}

#[test]
fn human_arm_replays_the_hyperbolic_greedy_route() {
    let mut spec = small_truck();
    spec.modes = vec![Mode::Human];
    let result = run_experiment(&spec).unwrap();
    // roll the human's greedy policy through the deterministic grid
    let truck = build_food_truck(&FoodTruckLayout::default_layout()).unwrap();
    let task = build_task(&spec).unwrap();
    let policy = task.stm_h.policy().unwrap();
    let (mut s, mut total) = (truck.start, 0.0);
    for _ in 0..spec.food_truck.horizon {
        if truck.model.is_terminal(s) {
            break;
        }
        total += truck.model.r(s, policy.action(s));
        s = truck.next(s, policy.action(s));
    }
    for seed in &result.arm(Mode::Human).unwrap().seeds {
        for r in &seed.returns {
            assert!((r - total).abs() < 1e-12);
        }
    }
}

#[test]
fn artefacts_are_written_and_documented() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small_shelter(Experiment::Foodshelter);
    spec.output_dir = Some(dir.path().to_path_buf());
    let result = run_experiment(&spec).unwrap();
    let root = dir.path();
    for mode in Mode::ALL {
        for seed in &spec.seeds {
            assert!(root.join(mode.name()).join(format!("seed_{seed}")).join("episode_0.csv").exists());
        }
    }
    assert!(root.join("centaur/seed_0/posterior.csv").exists());
    assert!(root.join("centaur/seed_0/true_class.csv").exists());
    assert!(!root.join("naive/seed_0/posterior.csv").exists());

    let rows = read_summary_csv(&root.join("summary.csv")).unwrap();
    assert_eq!(rows.len(), 4 * spec.food_shelter.horizon);
    assert_eq!(rows, result.summary.iter().map(round_trip).collect::<Vec<_>>());
    let text = fs::read_to_string(root.join("summary.csv")).unwrap();
    assert!(text.starts_with("arm,index,mean,se,running_mean,overrides,n\n"));

    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(root.join("metadata.json")).unwrap()).unwrap();
    let rerun: ExperimentSpec = serde_json::from_value(meta["spec"].clone()).unwrap();
    assert_eq!(rerun, spec);
    assert!(meta["crate_version"].is_string());

    let svg = fs::read_to_string(root.join("summary.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<polyline").count(), 4);
}

fn round_trip(r: &SummaryRow) -> SummaryRow {
    let p = |x: f64| format!("{x:.10}").parse::<f64>().unwrap();
    SummaryRow { mean: p(r.mean), se: p(r.se), running_mean: p(r.running_mean), ..r.clone() }
}

#[test]
fn worker_count_does_not_change_results() {
    let mut spec = small_shelter(Experiment::FoodshelterSwapped);
    spec.modes = vec![Mode::Centaur, Mode::Naive];
    let one = run_experiment(&spec).unwrap();
    spec.workers = 3;
    let three = run_experiment(&spec).unwrap();
    assert_eq!(one.summary_csv().unwrap(), three.summary_csv().unwrap());
    assert_eq!(one.arms, three.arms);
}

#[test]
fn centaur_tracks_mass_on_the_true_class() {
    let spec = small_shelter(Experiment::Foodshelter);
    let task = build_task(&spec).unwrap();
    let (prior, status) = load_or_solve_particles(&task, None).unwrap();
    assert!(status.is_none());
    let r = run_seed(&task, Mode::Centaur, &prior, 4).unwrap();
    assert_eq!(r.true_class_mass.len(), r.logs[0].len() + 1);
    assert_eq!(r.posterior.len(), r.true_class_mass.len());
    assert!(r.true_class_mass.iter().all(|m| (0.0..=1.0 + 1e-12).contains(m)));
}

/// Fails whenever anyone asks it for a human model.
struct Refuses;

impl ParticleSolver for Refuses {
    fn solve_model(&self, _: &ParticleParams) -> Result<SubjectiveTaskModel> {
        Err(Error::InvalidSpec("the human model was consulted".into()))
    }
    fn task_model(&self, _: &ParticleParams) -> Result<SubjectiveTaskModel> {
        Err(Error::InvalidSpec("the human model was consulted".into()))
    }
    fn feasible(&self, _: &ParticleParams) -> bool {
        true
    }
    fn clamp(&self, p: ParticleParams) -> ParticleParams {
        p
    }
}

#[test]
fn arms_do_not_reach_outside_their_lane() {
    let spec = small_shelter(Experiment::Foodshelter);
    let mut task = build_task(&spec).unwrap();
    task.solver = Arc::new(Refuses);
    let unused = ParticleBelief::single(centaur_core::planner::StmParticle::from_table(
        0,
        task.true_params,
        1.0,
        centaur_core::human::OverrideTable::never(task.otm.n_states(), task.otm.n_actions()),
    ));
    // naive plans without any human model
    run_seed(&task, Mode::Naive, &unused, 0).unwrap();
    assert!(run_seed(&task, Mode::Ideal, &unused, 0).is_err());
    // the human arm never builds a planner
    task.planner.iterations = 0;
    task.heuristic.clear();
    run_seed(&task, Mode::Human, &unused, 0).unwrap();
    assert!(run_seed(&task, Mode::Naive, &unused, 0).is_err());
}

#[test]
fn particle_cache_is_reused_and_repaired() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small_shelter(Experiment::Foodshelter);
    spec.cache_dir = Some(dir.path().to_path_buf());
    let (first, status) = solve_cache(&spec).unwrap();
    assert_eq!(status, CacheStatus::Miss);
    assert_eq!(first.particles, 12);
    assert_eq!(first.models, 3);
    let (_, status) = solve_cache(&spec).unwrap();
    assert_eq!(status, CacheStatus::Hit);

    let task = build_task(&spec).unwrap();
    let (cached, _) = load_or_solve_particles(&task, Some(dir.path())).unwrap();
    let (fresh, _) = load_or_solve_particles(&task, None).unwrap();
    assert_eq!(cached.len(), fresh.len());
    for (a, b) in cached.particles.iter().zip(&fresh.particles) {
        assert_eq!((a.id, a.params, a.weight), (b.id, b.params, b.weight));
        assert_eq!(a.table, b.table);
    }

    fs::write(&first.path, "{ not json").unwrap();
    assert_eq!(solve_cache(&spec).unwrap().1, CacheStatus::Corrupt);
    assert_eq!(solve_cache(&spec).unwrap().1, CacheStatus::Hit);

    spec.food_shelter.lambda = 0.9;
    assert_eq!(solve_cache(&spec).unwrap().1, CacheStatus::Stale);

    spec.cache_dir = None;
    assert!(matches!(solve_cache(&spec), Err(Error::InvalidSpec(_))));
}

#[test]
fn full_food_shelter_prior_caches_1200_particles() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = ExperimentSpec::new(Experiment::Foodshelter);
    spec.cache_dir = Some(dir.path().to_path_buf());
    let (report, _) = solve_cache(&spec).unwrap();
    assert_eq!(report.particles, 1200);
    assert_eq!(report.models, 12);
}

#[test]
fn plotting_rejects_bad_summaries() {
    assert!(matches!(render_summary_svg(&[], &[], "x"), Err(Error::MalformedSummary(_))));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("summary.csv");
    fs::write(&path, "arm,index,mean,se,running_mean,overrides,n\n").unwrap();
    assert!(matches!(plot_summary(&path), Err(Error::MalformedSummary(_))));
    fs::write(&path, "arm,index\nhuman,oops\n").unwrap();
    assert!(matches!(plot_summary(&path), Err(Error::MalformedSummary(_))));

    // a single seed has a zero-width band
    fs::write(&path, "arm,index,mean,se,running_mean,overrides,n\nhuman,1,2.0,0.0,2.0,0,1\nhuman,2,3.0,0.0,2.5,0,1\n").unwrap();
    fs::write(dir.path().join("references.csv"), "name,return\nblue,9.2\n").unwrap();
    let out = plot_summary(&path).unwrap();
    let svg = fs::read_to_string(out).unwrap();
    assert!(svg.contains("stroke-dasharray") && svg.contains("blue 9.20"));
}

#[test]
fn alignment_experiment_writes_bound_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = ExperimentSpec::new(Experiment::Alignment);
    spec.alignment.instances = 15;
    spec.output_dir = Some(dir.path().to_path_buf());
    let result = run_experiment(&spec).unwrap();
    assert_eq!(result.bounds.len(), 15);
    assert!(result.bounds.iter().all(|(_, b)| b.gamma_obs > 0.0));
    let text = fs::read_to_string(dir.path().join("bounds.csv")).unwrap();
    assert_eq!(text.lines().count(), 16);
    assert!(dir.path().join("metadata.json").exists());
}
