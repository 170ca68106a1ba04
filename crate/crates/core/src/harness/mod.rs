//! Experiment runner: builds a task from an [`ExperimentSpec`], plays every
//! requested arm over the seeds and writes CSV, JSON and SVG artefacts.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! metadata.json            spec, crate version, worker count
//! summary.csv              arm,index,mean,se,running_mean,overrides,n
//! summary.svg
//! references.csv           Food Truck only: name,return
//! <arm>/seed_<s>/episode_<e>.csv
//! centaur/seed_<s>/posterior.csv, true_class.csv
//! bounds.csv               alignment only
//! ```
//!
//! `index` in the summary is the episode number when a seed plays several
//! episodes (Food Truck), and the step number otherwise (Food Shelter), in
//! which case `mean` is the cumulative return up to that step.

mod cache;
mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cache::{load_or_solve_particles, solve_cache, CacheReport, CacheStatus};
pub use plot::{plot_summary, read_summary_csv, render_summary_svg, SummaryRow};

use crate::alignment::{
    alignment_bound_check, random_instance, value_of_observation, write_bound_csv, BoundReport, FloorMode,
};
use crate::env::{
    build_food_truck, episode_return, run_episode, write_episode_csv, CentaurConfig, FixedPolicyMachine,
    FoodShelterConfig, FoodShelterSpace, FoodTruckLayout, MachineAgent, StepRecord,
};
use crate::error::{Error, Result};
use crate::human::{OverrideTable, SubjectiveTaskModel};
use crate::model::TabularModel;
use crate::planner::{
    best_response_q, food_shelter_prior_grid, food_truck_prior_grid, heuristic_values, write_posterior_csv,
    CentaurMachine, HeuristicContext, HyperbolicParticles, NoiseParticles, ParticleBelief, ParticleParams,
    ParticleSolver, PlannerConfig, PosteriorSnapshot, SearchModel, StmParticle, FOOD_TRUCK_C_VALUES, init_particles,
};
use crate::solvers::{greedy_policy, value_iteration, DiscountSpec, DEFAULT_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Foodtruck,
    Foodshelter,
    FoodshelterSwapped,
    FoodshelterBothcorrect,
    Alignment,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::Foodtruck,
        Experiment::Foodshelter,
        Experiment::FoodshelterSwapped,
        Experiment::FoodshelterBothcorrect,
        Experiment::Alignment,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Foodtruck => "foodtruck",
            Experiment::Foodshelter => "foodshelter",
            Experiment::FoodshelterSwapped => "foodshelter_swapped",
            Experiment::FoodshelterBothcorrect => "foodshelter_bothcorrect",
            Experiment::Alignment => "alignment",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown experiment `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Planner with the prior over human models, learning from responses.
    Centaur,
    /// Planner that assumes the human never intervenes.
    Naive,
    /// Planner given the true human model as its only particle.
    Ideal,
    /// The human's own policy, no planner involved.
    Human,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Centaur, Mode::Naive, Mode::Ideal, Mode::Human];

    pub fn name(&self) -> &'static str {
        match self {
            Mode::Centaur => "centaur",
            Mode::Naive => "naive",
            Mode::Ideal => "ideal",
            Mode::Human => "human",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown mode `{s}`")))
    }
}

fn d_foodtruck_planner() -> PlannerConfig {
    PlannerConfig { iterations: 10_000, heuristic: "vegan_distance".into(), ..Default::default() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FoodTruckParams {
    /// `None` uses the shipped layout.
    pub layout: Option<FoodTruckLayout>,
    pub gamma: f64,
    pub c_h: f64,
    pub c_m: f64,
    /// The machine's discount.
    pub lambda: f64,
    pub horizon: usize,
    pub episodes: usize,
    pub lambda_grid: usize,
    pub prior_low: usize,
    pub prior_high: usize,
    pub prior_c_values: Vec<f64>,
    pub planner: PlannerConfig,
    pub perturbation_scale: f64,
}

impl Default for FoodTruckParams {
    fn default() -> Self {
        Self {
            layout: None,
            gamma: 7.5,
            c_h: 0.21,
            c_m: 0.05,
            lambda: 0.95,
            horizon: 50,
            episodes: 20,
            lambda_grid: 101,
            prior_low: 200,
            prior_high: 200,
            prior_c_values: FOOD_TRUCK_C_VALUES.to_vec(),
            planner: d_foodtruck_planner(),
            perturbation_scale: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FoodShelterParams {
    pub config: FoodShelterConfig,
    /// Noise overestimation of whichever agent is wrong.
    pub epsilon: f64,
    pub c_h: f64,
    pub c_m: f64,
    /// Discount of both agents' STMs and of the search.
    pub lambda: f64,
    pub horizon: usize,
    pub prior_eps: usize,
    pub prior_eps_max: f64,
    pub prior_c: usize,
    pub prior_c_step: f64,
    pub planner: PlannerConfig,
    pub perturbation_scale: f64,
}

impl Default for FoodShelterParams {
    fn default() -> Self {
        Self {
            config: FoodShelterConfig::default(),
            epsilon: 0.45,
            c_h: 0.05,
            c_m: 0.2,
            lambda: 0.95,
            horizon: 100,
            prior_eps: 12,
            prior_eps_max: 0.45,
            prior_c: 100,
            prior_c_step: 0.005,
            planner: PlannerConfig { iterations: 2000, heuristic: "machine_q".into(), ..Default::default() },
            perturbation_scale: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignmentParams {
    pub instances: usize,
    pub seed: u64,
    pub max_states: usize,
    pub max_obs: usize,
    pub eps_max: f64,
    pub mu: f64,
    /// Monte Carlo samples for the cross-check of each expectation (0 = off).
    pub mc_samples: usize,
}

impl Default for AlignmentParams {
    fn default() -> Self {
        Self { instances: 200, seed: 0, max_states: 5, max_obs: 5, eps_max: 0.2, mu: 1e-3, mc_samples: 0 }
    }
}

fn default_seeds() -> Vec<u64> {
    (0..19).collect()
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    /// Arms to run; empty means every arm (and must be empty for `alignment`).
    #[serde(default)]
    pub modes: Vec<Mode>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub food_truck: FoodTruckParams,
    #[serde(default)]
    pub food_shelter: FoodShelterParams,
    #[serde(default)]
    pub alignment: AlignmentParams,
    /// Where artefacts go; `None` runs in memory only.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Seeds played concurrently. Every seed is self-contained, so results do
    /// not depend on this.
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Directory of solved particle caches.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            modes: Vec::new(),
            seeds: default_seeds(),
            food_truck: FoodTruckParams::default(),
            food_shelter: FoodShelterParams::default(),
            alignment: AlignmentParams::default(),
            output_dir: None,
            workers: 1,
            cache_dir: None,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.experiment == Experiment::Alignment {
            if !self.modes.is_empty() {
                return Err(Error::InvalidSpec("the alignment experiment has no modes".into()));
            }
            let a = &self.alignment;
            if a.instances == 0 || a.max_states < 2 || a.max_obs < 2 || !(a.mu > 0.0 && a.mu * 2.0 <= 1.0) {
                return Err(Error::InvalidSpec("alignment needs instances >= 1, >= 2 states/observations and mu in (0, 0.5]".into()));
            }
            return Ok(());
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidSpec("no seeds".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidSpec("workers must be at least 1".into()));
        }
        let mut seen = self.modes.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.modes.len() {
            return Err(Error::InvalidSpec("a mode is listed twice".into()));
        }
        match self.experiment {
            Experiment::Foodtruck => {
                let p = &self.food_truck;
                p.planner.validate()?;
                if p.episodes == 0 || p.horizon == 0 || !(p.c_m >= 0.0) || !(p.c_h >= 0.0) || !(p.gamma > 0.0) {
                    return Err(Error::InvalidSpec("food truck needs episodes, horizon >= 1, gamma > 0 and non-negative costs".into()));
                }
            }
            _ => {
                let p = &self.food_shelter;
                p.planner.validate()?;
                if p.horizon == 0 || !(p.c_m >= 0.0) || !(p.c_h >= 0.0) || !(p.lambda > 0.0 && p.lambda < 1.0) {
                    return Err(Error::InvalidSpec("food shelter needs horizon >= 1, lambda in (0, 1) and non-negative costs".into()));
                }
            }
        }
        Ok(())
    }

    pub fn modes(&self) -> Vec<Mode> {
        if self.modes.is_empty() {
            Mode::ALL.to_vec()
        } else {
            self.modes.clone()
        }
    }
}

/// Everything an arm needs, built once per experiment.
pub struct Task {
    pub otm: Arc<TabularModel>,
    pub stm_m: SubjectiveTaskModel,
    pub stm_h: SubjectiveTaskModel,
    pub solver: Arc<dyn ParticleSolver>,
    pub prior_grid: Vec<ParticleParams>,
    pub true_params: ParticleParams,
    pub heuristic: Vec<f64>,
    pub planner: PlannerConfig,
    pub c_m: f64,
    pub horizon: usize,
    pub start: usize,
    pub episodes: usize,
    pub perturbation_scale: f64,
    /// Name of the particle cache file for this task family.
    pub cache_name: String,
    /// Describes the solver; a cache written under another key is stale.
    pub cache_key: String,
}

impl Task {
    pub fn centaur_config(&self) -> CentaurConfig {
        CentaurConfig {
            otm: self.otm.clone(),
            stm_m: self.stm_m.clone(),
            stm_h: self.stm_h.clone(),
            c_m: self.c_m,
            horizon: self.horizon,
            start_state: self.start,
        }
    }

    fn search_model(&self) -> Result<SearchModel> {
        SearchModel::new(self.stm_m.model_arc().clone(), self.c_m)
    }

    /// The true human's responses.
    pub fn true_table(&self) -> Result<OverrideTable> {
        OverrideTable::build(&self.stm_h)
    }
}

/// Builds the task of a (non-alignment) experiment.
pub fn build_task(spec: &ExperimentSpec) -> Result<Task> {
    match spec.experiment {
        Experiment::Foodtruck => {
            let p = &spec.food_truck;
            let layout = p.layout.clone().unwrap_or_else(FoodTruckLayout::default_layout);
            let truck = build_food_truck(&layout)?;
            let otm = Arc::new(truck.model.clone());
            let solver = HyperbolicParticles::new(otm.clone(), p.lambda_grid)?;
            let true_params = ParticleParams::Hyperbolic { gamma: p.gamma, c_h: p.c_h };
            let stm_h = solver.solve_model(&true_params)?.with_override_cost(p.c_h)?;
            let stm_m = SubjectiveTaskModel::new(otm.clone(), DiscountSpec::Exponential { lambda: p.lambda }, 0.0)?.solve()?;
            let heuristic =
                heuristic_values(&p.planner.heuristic, &HeuristicContext::FoodTruck { truck: &truck, lambda: p.lambda })?;
            let planner = PlannerConfig { lambda: p.lambda, ..p.planner.clone() };
            Ok(Task {
                otm,
                stm_m,
                stm_h,
                solver: Arc::new(solver),
                prior_grid: food_truck_prior_grid(p.prior_low, p.prior_high, &p.prior_c_values),
                true_params,
                heuristic,
                planner,
                c_m: p.c_m,
                horizon: p.horizon,
                start: truck.start,
                episodes: p.episodes,
                perturbation_scale: p.perturbation_scale,
                cache_name: "foodtruck".into(),
                cache_key: format!("foodtruck|grid={}|layout={}", p.lambda_grid, serde_json::to_string(&layout)?),
            })
        }
        Experiment::Alignment => Err(Error::InvalidSpec("the alignment experiment has no task".into())),
        e => {
            let p = &spec.food_shelter;
            let (eps_m, eps_h) = match e {
                Experiment::Foodshelter => (0.0, p.epsilon),
                Experiment::FoodshelterSwapped => (p.epsilon, 0.0),
                _ => (0.0, 0.0),
            };
            let space = FoodShelterSpace::new(&p.config)?;
            let otm = Arc::new(space.build(&space.noise_profile(0.0)?)?);
            let solver = NoiseParticles::new(space.clone(), p.lambda);
            let true_params = ParticleParams::Noise { epsilon: eps_h, c_h: p.c_h };
            let stm_h = solver.solve_model(&true_params)?.with_override_cost(p.c_h)?;
            let stm_m = solver.solve_model(&ParticleParams::Noise { epsilon: eps_m, c_h: 0.0 })?;
            let heuristic = heuristic_values(
                &p.planner.heuristic,
                &HeuristicContext::Model { model: stm_m.model(), lambda: p.lambda },
            )?;
            let planner = PlannerConfig { lambda: p.lambda, ..p.planner.clone() };
            Ok(Task {
                otm,
                stm_m,
                stm_h,
                solver: Arc::new(solver),
                prior_grid: food_shelter_prior_grid(p.prior_eps, p.prior_eps_max, p.prior_c, p.prior_c_step),
                true_params,
                heuristic,
                planner,
                c_m: p.c_m,
                horizon: p.horizon,
                start: space.start_state(),
                episodes: 1,
                perturbation_scale: p.perturbation_scale,
                cache_name: "foodshelter".into(),
                cache_key: format!("foodshelter|lambda={}|config={}", p.lambda, serde_json::to_string(&p.config)?),
            })
        }
    }
}

/// What one seed of one arm produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub logs: Vec<Vec<StepRecord>>,
    /// Episode returns.
    pub returns: Vec<f64>,
    /// Posterior mass on the true human's behavioural class after each
    /// filtering step (entry 0 is the prior); centaur arm only.
    pub true_class_mass: Vec<f64>,
    /// Posterior after each filtering step; centaur arm only.
    pub posterior: Vec<PosteriorSnapshot>,
    pub reinvigorations: usize,
}

impl SeedResult {
    pub fn overrides(&self, episode: usize) -> usize {
        self.logs[episode].iter().filter(|r| r.overridden()).count()
    }

    /// Cumulative return of the first episode after each step.
    pub fn cumulative(&self, horizon: usize) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(horizon);
        for t in 0..horizon {
            if let Some(r) = self.logs[0].get(t) {
                acc += r.r_m;
            }
            out.push(acc);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmResult {
    pub mode: Mode,
    pub seeds: Vec<SeedResult>,
}

impl ArmResult {
    /// Mean and standard error over seeds of the mean return of episodes
    /// `from..` (the last episode alone for single-episode tasks).
    pub fn final_stats(&self, from: usize) -> (f64, f64) {
        let per_seed: Vec<f64> = self
            .seeds
            .iter()
            .map(|s| {
                let tail = &s.returns[from.min(s.returns.len() - 1)..];
                tail.iter().sum::<f64>() / tail.len() as f64
            })
            .collect();
        mean_se(&per_seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub experiment: Experiment,
    pub arms: Vec<ArmResult>,
    pub bounds: Vec<(usize, BoundReport)>,
    /// Draws rejected by the alignment run because `γ(O_m) = 0`.
    pub rejected_instances: usize,
    pub summary: Vec<SummaryRow>,
    pub references: Vec<(String, f64)>,
}

impl ExperimentResult {
    pub fn arm(&self, mode: Mode) -> Option<&ArmResult> {
        self.arms.iter().find(|a| a.mode == mode)
    }

    /// The summary CSV exactly as written to disk.
    pub fn summary_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        write_summary_csv(&self.summary, &mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Sample mean and standard error (`sd / √n`, zero for a single value).
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Records the true-class posterior mass after every filtering step.
struct Tracked<'a> {
    inner: &'a mut CentaurMachine,
    truth: &'a OverrideTable,
    mass: &'a mut Vec<f64>,
}

impl MachineAgent for Tracked<'_> {
    fn begin_episode(&mut self, start: usize) -> Result<()> {
        self.inner.begin_episode(start)
    }

    fn propose(&mut self, state: usize, t: usize) -> Result<usize> {
        self.inner.propose(state, t)
    }

    fn observe(&mut self, record: &StepRecord) -> Result<()> {
        self.inner.observe(record)?;
        let truth = self.truth;
        self.mass.push(self.inner.belief.mass_where(|p| *p.table == *truth));
        Ok(())
    }
}

/// Episode 0 of a seed uses the seed itself as its environment stream.
fn episode_seed(seed: u64, episode: usize) -> u64 {
    seed ^ ((episode as u64) << 32)
}

/// Plays every episode of one seed of one arm.
pub fn run_seed(task: &Task, mode: Mode, prior: &ParticleBelief, seed: u64) -> Result<SeedResult> {
    let cfg = task.centaur_config();
    let mut logs = Vec::with_capacity(task.episodes);
    let mut true_class_mass = Vec::new();
    let mut posterior = Vec::new();
    let mut reinvigorations = 0;
    if mode == Mode::Human {
        let mut machine = FixedPolicyMachine { policy: task.stm_h.policy()? };
        for e in 0..task.episodes {
            logs.push(run_episode(&cfg, &mut machine, episode_seed(seed, e))?);
        }
    } else {
        let belief = match mode {
            Mode::Centaur => prior.clone(),
            Mode::Ideal => init_particles(&[task.true_params], task.solver.as_ref())?,
            _ => {
                let never = OverrideTable::never(task.otm.n_states(), task.otm.n_actions());
                let params = task.true_params.with_values(task.true_params.model_param(), f64::INFINITY);
                ParticleBelief::single(StmParticle::from_table(0, params, 1.0, never))
            }
        };
        let mut machine =
            CentaurMachine::new(task.search_model()?, task.heuristic.clone(), task.planner.clone(), belief, task.horizon, seed)?;
        match mode {
            Mode::Naive => {
                machine.learn = false;
                for e in 0..task.episodes {
                    logs.push(run_episode(&cfg, &mut machine, episode_seed(seed, e))?);
                }
            }
            Mode::Ideal => {
                for e in 0..task.episodes {
                    logs.push(run_episode(&cfg, &mut machine, episode_seed(seed, e))?);
                }
            }
            _ => {
                machine = machine.with_snapshots();
                if task.perturbation_scale > 0.0 {
                    machine = machine.with_reinvigoration(task.solver.clone(), task.perturbation_scale);
                }
                let truth = task.true_table()?;
                true_class_mass.push(machine.belief.mass_where(|p| *p.table == truth));
                for e in 0..task.episodes {
                    let mut tracked = Tracked { inner: &mut machine, truth: &truth, mass: &mut true_class_mass };
                    logs.push(run_episode(&cfg, &mut tracked, episode_seed(seed, e))?);
                }
                reinvigorations = machine.reinvigorations;
                posterior = std::mem::take(&mut machine.snapshots);
            }
        }
    }
    Ok(SeedResult {
        seed,
        returns: logs.iter().map(|l| episode_return(l)).collect(),
        logs,
        true_class_mass,
        posterior,
        reinvigorations,
    })
}

fn write_seed_files(dir: &Path, result: &SeedResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (e, log) in result.logs.iter().enumerate() {
        write_episode_csv(log, fs::File::create(dir.join(format!("episode_{e}.csv")))?)?;
    }
    if !result.posterior.is_empty() {
        write_posterior_csv(&result.posterior, fs::File::create(dir.join("posterior.csv"))?)?;
        let mut w = csv::Writer::from_path(dir.join("true_class.csv"))?;
        w.write_record(["step", "mass"])?;
        for (step, m) in result.true_class_mass.iter().enumerate() {
            w.write_record([step.to_string(), format!("{m:.10}")])?;
        }
        w.flush()?;
    }
    Ok(())
}

/// Per-index summary rows of one arm.
pub fn summarize_arm(arm: &ArmResult, episodes: usize, horizon: usize) -> Vec<SummaryRow> {
    let series: Vec<Vec<f64>> = if episodes > 1 {
        arm.seeds.iter().map(|s| s.returns.clone()).collect()
    } else {
        arm.seeds.iter().map(|s| s.cumulative(horizon)).collect()
    };
    let len = series.first().map_or(0, |s| s.len());
    let mut rows = Vec::with_capacity(len);
    let mut running = 0.0;
    for i in 0..len {
        let col: Vec<f64> = series.iter().map(|s| s[i]).collect();
        let (mean, se) = mean_se(&col);
        running += mean;
        let overrides = if episodes > 1 {
            arm.seeds.iter().map(|s| s.overrides(i)).sum()
        } else {
            arm.seeds.iter().filter(|s| s.logs[0].get(i).is_some_and(|r| r.overridden())).count()
        };
        rows.push(SummaryRow {
            arm: arm.mode.name().to_string(),
            index: i + 1,
            mean,
            se,
            running_mean: running / (i + 1) as f64,
            overrides,
            n: col.len(),
        });
    }
    rows
}

pub fn write_summary_csv<W: std::io::Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["arm", "index", "mean", "se", "running_mean", "overrides", "n"])?;
    for r in rows {
        w.write_record([
            r.arm.clone(),
            r.index.to_string(),
            format!("{:.10}", r.mean),
            format!("{:.10}", r.se),
            format!("{:.10}", r.running_mean),
            r.overrides.to_string(),
            r.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Deterministic reference returns of a Food Truck task: the machine alone,
/// the human alone, and the exact best response to the true human.
pub fn reference_returns(task: &Task) -> Result<Vec<(String, f64)>> {
    let cfg = task.centaur_config();
    let lambda = task.planner.lambda;
    let machine = greedy_policy(&value_iteration(task.stm_m.model(), lambda, DEFAULT_TOL)?);
    let best = greedy_policy(&best_response_q(task.stm_m.model(), &task.true_table()?, task.c_m, lambda, DEFAULT_TOL)?);
    let human = task.stm_h.policy()?;
    let mut out = Vec::new();
    for (name, policy) in [("machine_alone", machine), ("human_alone", human), ("best_response", best)] {
        let log = run_episode(&cfg, &mut FixedPolicyMachine { policy }, 0)?;
        out.push((name.to_string(), episode_return(&log)));
    }
    Ok(out)
}

#[derive(Serialize)]
struct Metadata<'a> {
    spec: &'a ExperimentSpec,
    crate_version: &'static str,
    workers: usize,
    deterministic: bool,
    cache: Option<CacheStatus>,
    rejected_instances: usize,
}

fn write_metadata(spec: &ExperimentSpec, cache: Option<CacheStatus>, rejected: usize) -> Result<()> {
    if let Some(dir) = &spec.output_dir {
        fs::create_dir_all(dir)?;
        let meta = Metadata {
            spec,
            crate_version: env!("CARGO_PKG_VERSION"),
            workers: spec.workers,
            // seeds are independent and each plays single-threaded
            deterministic: true,
            cache,
            rejected_instances: rejected,
        };
        fs::write(dir.join("metadata.json"), serde_json::to_string_pretty(&meta)?)?;
    }
    Ok(())
}

/// Runs the experiment and writes its artefacts.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    if spec.experiment == Experiment::Alignment {
        return run_alignment(spec);
    }
    let task = build_task(spec)?;
    let modes = spec.modes();
    let (prior, cache) = if modes.contains(&Mode::Centaur) {
        let (b, status) = load_or_solve_particles(&task, spec.cache_dir.as_deref())?;
        (b, status)
    } else {
        // never used; any single particle will do
        let never = OverrideTable::never(task.otm.n_states(), task.otm.n_actions());
        (ParticleBelief::single(StmParticle::from_table(0, task.true_params, 1.0, never)), None)
    };
    write_metadata(spec, cache, 0)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| Error::InvalidSpec(format!("thread pool: {e}")))?;
    let mut arms = Vec::new();
    for &mode in &modes {
        info!("{}: running arm {} over {} seeds", spec.experiment.name(), mode.name(), spec.seeds.len());
        let seeds: Vec<SeedResult> = pool.install(|| {
            spec.seeds
                .par_iter()
                .map(|&seed| {
                    let r = run_seed(&task, mode, &prior, seed)?;
                    if let Some(dir) = &spec.output_dir {
                        write_seed_files(&dir.join(mode.name()).join(format!("seed_{seed}")), &r)?;
                    }
                    Ok(r)
                })
                .collect::<Result<Vec<_>>>()
        })?;
        arms.push(ArmResult { mode, seeds });
    }
    let mut summary = Vec::new();
    for arm in &arms {
        summary.extend(summarize_arm(arm, task.episodes, task.horizon));
    }
    let references = if spec.experiment == Experiment::Foodtruck { reference_returns(&task)? } else { Vec::new() };
    let result = ExperimentResult {
        experiment: spec.experiment,
        arms,
        bounds: Vec::new(),
        rejected_instances: 0,
        summary,
        references,
    };
    if let Some(dir) = &spec.output_dir {
        write_summary_csv(&result.summary, fs::File::create(dir.join("summary.csv"))?)?;
        if !result.references.is_empty() {
            let mut w = csv::Writer::from_path(dir.join("references.csv"))?;
            w.write_record(["name", "return"])?;
            for (name, r) in &result.references {
                w.write_record([name.clone(), format!("{r:.10}")])?;
            }
            w.flush()?;
        }
        let title = format!("{} ({} seeds)", spec.experiment.name(), spec.seeds.len());
        fs::write(dir.join("summary.svg"), render_summary_svg(&result.summary, &result.references, &title)?)?;
    }
    Ok(result)
}

/// Draws random instances meeting the bound's hypotheses (floored beliefs,
/// bounded `ε_O`, informative true observations) and checks each.
fn run_alignment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    let a = &spec.alignment;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut bounds = Vec::with_capacity(a.instances);
    let mut rejected = 0;
    while bounds.len() < a.instances {
        let inst = random_instance(&mut rng, a.max_states, a.max_obs, a.eps_max, a.mu)?;
        if value_of_observation(&inst.hmm.observation_true)?.gamma <= 0.0 {
            rejected += 1;
            continue;
        }
        let id = bounds.len();
        let report =
            alignment_bound_check(&inst.hmm, &inst.b_m, &inst.b_h, a.mu, FloorMode::Require, a.mc_samples, a.seed ^ id as u64)?;
        bounds.push((id, report));
    }
    write_metadata(spec, None, rejected)?;
    if let Some(dir) = &spec.output_dir {
        write_bound_csv(&bounds, fs::File::create(dir.join("bounds.csv"))?)?;
    }
    Ok(ExperimentResult {
        experiment: Experiment::Alignment,
        arms: Vec::new(),
        bounds,
        rejected_instances: rejected,
        summary: Vec::new(),
        references: Vec::new(),
    })
}
