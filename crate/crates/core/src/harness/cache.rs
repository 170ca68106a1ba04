//! On-disk cache of solved particle Q-tables.
//!
//! One JSON file per task family, holding one Q-table per distinct model
//! parameter of the prior grid and the key of the solver that produced them.
//! A file with another key, or one that fails to parse, is ignored with a
//! warning and overwritten.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_task, ExperimentSpec, Task};
use crate::error::{Error, Result};
use crate::planner::{init_particles, ParticleBelief, ParticleParams, StmParticle};
use crate::solvers::QTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheStatus {
    Hit,
    Miss,
    Stale,
    Corrupt,
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    key: String,
    /// Every particle of the prior, `id` being its index.
    particles: Vec<ParticleParams>,
    models: Vec<CachedModel>,
}

/// What [`solve_cache`] wrote.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheReport {
    pub path: PathBuf,
    pub particles: usize,
    /// Distinct solved models (particles sharing a model parameter share one).
    pub models: usize,
}

#[derive(Serialize, Deserialize)]
struct CachedModel {
    params: ParticleParams,
    q_table: QTable,
}

fn cache_path(dir: &Path, task: &Task) -> PathBuf {
    dir.join(format!("{}_particles.json", task.cache_name))
}

/// Distinct model parameters of the feasible grid, in grid order.
fn representatives(task: &Task) -> Vec<ParticleParams> {
    let mut reps: Vec<ParticleParams> = Vec::new();
    for p in task.prior_grid.iter().filter(|p| task.solver.feasible(p)) {
        if !reps.iter().any(|r| r.model_param().to_bits() == p.model_param().to_bits()) {
            reps.push(*p);
        }
    }
    reps
}

fn feasible_grid(task: &Task) -> Vec<ParticleParams> {
    task.prior_grid.iter().copied().filter(|p| task.solver.feasible(p)).collect()
}

fn write_cache(path: &Path, task: &Task) -> Result<CacheReport> {
    let models = representatives(task)
        .par_iter()
        .map(|p| {
            let stm = task.solver.solve_model(p)?;
            Ok(CachedModel { params: *p, q_table: stm.q_table()?.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    let file = CacheFile { key: task.cache_key.clone(), particles: feasible_grid(task), models };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_string(&file)?)?;
    Ok(CacheReport { path: path.to_path_buf(), particles: file.particles.len(), models: file.models.len() })
}

fn belief_from_cache(task: &Task, file: CacheFile) -> Result<ParticleBelief> {
    let feasible = feasible_grid(task);
    if file.particles != feasible {
        return Err(Error::InvalidSpec("cached particle list differs from the prior grid".into()));
    }
    let tables: Vec<(u64, Arc<QTable>)> =
        file.models.into_iter().map(|m| (m.params.model_param().to_bits(), Arc::new(m.q_table))).collect();
    let w = 1.0 / feasible.len() as f64;
    let particles = feasible
        .par_iter()
        .enumerate()
        .map(|(id, p)| {
            let q = tables
                .iter()
                .find(|(k, _)| *k == p.model_param().to_bits())
                .map(|(_, q)| q.clone())
                .ok_or_else(|| Error::InvalidSpec(format!("cache has no model for {p:?}")))?;
            let stm = task.solver.task_model(p)?.with_solution(q)?.with_override_cost(p.c_h())?;
            StmParticle::from_stm(id, *p, w, stm)
        })
        .collect::<Result<Vec<_>>>()?;
    ParticleBelief::new(particles)
}

/// The task's prior belief, read from `dir` when a matching cache is there
/// and solved (and cached) otherwise. Without a directory the prior is just
/// solved.
pub fn load_or_solve_particles(task: &Task, dir: Option<&Path>) -> Result<(ParticleBelief, Option<CacheStatus>)> {
    let Some(dir) = dir else {
        return Ok((init_particles(&task.prior_grid, task.solver.as_ref())?, None));
    };
    let path = cache_path(dir, task);
    let status = match fs::read_to_string(&path) {
        Err(_) => CacheStatus::Miss,
        Ok(text) => match serde_json::from_str::<CacheFile>(&text) {
            Err(e) => {
                warn!("particle cache {} is unreadable ({e}); re-solving", path.display());
                CacheStatus::Corrupt
            }
            Ok(file) if file.key != task.cache_key => {
                warn!("particle cache {} was built for another task; re-solving", path.display());
                CacheStatus::Stale
            }
            Ok(file) => match belief_from_cache(task, file) {
                Ok(belief) => {
                    info!("loaded {} particles from {}", belief.len(), path.display());
                    return Ok((belief, Some(CacheStatus::Hit)));
                }
                Err(e) => {
                    warn!("particle cache {} is incomplete ({e}); re-solving", path.display());
                    CacheStatus::Corrupt
                }
            },
        },
    };
    write_cache(&path, task)?;
    let file: CacheFile = serde_json::from_str(&fs::read_to_string(&path)?)?;
    Ok((belief_from_cache(task, file)?, Some(status)))
}

/// Makes sure the cache directory of `spec` holds its task's prior: loads it
/// when already there, solves and writes it otherwise.
pub fn solve_cache(spec: &ExperimentSpec) -> Result<(CacheReport, CacheStatus)> {
    spec.validate()?;
    let dir = spec.cache_dir.as_deref().ok_or_else(|| Error::InvalidSpec("solve-cache needs a cache_dir".into()))?;
    let task = build_task(spec)?;
    let (belief, status) = load_or_solve_particles(&task, Some(dir))?;
    let report = CacheReport {
        path: cache_path(dir, &task),
        particles: belief.len(),
        models: representatives(&task).len(),
    };
    Ok((report, status.unwrap_or(CacheStatus::Miss)))
}
