//! Evolutionary population loop around the weighted policy-gradient
//! learners, plus Pareto-front bookkeeping and analysis.
//!
//! [`run`] proceeds in three stages:
//!
//! 1. warm-up: one randomly initialized task per weight, trained for
//!    `warmup_iters` iterations and evaluated;
//! 2. evolution, per generation: pick the best population member for each
//!    weight, train the copies, prune the grown population with the
//!    performance buffers and merge the offspring into the archive;
//! 3. analysis ([`pareto_analysis`]) clusters the archive and joins each
//!    cluster into a polyline.

mod archive;
mod cluster;
mod select;

pub use archive::{
    crowding_distance, dominates, hypervolume, hypervolume_clipped, sparsity, ArchiveEntry, ExternalParetoArchive,
    ObjectivePoint,
};
pub use cluster::{interpolate, kmeans, pareto_analysis, Cluster, ClusteredFront, KMEANS_MAX_ITERS};
pub use select::{assign_buffers, auto_reference, best_for_weight, buffer_prune, init_weights, scaled, task_update, Member};

use crate::env::{EnvConfig, EnvError, UavMecEnv};
use crate::mopg::train::{evaluate, train_task, IterLog, LearnerConfig};
use crate::mopg::{MopgError, TaskTuple};
use crate::seed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvoError {
    #[error("invalid evolution config: {0}")]
    InvalidConfig(String),
    #[error("population is empty")]
    EmptyPopulation,
    #[error("point {point:?} does not dominate the reference {reference:?}")]
    ReferenceNotDominated { point: ObjectivePoint, reference: ObjectivePoint },
    #[error("worker pool: {0}")]
    Workers(String),
    #[error(transparent)]
    Mopg(#[from] MopgError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// How the hypervolume reference point is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum ReferencePoint {
    /// Worst warm-up objectives plus 10% of their range, then fixed.
    Auto,
    /// Fixed `(f1, f2)` in objective units (seconds, joules).
    Explicit { f1: f64, f2: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvoConfig {
    pub n_tasks: usize,
    pub warmup_iters: usize,
    pub generations: usize,
    pub buffer_size: usize,
    pub reference_point: ReferencePoint,
    pub kmeans_k: usize,
    /// Evaluation episodes per policy (deterministic actions).
    pub eval_episodes: usize,
    /// Archive size that triggers crowding-distance pruning; 0 disables.
    pub archive_cap: usize,
    /// Entries kept when the cap triggers.
    pub archive_keep: usize,
}

impl Default for EvoConfig {
    fn default() -> Self {
        Self {
            n_tasks: 10,
            warmup_iters: 60,
            generations: 500,
            buffer_size: 2,
            reference_point: ReferencePoint::Auto,
            kmeans_k: 3,
            eval_episodes: 3,
            archive_cap: 0,
            archive_keep: 50,
        }
    }
}

impl EvoConfig {
    pub fn validate(&self) -> Result<(), EvoError> {
        let bad = |m: &str| Err(EvoError::InvalidConfig(m.to_string()));
        if self.n_tasks < 2 {
            return bad("n_tasks must be at least 2");
        }
        if self.buffer_size == 0 {
            return bad("buffer_size must be at least 1");
        }
        if self.kmeans_k == 0 {
            return bad("kmeans_k must be at least 1");
        }
        if self.eval_episodes == 0 {
            return bad("eval_episodes must be at least 1");
        }
        if self.archive_cap > 0 && (self.archive_keep == 0 || self.archive_keep > self.archive_cap) {
            return bad("archive_keep must lie in 1..=archive_cap");
        }
        if let ReferencePoint::Explicit { f1, f2 } = self.reference_point {
            if !(f1.is_finite() && f2.is_finite()) {
                return bad("explicit reference point must be finite");
            }
        }
        Ok(())
    }

    /// Evaluation seeds shared by every policy and baseline of a run.
    pub fn eval_seeds(&self, master: u64) -> Vec<u64> {
        (0..self.eval_episodes as u64).map(|k| seed::derive(master, "eval", &[k])).collect()
    }
}

/// One row per trained task and generation (generation 0 is the warm-up).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub task_index: usize,
    pub weight: [f64; 2],
    /// `w . F` in scaled maximization coordinates.
    pub weighted_return: f64,
    pub f1: f64,
    pub f2: f64,
    pub archive_size: usize,
    pub hypervolume: f64,
    pub sparsity: Option<f64>,
}

/// One row per training iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub generation: usize,
    pub task_index: usize,
    pub iteration: usize,
    pub log: IterLog,
}

#[derive(Debug, Clone)]
pub struct EvoOutcome {
    pub archive: ExternalParetoArchive,
    pub population: Vec<Member>,
    pub generations: Vec<GenerationRecord>,
    pub training: Vec<TrainingRecord>,
    /// Pinned reference for hypervolume reporting.
    pub hv_reference: ObjectivePoint,
    /// Archive objective points after the warm-up and after each generation.
    pub archive_history: Vec<Vec<ObjectivePoint>>,
    pub hv_history: Vec<f64>,
    pub eval_seeds: Vec<u64>,
}

/// Called after the warm-up (generation 0) and every generation.
pub type Observer<'a> = &'a mut dyn FnMut(usize, &ExternalParetoArchive, f64);

struct Trained {
    task: TaskTuple,
    point: ObjectivePoint,
    logs: Vec<IterLog>,
}

fn train_one(
    mut task: TaskTuple,
    env_cfg: &EnvConfig,
    learner: &LearnerConfig,
    iters: usize,
    seed_: u64,
    eval_seeds: &[u64],
) -> Result<Trained, EvoError> {
    let mut env = UavMecEnv::new(env_cfg.clone())?;
    let logs = train_task(&mut task, &mut env, learner, iters, seed_)?;
    let f = evaluate(&task.policy, &mut env, eval_seeds)?;
    Ok(Trained { task, point: ObjectivePoint::new(f[0], f[1]), logs })
}

fn train_all(
    pool: Option<&rayon::ThreadPool>,
    tasks: Vec<TaskTuple>,
    seeds: Vec<u64>,
    env_cfg: &EnvConfig,
    learner: &LearnerConfig,
    iters: usize,
    eval_seeds: &[u64],
) -> Result<Vec<Trained>, EvoError> {
    let job = || {
        tasks
            .into_par_iter()
            .zip(seeds)
            .map(|(t, s)| train_one(t, env_cfg, learner, iters, s, eval_seeds))
            .collect::<Result<Vec<_>, _>>()
    };
    match pool {
        Some(p) => p.install(job),
        None => job(),
    }
}

pub fn run(cfg: &EvoConfig, env_cfg: &EnvConfig, learner: &LearnerConfig, seed_: u64, workers: usize) -> Result<EvoOutcome, EvoError> {
    run_observed(cfg, env_cfg, learner, seed_, workers, &mut |_, _, _| {})
}

/// [`run`] with a progress callback. `workers = 0` uses the global pool.
pub fn run_observed(
    cfg: &EvoConfig,
    env_cfg: &EnvConfig,
    learner: &LearnerConfig,
    seed_: u64,
    workers: usize,
    observer: Observer<'_>,
) -> Result<EvoOutcome, EvoError> {
    cfg.validate()?;
    env_cfg.validate()?;
    learner.validate()?;
    let pool = if workers > 0 {
        Some(rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| EvoError::Workers(e.to_string()))?)
    } else {
        None
    };
    let scale = learner.train.reward_scale;
    let weights = init_weights(cfg.n_tasks)?;
    let eval_seeds = cfg.eval_seeds(seed_);
    let obs_dim = env_cfg.observation_dim();

    let mut archive = ExternalParetoArchive::new();
    let mut generations = Vec::new();
    let mut training = Vec::new();
    let mut archive_history = Vec::new();
    let mut hv_history = Vec::new();

    // warm-up
    let init: Vec<TaskTuple> = weights
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let mut rng = seed::child_rng(seed_, "init", &[i as u64]);
            TaskTuple::new_random(*w, obs_dim, &learner.train.hidden, learner.tdl.phi, learner.ppo.lr, &mut rng)
        })
        .collect::<Result<_, _>>()?;
    let seeds = (0..cfg.n_tasks as u64).map(|i| seed::derive(seed_, "warmup", &[i])).collect();
    let trained = train_all(pool.as_ref(), init, seeds, env_cfg, learner, cfg.warmup_iters, &eval_seeds)?;
    let mut population: Vec<Member> = Vec::new();
    let mut offspring = Vec::new();
    for (i, t) in trained.into_iter().enumerate() {
        for (k, log) in t.logs.into_iter().enumerate() {
            training.push(TrainingRecord { generation: 0, task_index: i, iteration: k, log });
        }
        offspring.push(Member { task: t.task, point: t.point, generation: 0, task_index: i });
    }
    let hv_reference = match cfg.reference_point {
        ReferencePoint::Auto => {
            let pts: Vec<[f64; 2]> = offspring.iter().map(|m| m.point.max_coords()).collect();
            ObjectivePoint::from_max_coords(auto_reference(&pts))
        }
        ReferencePoint::Explicit { f1, f2 } => ObjectivePoint::new(f1, f2),
    };

    for generation in 0..=cfg.generations {
        if generation > 0 {
            let tasks = task_update(&weights, &population, scale)?;
            let seeds = (0..cfg.n_tasks as u64).map(|i| seed::derive(seed_, "generation", &[generation as u64, i])).collect();
            let trained = train_all(pool.as_ref(), tasks, seeds, env_cfg, learner, cfg.warmup_iters, &eval_seeds)?;
            offspring = Vec::with_capacity(trained.len());
            for (i, t) in trained.into_iter().enumerate() {
                for (k, log) in t.logs.into_iter().enumerate() {
                    training.push(TrainingRecord { generation, task_index: i, iteration: k, log });
                }
                offspring.push(Member { task: t.task, point: t.point, generation, task_index: i });
            }
        }
        archive.update(offspring.iter().map(|m| ArchiveEntry {
            point: m.point,
            weight: m.task.weight,
            generation,
            task_index: m.task_index,
            task: m.task.clone(),
        }));
        archive.cap(cfg.archive_cap, cfg.archive_keep);
        let hv = hypervolume_clipped(&archive.points(), &hv_reference);
        let sp = sparsity(&archive.points());
        for m in &offspring {
            generations.push(GenerationRecord {
                generation,
                task_index: m.task_index,
                weight: m.task.weight.as_array(),
                weighted_return: m.task.weight.dot(scaled(&m.point, scale)),
                f1: m.point.f1,
                f2: m.point.f2,
                archive_size: archive.len(),
                hypervolume: hv,
                sparsity: sp,
            });
        }
        population.append(&mut offspring);
        let pts: Vec<[f64; 2]> = population.iter().map(|m| scaled(&m.point, scale)).collect();
        let z_ref = auto_reference(&pts);
        population = buffer_prune(&population, &pts, &weights, z_ref, cfg.buffer_size);
        archive_history.push(archive.points());
        hv_history.push(hv);
        observer(generation, &archive, hv);
    }

    Ok(EvoOutcome { archive, population, generations, training, hv_reference, archive_history, hv_history, eval_seeds })
}
