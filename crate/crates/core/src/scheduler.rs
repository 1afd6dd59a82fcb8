//! Ordering of the UAV's onboard task queue.
//!
//! All schedulers minimize (or heuristically reduce) the total in-queue
//! waiting time on a single non-preemptive processor. Simulated annealing
//! searches permutations with pairwise swaps and returns the best visited
//! order; FCFS, SJF and PS are stable sorts on one key.

use crate::model::ComputeTask;
use crate::seed;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("cannot schedule an empty queue")]
    EmptyQueue,
    #[error("schedule of length {got} does not match queue of length {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("schedule is not a permutation of 0..{0}")]
    NotAPermutation(usize),
    #[error("invalid annealing config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub task: ComputeTask,
    /// Time the task entered the queue, seconds.
    pub enqueue_time: f64,
    /// Compute delay on the UAV processor, seconds.
    pub processing_time: f64,
}

/// A permutation of queue indices; position `j` holds the index run `j`-th.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule(Vec<usize>);

impl Schedule {
    pub fn new(order: Vec<usize>) -> Result<Self, ScheduleError> {
        let n = order.len();
        let mut seen = vec![false; n];
        for &i in &order {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(ScheduleError::NotAPermutation(n));
            }
        }
        Ok(Self(order))
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn order(&self) -> &[usize] {
        &self.0
    }

    pub fn into_order(self) -> Vec<usize> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerKind {
    #[default]
    Sa,
    Fcfs,
    Sjf,
    Ps,
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Sa => "sa",
            Self::Fcfs => "fcfs",
            Self::Sjf => "sjf",
            Self::Ps => "ps",
        })
    }
}

impl FromStr for SchedulerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sa" => Ok(Self::Sa),
            "fcfs" => Ok(Self::Fcfs),
            "sjf" => Ok(Self::Sjf),
            "ps" => Ok(Self::Ps),
            other => Err(format!("unknown scheduler `{other}` (expected sa, fcfs, sjf or ps)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaConfig {
    pub t_init: f64,
    pub t_min: f64,
    /// Geometric cooling factor applied after each outer iteration.
    pub cooling: f64,
    pub max_iters: usize,
    /// Swap proposals per temperature level.
    pub inner_moves: usize,
    pub rng_seed: u64,
}

impl Default for SaConfig {
    fn default() -> Self {
        Self { t_init: 10.0, t_min: 1e-6, cooling: 0.95, max_iters: 200, inner_moves: 20, rng_seed: 0 }
    }
}

impl SaConfig {
    pub fn validate(&self) -> Result<(), ScheduleError> {
        if !(self.t_min > 0.0 && self.t_min < self.t_init) {
            return Err(ScheduleError::InvalidConfig("require 0 < t_min < t_init"));
        }
        if !(self.cooling > 0.0 && self.cooling < 1.0) {
            return Err(ScheduleError::InvalidConfig("require 0 < cooling < 1"));
        }
        if self.inner_moves == 0 {
            return Err(ScheduleError::InvalidConfig("inner_moves must be at least 1"));
        }
        Ok(())
    }
}

fn check_len(queue: &[QueueEntry], sched: &Schedule) -> Result<(), ScheduleError> {
    if queue.len() != sched.len() {
        return Err(ScheduleError::LengthMismatch { expected: queue.len(), got: sched.len() });
    }
    Ok(())
}

/// Total waiting time when the processor is free from `available_at`.
fn waiting_time(queue: &[QueueEntry], order: &[usize], available_at: f64) -> f64 {
    let mut clock = available_at;
    let mut total = 0.0;
    for &i in order {
        let e = &queue[i];
        let start = clock.max(e.enqueue_time);
        total += start - e.enqueue_time;
        clock = start + e.processing_time;
    }
    total
}

/// Sum of waits `start - enqueue_time` under serial execution from time 0.
pub fn schedule_cost(queue: &[QueueEntry], sched: &Schedule) -> Result<f64, ScheduleError> {
    schedule_cost_from(queue, sched, 0.0)
}

/// As [`schedule_cost`], with the processor busy until `available_at`.
pub fn schedule_cost_from(
    queue: &[QueueEntry],
    sched: &Schedule,
    available_at: f64,
) -> Result<f64, ScheduleError> {
    check_len(queue, sched)?;
    Ok(waiting_time(queue, sched.order(), available_at))
}

pub fn sa_schedule(queue: &[QueueEntry], cfg: &SaConfig) -> Result<Schedule, ScheduleError> {
    sa_schedule_from(queue, cfg, 0.0)
}

/// Simulated annealing over permutations, seeded by `cfg.rng_seed`.
pub fn sa_schedule_from(
    queue: &[QueueEntry],
    cfg: &SaConfig,
    available_at: f64,
) -> Result<Schedule, ScheduleError> {
    if queue.is_empty() {
        return Err(ScheduleError::EmptyQueue);
    }
    cfg.validate()?;
    let n = queue.len();
    if n == 1 {
        return Ok(Schedule::identity(1));
    }
    let mut rng = seed::rng(cfg.rng_seed);
    let cost = |x: &[usize]| waiting_time(queue, x, available_at);

    let mut current: Vec<usize> = (0..n).collect();
    current.shuffle(&mut rng);
    let mut current_cost = cost(&current);
    let mut best = current.clone();
    let mut best_cost = current_cost;

    let mut temperature = cfg.t_init;
    let mut iter = 0;
    while temperature > cfg.t_min && iter < cfg.max_iters {
        for _ in 0..cfg.inner_moves {
            let i = rng.random_range(0..n);
            let j = (i + rng.random_range(1..n)) % n;
            current.swap(i, j);
            let candidate_cost = cost(&current);
            let delta = candidate_cost - current_cost;
            let accept = delta < 0.0 || (-delta / temperature).exp() >= rng.random::<f64>();
            if accept {
                current_cost = candidate_cost;
                if current_cost < best_cost {
                    best_cost = current_cost;
                    best.copy_from_slice(&current);
                }
            } else {
                current.swap(i, j);
            }
        }
        temperature *= cfg.cooling;
        iter += 1;
    }
    Ok(Schedule(best))
}

fn stable_sort_by<K, F>(queue: &[QueueEntry], key: F) -> Result<Schedule, ScheduleError>
where
    F: Fn(&QueueEntry) -> K,
    K: Into<f64>,
{
    if queue.is_empty() {
        return Err(ScheduleError::EmptyQueue);
    }
    let mut order: Vec<usize> = (0..queue.len()).collect();
    order.sort_by(|&a, &b| key(&queue[a]).into().total_cmp(&key(&queue[b]).into()));
    Ok(Schedule(order))
}

/// First come, first served: ascending enqueue time.
pub fn fcfs_schedule(queue: &[QueueEntry]) -> Result<Schedule, ScheduleError> {
    stable_sort_by(queue, |e| e.enqueue_time)
}

/// Shortest job first: ascending processing time.
pub fn sjf_schedule(queue: &[QueueEntry]) -> Result<Schedule, ScheduleError> {
    stable_sort_by(queue, |e| e.processing_time)
}

/// Priority scheduling: largest total cycle demand `O * mu` first.
pub fn priority_schedule(queue: &[QueueEntry]) -> Result<Schedule, ScheduleError> {
    stable_sort_by(queue, |e| -e.task.cycles())
}

/// Dispatches to the configured scheduler. `seed` overrides `sa.rng_seed`.
pub fn order_queue(
    kind: SchedulerKind,
    queue: &[QueueEntry],
    available_at: f64,
    sa: &SaConfig,
    seed: u64,
) -> Result<Schedule, ScheduleError> {
    match kind {
        SchedulerKind::Sa => sa_schedule_from(queue, &SaConfig { rng_seed: seed, ..*sa }, available_at),
        SchedulerKind::Fcfs => fcfs_schedule(queue),
        SchedulerKind::Sjf => sjf_schedule(queue),
        SchedulerKind::Ps => priority_schedule(queue),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn entry(enqueue_time: f64, processing_time: f64) -> QueueEntry {
        QueueEntry {
            task: ComputeTask::new(0, processing_time * 1e6, 1000.0, 0.0).unwrap(),
            enqueue_time,
            processing_time,
        }
    }

    fn queue(times: &[f64]) -> Vec<QueueEntry> {
        times.iter().map(|&p| entry(0.0, p)).collect()
    }

    fn brute_force_optimum(q: &[QueueEntry]) -> f64 {
        fn rec(q: &[QueueEntry], prefix: &mut Vec<usize>, used: &mut [bool], best: &mut f64) {
            if prefix.len() == q.len() {
                *best = best.min(waiting_time(q, prefix, 0.0));
                return;
            }
            for i in 0..q.len() {
                if !used[i] {
                    used[i] = true;
                    prefix.push(i);
                    rec(q, prefix, used, best);
                    prefix.pop();
                    used[i] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(q, &mut Vec::new(), &mut vec![false; q.len()], &mut best);
        best
    }

    #[test]
    fn cost_examples() {
        let q = queue(&[3.0, 1.0, 2.0]);
        assert_eq!(schedule_cost(&q, &Schedule::new(vec![0, 1, 2]).unwrap()).unwrap(), 7.0);
        assert_eq!(schedule_cost(&q, &Schedule::new(vec![1, 2, 0]).unwrap()).unwrap(), 4.0);
        assert_eq!(schedule_cost(&queue(&[5.0]), &Schedule::identity(1)).unwrap(), 0.0);
        assert_eq!(
            schedule_cost(&q, &Schedule::identity(2)),
            Err(ScheduleError::LengthMismatch { expected: 3, got: 2 })
        );
    }

    #[test]
    fn cost_respects_release_times() {
        // Second task arrives after the processor went idle.
        let q = vec![entry(0.0, 1.0), entry(5.0, 1.0)];
        assert_eq!(schedule_cost(&q, &Schedule::identity(2)).unwrap(), 0.0);
        assert_eq!(schedule_cost_from(&q, &Schedule::identity(2), 2.0).unwrap(), 2.0);
    }

    #[test]
    fn schedule_rejects_non_permutations() {
        assert!(Schedule::new(vec![0, 0]).is_err());
        assert!(Schedule::new(vec![1, 2]).is_err());
        assert!(Schedule::new(vec![1, 0]).is_ok());
    }

    #[test]
    fn sa_examples() {
        assert_eq!(sa_schedule(&queue(&[2.0]), &SaConfig::default()).unwrap(), Schedule::identity(1));
        let q = queue(&[3.0, 1.0, 2.0]);
        let cfg = SaConfig { t_init: 10.0, cooling: 0.95, inner_moves: 20, max_iters: 200, ..SaConfig::default() };
        let s = sa_schedule(&q, &cfg).unwrap();
        assert_eq!(brute_force_optimum(&q), 4.0);
        assert_eq!(schedule_cost(&q, &s).unwrap(), 4.0);
        assert_eq!(sa_schedule(&[], &cfg), Err(ScheduleError::EmptyQueue));
    }

    #[test]
    fn sa_is_deterministic_per_seed() {
        let q = queue(&[3.0, 1.0, 2.0, 7.0, 0.5, 4.0]);
        let cfg = SaConfig { rng_seed: 11, max_iters: 3, ..SaConfig::default() };
        assert_eq!(sa_schedule(&q, &cfg).unwrap(), sa_schedule(&q, &cfg).unwrap());
    }

    #[test]
    fn sa_never_worse_than_its_start() {
        // A budget of one proposal still returns the best of start and proposal.
        let q = queue(&[3.0, 1.0, 2.0, 7.0, 0.5, 4.0]);
        for s in 0..20 {
            let cfg = SaConfig { rng_seed: s, max_iters: 1, inner_moves: 1, ..SaConfig::default() };
            let mut rng = seed::rng(s);
            let mut start: Vec<usize> = (0..q.len()).collect();
            start.shuffle(&mut rng);
            let out = sa_schedule(&q, &cfg).unwrap();
            assert!(schedule_cost(&q, &out).unwrap() <= waiting_time(&q, &start, 0.0));
        }
    }

    #[test]
    fn sa_matches_brute_force_on_small_queues() {
        let cfg = SaConfig::default();
        let mut hits = 0;
        for trial in 0..20u64 {
            let mut rng = seed::rng(1000 + trial);
            let q: Vec<_> = (0..6).map(|_| entry(0.0, rng.random_range(0.5..5.0))).collect();
            let s = sa_schedule(&q, &SaConfig { rng_seed: trial, ..cfg }).unwrap();
            if (schedule_cost(&q, &s).unwrap() - brute_force_optimum(&q)).abs() < 1e-9 {
                hits += 1;
            }
        }
        assert!(hits >= 19, "{hits}/20");
    }

    #[test]
    fn sort_baselines() {
        let fcfs = fcfs_schedule(&[entry(5.0, 1.0), entry(1.0, 1.0), entry(3.0, 1.0)]).unwrap();
        assert_eq!(fcfs.order(), &[1, 2, 0]);
        assert_eq!(sjf_schedule(&queue(&[3.0, 1.0, 2.0])).unwrap().order(), &[1, 2, 0]);
        assert_eq!(sjf_schedule(&queue(&[2.0, 1.0, 2.0, 1.0])).unwrap().order(), &[1, 3, 0, 2]);
        assert_eq!(fcfs_schedule(&queue(&[9.0, 8.0, 7.0])).unwrap().order(), &[0, 1, 2]);
        assert_eq!(priority_schedule(&queue(&[3.0, 1.0, 2.0])).unwrap().order(), &[0, 2, 1]);
        assert_eq!(fcfs_schedule(&[]), Err(ScheduleError::EmptyQueue));
        assert_eq!(sjf_schedule(&[]), Err(ScheduleError::EmptyQueue));
        assert_eq!(priority_schedule(&[]), Err(ScheduleError::EmptyQueue));
    }

    #[test]
    fn invalid_sa_config() {
        let q = queue(&[1.0, 2.0]);
        for bad in [
            SaConfig { t_min: 20.0, ..SaConfig::default() },
            SaConfig { cooling: 1.0, ..SaConfig::default() },
            SaConfig { inner_moves: 0, ..SaConfig::default() },
        ] {
            assert!(matches!(sa_schedule(&q, &bad), Err(ScheduleError::InvalidConfig(_))));
        }
    }

    #[test]
    fn kind_parsing() {
        for k in [SchedulerKind::Sa, SchedulerKind::Fcfs, SchedulerKind::Sjf, SchedulerKind::Ps] {
            assert_eq!(k.to_string().parse::<SchedulerKind>().unwrap(), k);
        }
        assert!("lifo".parse::<SchedulerKind>().is_err());
    }

    fn sorted(mut v: Vec<usize>) -> Vec<usize> {
        v.sort_unstable();
        v
    }

    proptest! {
        #[test]
        fn sjf_beats_fcfs_with_equal_release(times in prop::collection::vec(0.01..10.0f64, 1..9)) {
            let q = queue(&times);
            let sjf = schedule_cost(&q, &sjf_schedule(&q).unwrap()).unwrap();
            let fcfs = schedule_cost(&q, &fcfs_schedule(&q).unwrap()).unwrap();
            prop_assert!(sjf <= fcfs + 1e-12);
        }

        #[test]
        fn all_schedulers_return_permutations(
            entries in prop::collection::vec((0.0..10.0f64, 0.01..10.0f64), 1..10),
            seed in any::<u64>(),
        ) {
            let q: Vec<_> = entries.iter().map(|&(e, p)| entry(e, p)).collect();
            let ident: Vec<usize> = (0..q.len()).collect();
            for kind in [SchedulerKind::Sa, SchedulerKind::Fcfs, SchedulerKind::Sjf, SchedulerKind::Ps] {
                let s = order_queue(kind, &q, 0.0, &SaConfig { max_iters: 5, ..SaConfig::default() }, seed).unwrap();
                prop_assert_eq!(sorted(s.into_order()), ident.clone());
            }
        }
    }
}
