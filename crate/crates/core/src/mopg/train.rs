//! On-policy collection, iteration loop and deterministic evaluation.

use super::{mopg_ppo_update, tdl_update, MopgError, PpoConfig, TaskTuple, TdlConfig, UpdateRule, UpdateStats};
use crate::env::{decode_action, encode_state, rollout_in, ActionSource, ActionTuple, EnvState, EpisodeLedger, UavMecEnv};
use crate::model::UavLimits;
use crate::nn::{GaussianPolicy, TransitionBatch};
use crate::seed;
use crate::N_OBJECTIVES;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Which per-slot signal the learner optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardSignal {
    /// The environment reward `(-D_t, -E_t)` as emitted.
    Slot,
    /// Per-slot increments of the episode objectives, including device
    /// waits, queue waits and flight energy; penalties unchanged.
    Objective,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub reward_signal: RewardSignal,
    /// Per-objective divisor applied to rewards and to objective points
    /// used for selection.
    pub reward_scale: [f64; N_OBJECTIVES],
    /// Hidden widths of the policy heads and the critic.
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { reward_signal: RewardSignal::Objective, reward_scale: [1.0, 100.0], hidden: vec![64, 64] }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), MopgError> {
        if self.reward_scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(MopgError::InvalidConfig("train.reward_scale must be positive".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(MopgError::InvalidConfig("train.hidden needs at least one non-zero width".into()));
        }
        Ok(())
    }

    pub fn scale(&self, v: [f64; N_OBJECTIVES]) -> [f64; N_OBJECTIVES] {
        [v[0] / self.reward_scale[0], v[1] / self.reward_scale[1]]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    pub rule: UpdateRule,
    pub ppo: PpoConfig,
    pub tdl: TdlConfig,
    pub train: TrainConfig,
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), MopgError> {
        self.ppo.validate()?;
        self.tdl.validate()?;
        self.train.validate()
    }
}

/// Affine map from the policy's output to the environment's action box,
/// followed by clipping: `u = 0` lands in the middle of every range.
pub fn action_from_output(u: &[f64], limits: &UavLimits) -> ActionTuple {
    decode_action([PI * (1.0 + u[0]), 0.5 * limits.d_max() * (1.0 + u[1]), 0.5 * (1.0 + u[2])], limits)
}

/// Plays the policy's mean action.
pub struct MeanPolicy<'a>(pub &'a GaussianPolicy);

impl ActionSource for MeanPolicy<'_> {
    fn act(&mut self, state: &EnvState, env: &UavMecEnv) -> ActionTuple {
        let obs = encode_state(state, env.config());
        let out = self.0.forward(&obs).expect("observation size matches the policy");
        action_from_output(&out.mean, &env.config().limits)
    }
}

/// Mean `(f1, f2)` over the seeds with deterministic actions.
pub fn evaluate(policy: &GaussianPolicy, env: &mut UavMecEnv, seeds: &[u64]) -> Result<[f64; N_OBJECTIVES], MopgError> {
    let ledgers = evaluate_ledgers(policy, env, seeds)?;
    Ok(mean_objectives(&ledgers)?)
}

pub fn evaluate_ledgers(
    policy: &GaussianPolicy,
    env: &mut UavMecEnv,
    seeds: &[u64],
) -> Result<Vec<EpisodeLedger>, MopgError> {
    seeds.iter().map(|&s| Ok(rollout_in(env, &mut MeanPolicy(policy), s)?.0)).collect()
}

pub fn mean_objectives(ledgers: &[EpisodeLedger]) -> Result<[f64; N_OBJECTIVES], crate::env::EnvError> {
    let mut acc = [0.0; N_OBJECTIVES];
    for l in ledgers {
        let (f1, f2) = crate::env::episode_objectives(l)?;
        acc[0] += f1;
        acc[1] += f2;
    }
    let n = ledgers.len().max(1) as f64;
    Ok([acc[0] / n, acc[1] / n])
}

/// Plays whole episodes with sampled actions until at least
/// `ppo.steps_per_iter` transitions are collected.
pub fn collect(
    task: &TaskTuple,
    env: &mut UavMecEnv,
    learner: &LearnerConfig,
    seed_: u64,
) -> Result<(TransitionBatch, Vec<EpisodeLedger>), MopgError> {
    let horizon = env.config().horizon;
    let episodes = learner.ppo.steps_per_iter.div_ceil(horizon);
    let penalty = env.config().reward.penalty_w;
    let mut batch = TransitionBatch::default();
    let mut ledgers = Vec::with_capacity(episodes);
    for k in 0..episodes as u64 {
        env.reset(seed::derive(seed_, "episode", &[k]));
        let mut rng = seed::child_rng(seed_, "explore", &[k]);
        let mut obs = env.observe();
        loop {
            let (u, lp, out) = task.policy.sample(&obs, &mut rng)?;
            let action = action_from_output(&u, &env.config().limits);
            let step = env.step(action)?;
            let raw = match learner.train.reward_signal {
                RewardSignal::Slot => step.reward.to_array(),
                RewardSignal::Objective => env.ledger().slots.last().unwrap().objective_reward(penalty),
            };
            let next = env.observe();
            batch.obs.push(std::mem::replace(&mut obs, next.clone()));
            batch.next_obs.push(next);
            batch.actions.push(u);
            batch.rewards.push(learner.train.scale(raw));
            batch.dones.push(step.done);
            batch.old_means.push(out.mean);
            batch.old_stds.push(out.std);
            batch.old_logprobs.push(lp);
            if step.done {
                break;
            }
        }
        ledgers.push(env.ledger().clone());
    }
    Ok((batch, ledgers))
}

/// Per-iteration training record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterLog {
    /// Mean objectives of the sampled episodes.
    pub objectives: [f64; N_OBJECTIVES],
    pub stats: UpdateStats,
}

pub fn update(
    task: &mut TaskTuple,
    batch: &TransitionBatch,
    learner: &LearnerConfig,
    gammas: [f64; N_OBJECTIVES],
    seed_: u64,
) -> Result<UpdateStats, MopgError> {
    match learner.rule {
        UpdateRule::Ppo => mopg_ppo_update(task, batch, &learner.ppo, gammas, seed_),
        UpdateRule::Tdl => tdl_update(task, batch, &learner.tdl, &learner.ppo, gammas, seed_),
    }
}

/// Runs `iters` collect/update rounds.
pub fn train_task(
    task: &mut TaskTuple,
    env: &mut UavMecEnv,
    learner: &LearnerConfig,
    iters: usize,
    seed_: u64,
) -> Result<Vec<IterLog>, MopgError> {
    let gammas = env.config().reward.discounts;
    let mut logs = Vec::with_capacity(iters);
    for i in 0..iters as u64 {
        let (batch, ledgers) = collect(task, env, learner, seed::derive(seed_, "collect", &[i]))?;
        let stats = update(task, &batch, learner, gammas, seed::derive(seed_, "update", &[i]))?;
        logs.push(IterLog { objectives: mean_objectives(&ledgers)?, stats });
    }
    Ok(logs)
}
