//! Weighted multi-objective policy-gradient updates.
//!
//! A [`TaskTuple`] pairs a preference weight with a policy, a vector critic
//! and their optimizer state. Two update rules act on it: the clipped
//! surrogate ([`ppo::mopg_ppo_update`]) and target distribution learning
//! ([`tdl::tdl_update`]). [`train`] collects on-policy episodes and runs
//! either rule for a number of iterations.

pub mod ppo;
pub mod tdl;
pub mod train;

pub use ppo::mopg_ppo_update;
pub use tdl::{tdl_targets, tdl_update, TdlTarget};
pub use train::{LearnerConfig, RewardSignal, TrainConfig};

use crate::nn::{Adam, Checkpoint, GaussianPolicy, NnError, VectorCritic};
use crate::seed::Rng;
use crate::N_OBJECTIVES;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Dimension of the policy's action output (heading, distance, acceptance).
pub const ACTION_DIM: usize = 3;

#[derive(Debug, Error)]
pub enum MopgError {
    #[error("invalid weight vector {0:?}: components must be non-negative and sum to 1")]
    InvalidWeight([f64; N_OBJECTIVES]),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite {stage}; update aborted ({diagnostics})")]
    NonFinite { stage: &'static str, diagnostics: String },
    #[error("zero old std at step {0}")]
    ZeroStd(usize),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
}

/// Point on the probability simplex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; N_OBJECTIVES]", into = "[f64; N_OBJECTIVES]")]
pub struct WeightVector([f64; N_OBJECTIVES]);

impl WeightVector {
    pub fn new(w: [f64; N_OBJECTIVES]) -> Result<Self, MopgError> {
        let sum: f64 = w.iter().sum();
        if w.iter().any(|x| !(*x >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(MopgError::InvalidWeight(w));
        }
        Ok(Self(w))
    }

    pub fn as_array(&self) -> [f64; N_OBJECTIVES] {
        self.0
    }

    pub fn dot(&self, v: [f64; N_OBJECTIVES]) -> f64 {
        self.0[0] * v[0] + self.0[1] * v[1]
    }
}

impl TryFrom<[f64; N_OBJECTIVES]> for WeightVector {
    type Error = MopgError;
    fn try_from(w: [f64; N_OBJECTIVES]) -> Result<Self, MopgError> {
        Self::new(w)
    }
}

impl From<WeightVector> for [f64; N_OBJECTIVES] {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateRule {
    Ppo,
    Tdl,
}

impl fmt::Display for UpdateRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UpdateRule::Ppo => "ppo",
            UpdateRule::Tdl => "tdl",
        })
    }
}

impl FromStr for UpdateRule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "ppo" => Ok(UpdateRule::Ppo),
            "tdl" => Ok(UpdateRule::Tdl),
            other => Err(format!("unknown update rule '{other}' (expected ppo or tdl)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoConfig {
    pub clip_eps: f64,
    pub epochs: usize,
    pub minibatch: usize,
    /// Transitions collected per iteration, rounded up to whole episodes.
    pub steps_per_iter: usize,
    pub entropy_coef: f64,
    pub lr: f64,
    pub gae_lambda: f64,
    /// Standardize the scalar advantage within each batch.
    pub normalize_advantage: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            epochs: 10,
            minibatch: 64,
            steps_per_iter: 2048,
            entropy_coef: 0.0,
            lr: 1e-4,
            gae_lambda: 0.95,
            normalize_advantage: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), MopgError> {
        let bad = |m: &str| Err(MopgError::InvalidConfig(format!("ppo.{m}")));
        if !(self.clip_eps > 0.0) {
            return bad("clip_eps must be positive");
        }
        if self.epochs == 0 || self.minibatch == 0 || self.steps_per_iter == 0 {
            return bad("epochs, minibatch and steps_per_iter must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.entropy_coef >= 0.0) {
            return bad("entropy_coef must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TdlConfig {
    pub kl_budget: f64,
    pub phi: f64,
    pub improve_old_prob: f64,
}

impl Default for TdlConfig {
    fn default() -> Self {
        Self { kl_budget: 0.01, phi: 1.0, improve_old_prob: 0.2 }
    }
}

impl TdlConfig {
    pub fn validate(&self) -> Result<(), MopgError> {
        if !(self.kl_budget > 0.0) || !(self.phi > 0.0 && self.phi.is_finite()) {
            return Err(MopgError::InvalidConfig("tdl.kl_budget and tdl.phi must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.improve_old_prob) {
            return Err(MopgError::InvalidConfig("tdl.improve_old_prob must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizers {
    pub mean: Adam,
    pub std: Adam,
    pub critic: Adam,
}

impl Optimizers {
    pub fn fresh(policy: &GaussianPolicy, critic: &VectorCritic, lr: f64) -> Self {
        Self {
            mean: Adam::new(policy.mean_net.params().len(), lr),
            std: Adam::new(policy.std_net.params().len(), lr),
            critic: Adam::new(critic.net.params().len(), lr),
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.mean.lr = lr;
        self.std.lr = lr;
        self.critic.lr = lr;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskTuple {
    pub weight: WeightVector,
    pub policy: GaussianPolicy,
    pub critic: VectorCritic,
    pub optim: Optimizers,
}

impl TaskTuple {
    pub fn new_random(
        weight: WeightVector,
        obs_dim: usize,
        hidden: &[usize],
        phi: f64,
        lr: f64,
        rng: &mut Rng,
    ) -> Result<Self, MopgError> {
        let policy = GaussianPolicy::new(obs_dim, ACTION_DIM, hidden, phi, rng)?;
        let critic = VectorCritic::new(obs_dim, hidden, rng)?;
        let optim = Optimizers::fresh(&policy, &critic, lr);
        Ok(Self { weight, policy, critic, optim })
    }

    /// Copies the networks under a new weight with fresh optimizer state.
    pub fn with_weight(&self, weight: WeightVector) -> Self {
        let optim = Optimizers::fresh(&self.policy, &self.critic, self.optim.mean.lr);
        Self { weight, policy: self.policy.clone(), critic: self.critic.clone(), optim }
    }

    /// Nets: mean, std, critic. Extras: weight, phi, global variance.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let w = self.weight.as_array();
        let mut extras = vec![w[0], w[1], self.policy.phi()];
        extras.extend_from_slice(self.policy.sigma_sq());
        Checkpoint {
            nets: vec![self.policy.mean_net.clone(), self.policy.std_net.clone(), self.critic.net.clone()],
            extras,
        }
    }

    pub fn from_checkpoint(ck: Checkpoint, lr: f64) -> Result<Self, MopgError> {
        let bad = |m: &str| MopgError::Nn(NnError::Checkpoint(m.to_string()));
        let [mean, std, critic]: [_; 3] = ck.nets.try_into().map_err(|_| bad("expected three networks"))?;
        if ck.extras.len() != 3 + mean.spec().output_dim() {
            return Err(bad("extras do not match the action dimension"));
        }
        let weight = WeightVector::new([ck.extras[0], ck.extras[1]])?;
        let policy = GaussianPolicy::from_parts(mean, std, ck.extras[3..].to_vec(), ck.extras[2])?;
        let critic = VectorCritic::from_net(critic)?;
        if critic.net.spec().input_dim() != policy.obs_dim() {
            return Err(bad("critic and policy disagree on the observation size"));
        }
        let optim = Optimizers::fresh(&policy, &critic, lr);
        Ok(Self { weight, policy, critic, optim })
    }
}

/// Diagnostics from one update call.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    /// Mean weighted surrogate (PPO) or negative regression loss (TDL) on
    /// the last minibatch pass.
    pub surrogate: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    /// Mean KL from the behaviour policy to the updated policy.
    pub kl: f64,
    /// TDL only: whether the indicator targets were used.
    pub indicator: bool,
}

/// Mean diagonal-Gaussian KL over a batch, old to new.
pub(crate) fn batch_kl(policy: &GaussianPolicy, batch: &crate::nn::TransitionBatch) -> Result<f64, MopgError> {
    let mut acc = 0.0;
    for t in 0..batch.len() {
        let out = policy.forward(&batch.obs[t])?;
        acc += tdl::gaussian_kl(&batch.old_means[t], &batch.old_stds[t], &out.mean, &out.std);
    }
    Ok(acc / batch.len().max(1) as f64)
}

pub(crate) fn check_finite(stage: &'static str, values: &[f64]) -> Result<(), MopgError> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(MopgError::NonFinite { stage, diagnostics: format!("index {i} = {}", values[i]) });
    }
    Ok(())
}
