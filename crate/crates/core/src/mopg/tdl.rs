//! Target distribution learning on the weighted advantage.
//!
//! Each step gets a Gaussian target built from the behaviour distribution
//! and the sampled action. With `y = (a - mu_old) / sigma_old`:
//!
//! * target variance: `(a - mu_old)^2` if the advantage is positive,
//!   otherwise `sigma_old^2`;
//! * target mean: `mu_old + s * min(1, sqrt(2 alpha) / |y|) * y * sigma_old`
//!   where `s` is the advantage sign, or the positive-advantage indicator
//!   when the update draws the indicator surrogate.
//!
//! The mean step alone moves the distribution by a KL of at most `alpha`.
//! The heads are regressed to the targets by squared error, then the global
//! variance is set to the batch mean of the target variances.

use super::ppo::{critic_step, minibatches, weighted_advantages, PolicyGrads};
use super::{batch_kl, check_finite, MopgError, PpoConfig, TaskTuple, TdlConfig, UpdateStats, WeightVector};
use crate::nn::{extended_advantage, gae_per_objective, GaussianPolicy, TransitionBatch, Vec2, VectorCritic, STD_FLOOR};
use crate::seed;
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TdlTarget {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// `KL(N(m0, s0^2) || N(m1, s1^2))` for diagonal Gaussians.
pub fn gaussian_kl(m0: &[f64], s0: &[f64], m1: &[f64], s1: &[f64]) -> f64 {
    let mut kl = 0.0;
    for d in 0..m0.len() {
        let dm = m0[d] - m1[d];
        kl += (s1[d] / s0[d]).ln() + (s0[d] * s0[d] + dm * dm) / (2.0 * s1[d] * s1[d]) - 0.5;
    }
    kl
}

/// KL of the mean step only: old distribution against the target mean with
/// the old std.
pub fn mean_step_kl(old_mean: &[f64], old_std: &[f64], target: &TdlTarget) -> f64 {
    gaussian_kl(old_mean, old_std, &target.mean, old_std)
}

/// Targets from precomputed scalar advantages.
pub fn tdl_targets_from_advantages(
    batch: &TransitionBatch,
    adv: &[f64],
    cfg: &TdlConfig,
    indicator: bool,
) -> Result<Vec<TdlTarget>, MopgError> {
    let cap = (2.0 * cfg.kl_budget).sqrt();
    let mut out = Vec::with_capacity(batch.len());
    for t in 0..batch.len() {
        let (mu, sd, a) = (&batch.old_means[t], &batch.old_stds[t], &batch.actions[t]);
        if sd.iter().any(|s| !(*s > 0.0)) {
            return Err(MopgError::ZeroStd(t));
        }
        let y: Vec<f64> = (0..mu.len()).map(|d| (a[d] - mu[d]) / sd[d]).collect();
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = if norm > cap { cap / norm } else { 1.0 };
        let positive = adv[t] > 0.0;
        let dir = if indicator {
            if positive { 1.0 } else { 0.0 }
        } else if positive {
            1.0
        } else if adv[t] < 0.0 {
            -1.0
        } else {
            0.0
        };
        let mean = (0..mu.len()).map(|d| mu[d] + dir * scale * y[d] * sd[d]).collect();
        let var = (0..mu.len())
            .map(|d| if positive { (a[d] - mu[d]) * (a[d] - mu[d]) } else { sd[d] * sd[d] })
            .collect();
        out.push(TdlTarget { mean, var });
    }
    Ok(out)
}

/// Targets under `weight` using the critic's per-objective GAE
/// (sign-based targets, raw advantages).
pub fn tdl_targets(
    batch: &TransitionBatch,
    weight: &WeightVector,
    critic: &VectorCritic,
    gammas: Vec2,
    lambda: f64,
    cfg: &TdlConfig,
) -> Result<Vec<TdlTarget>, MopgError> {
    let (adv, _) = gae_per_objective(batch, critic, gammas, lambda)?;
    tdl_targets_from_advantages(batch, &extended_advantage(&adv, weight), cfg, false)
}

/// Squared error of the mean head and the state-std head against the
/// targets, averaged over `idx`.
pub fn tdl_loss_grad(
    policy: &GaussianPolicy,
    batch: &TransitionBatch,
    idx: &[usize],
    targets: &[TdlTarget],
) -> Result<PolicyGrads, MopgError> {
    let b = idx.len() as f64;
    let mut g_mean = vec![0.0; policy.mean_net.params().len()];
    let mut g_std = vec![0.0; policy.std_net.params().len()];
    let mut loss = 0.0;
    for &t in idx {
        let cache = policy.forward_cached(&batch.obs[t])?;
        let tg = &targets[t];
        let mut d_mean = Vec::with_capacity(tg.mean.len());
        let mut d_state = Vec::with_capacity(tg.mean.len());
        for d in 0..tg.mean.len() {
            let em = cache.out.mean[d] - tg.mean[d];
            let es = cache.out.state_std[d] - tg.var[d].sqrt();
            loss += em * em + es * es;
            d_mean.push(2.0 * em / b);
            d_state.push(2.0 * es / b);
        }
        policy.backward_state_std(&cache, &d_mean, &d_state, &mut g_mean, &mut g_std);
    }
    Ok(PolicyGrads { loss: loss / b, g_mean, g_std })
}

/// Batch mean of the target variances, per action dimension.
pub fn mean_target_variance(targets: &[TdlTarget]) -> Vec<f64> {
    let dim = targets[0].var.len();
    let n = targets.len() as f64;
    (0..dim).map(|d| targets.iter().map(|t| t.var[d]).sum::<f64>() / n).collect()
}

/// One target-distribution-learning update. On error the task is left
/// untouched.
pub fn tdl_update(
    task: &mut TaskTuple,
    batch: &TransitionBatch,
    cfg: &TdlConfig,
    ppo_cfg: &PpoConfig,
    gammas: Vec2,
    seed_: u64,
) -> Result<UpdateStats, MopgError> {
    if batch.is_empty() {
        return Err(MopgError::EmptyBatch);
    }
    batch.validate()?;
    let mut work = task.clone();
    work.optim.set_lr(ppo_cfg.lr);
    let indicator = seed::child_rng(seed_, "tdl-mode", &[]).random_bool(cfg.improve_old_prob);
    let (adv, returns) = weighted_advantages(&work, batch, gammas, ppo_cfg.gae_lambda, ppo_cfg.normalize_advantage)?;
    let targets = tdl_targets_from_advantages(batch, &adv, cfg, indicator)?;
    let mut stats = UpdateStats { indicator, ..UpdateStats::default() };
    for idx in minibatches(batch.len(), ppo_cfg.epochs, ppo_cfg.minibatch, seed_) {
        let g = tdl_loss_grad(&work.policy, batch, &idx, &targets)?;
        check_finite("regression loss", &[g.loss])?;
        check_finite("policy gradient", &g.g_mean)?;
        check_finite("policy gradient", &g.g_std)?;
        work.optim.mean.step(work.policy.mean_net.params_mut(), &g.g_mean);
        work.optim.std.step(work.policy.std_net.params_mut(), &g.g_std);
        stats.policy_loss = g.loss;
        stats.value_loss = critic_step(&mut work, batch, &returns, &idx)?;
    }
    let var = mean_target_variance(&targets).into_iter().map(|v| v.max(STD_FLOOR * STD_FLOOR)).collect();
    work.policy.set_sigma_sq(var)?;
    let all: Vec<usize> = (0..batch.len()).collect();
    stats.surrogate = -tdl_loss_grad(&work.policy, batch, &all, &targets)?.loss;
    stats.kl = batch_kl(&work.policy, batch)?;
    *task = work;
    Ok(stats)
}
