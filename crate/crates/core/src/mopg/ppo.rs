//! Clipped-surrogate update on the weighted advantage.

use super::{batch_kl, check_finite, MopgError, PpoConfig, TaskTuple, UpdateStats};
use crate::nn::{extended_advantage, gae_per_objective, log_prob, log_prob_grad, GaussianPolicy, TransitionBatch, Vec2, VectorCritic};
use crate::seed;
use rand::seq::SliceRandom;

/// Loss value and parameter gradients of both policy heads.
#[derive(Debug, Clone)]
pub struct PolicyGrads {
    pub loss: f64,
    pub g_mean: Vec<f64>,
    pub g_std: Vec<f64>,
}

/// Shuffled minibatch index lists for `epochs` passes over `n` samples.
pub fn minibatches(n: usize, epochs: usize, size: usize, seed_: u64) -> Vec<Vec<usize>> {
    let mut rng = seed::rng(seed_);
    let mut idx: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    for _ in 0..epochs {
        idx.shuffle(&mut rng);
        out.extend(idx.chunks(size).map(<[usize]>::to_vec));
    }
    out
}

/// Standardizes in place; a (near) constant vector becomes all zeros.
pub fn normalize(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in adv.iter_mut() {
        *a = if std > 1e-8 { (*a - mean) / std } else { 0.0 };
    }
}

/// Negative clipped surrogate minus entropy bonus, averaged over `idx`.
pub fn ppo_policy_loss_grad(
    policy: &GaussianPolicy,
    batch: &TransitionBatch,
    idx: &[usize],
    adv: &[f64],
    clip_eps: f64,
    entropy_coef: f64,
) -> Result<PolicyGrads, MopgError> {
    let b = idx.len() as f64;
    let mut g_mean = vec![0.0; policy.mean_net.params().len()];
    let mut g_std = vec![0.0; policy.std_net.params().len()];
    let mut loss = 0.0;
    for &t in idx {
        let cache = policy.forward_cached(&batch.obs[t])?;
        let out = &cache.out;
        let lp = log_prob(&out.mean, &out.std, &batch.actions[t]);
        let ratio = (lp - batch.old_logprobs[t]).exp();
        let a = adv[t];
        let unclipped = ratio * a;
        let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps) * a;
        let entropy: f64 = out.std.iter().map(|s| s.ln()).sum();
        loss += -unclipped.min(clipped) - entropy_coef * entropy;
        // d loss / d logprob; the clipped branch is flat in the parameters
        let d_lp = if unclipped <= clipped { -unclipped / b } else { 0.0 };
        let (dm, ds) = log_prob_grad(&out.mean, &out.std, &batch.actions[t]);
        let d_mean: Vec<f64> = dm.iter().map(|g| g * d_lp).collect();
        let d_std: Vec<f64> = ds.iter().zip(&out.std).map(|(g, s)| g * d_lp - entropy_coef / (b * s)).collect();
        policy.backward(&cache, &d_mean, &d_std, &mut g_mean, &mut g_std);
    }
    Ok(PolicyGrads { loss: loss / b, g_mean, g_std })
}

/// Sum over objectives of squared value errors, averaged over `idx`.
pub fn critic_loss_grad(
    critic: &VectorCritic,
    obs: &[Vec<f64>],
    returns: &[Vec2],
    idx: &[usize],
) -> Result<(f64, Vec<f64>), MopgError> {
    let b = idx.len() as f64;
    let mut grad = vec![0.0; critic.net.params().len()];
    let mut loss = 0.0;
    for &t in idx {
        let cache = critic.net.forward_cached(&obs[t])?;
        let v = cache.output();
        let e = [v[0] - returns[t][0], v[1] - returns[t][1]];
        loss += e[0] * e[0] + e[1] * e[1];
        critic.net.backward(&cache, &[2.0 * e[0] / b, 2.0 * e[1] / b], &mut grad);
    }
    Ok((loss / b, grad))
}

pub(crate) fn critic_step(
    task: &mut TaskTuple,
    batch: &TransitionBatch,
    returns: &[Vec2],
    idx: &[usize],
) -> Result<f64, MopgError> {
    let (loss, grad) = critic_loss_grad(&task.critic, &batch.obs, returns, idx)?;
    check_finite("critic gradient", &grad)?;
    task.optim.critic.step(task.critic.net.params_mut(), &grad);
    Ok(loss)
}

/// Weighted advantages (optionally standardized) and per-objective
/// lambda-returns for the batch under the task's current critic.
pub fn weighted_advantages(
    task: &TaskTuple,
    batch: &TransitionBatch,
    gammas: Vec2,
    lambda: f64,
    normalize_adv: bool,
) -> Result<(Vec<f64>, Vec<Vec2>), MopgError> {
    let (adv, returns) = gae_per_objective(batch, &task.critic, gammas, lambda)?;
    let mut scalar = extended_advantage(&adv, &task.weight);
    if normalize_adv {
        normalize(&mut scalar);
    }
    check_finite("advantage", &scalar)?;
    Ok((scalar, returns))
}

/// One clipped-surrogate update. On error the task is left untouched.
pub fn mopg_ppo_update(
    task: &mut TaskTuple,
    batch: &TransitionBatch,
    cfg: &PpoConfig,
    gammas: Vec2,
    seed_: u64,
) -> Result<UpdateStats, MopgError> {
    if batch.is_empty() {
        return Err(MopgError::EmptyBatch);
    }
    batch.validate()?;
    let mut work = task.clone();
    work.optim.set_lr(cfg.lr);
    let (adv, returns) = weighted_advantages(&work, batch, gammas, cfg.gae_lambda, cfg.normalize_advantage)?;
    let mut stats = UpdateStats::default();
    for idx in minibatches(batch.len(), cfg.epochs, cfg.minibatch, seed_) {
        let g = ppo_policy_loss_grad(&work.policy, batch, &idx, &adv, cfg.clip_eps, cfg.entropy_coef)?;
        check_finite("policy loss", &[g.loss])?;
        check_finite("policy gradient", &g.g_mean)?;
        check_finite("policy gradient", &g.g_std)?;
        work.optim.mean.step(work.policy.mean_net.params_mut(), &g.g_mean);
        work.optim.std.step(work.policy.std_net.params_mut(), &g.g_std);
        stats.policy_loss = g.loss;
        stats.value_loss = critic_step(&mut work, batch, &returns, &idx)?;
    }
    let all: Vec<usize> = (0..batch.len()).collect();
    stats.surrogate = -ppo_policy_loss_grad(&work.policy, batch, &all, &adv, cfg.clip_eps, 0.0)?.loss;
    stats.kl = batch_kl(&work.policy, batch)?;
    *task = work;
    Ok(stats)
}
