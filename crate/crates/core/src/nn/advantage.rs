//! Transition batches, per-objective GAE and the weighted (extended)
//! advantage.

use super::policy::VectorCritic;
use super::NnError;
use crate::mopg::WeightVector;
use crate::N_OBJECTIVES;

pub type Vec2 = [f64; N_OBJECTIVES];

/// On-policy experience. Actions are in the policy's unbounded space.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransitionBatch {
    pub obs: Vec<Vec<f64>>,
    pub next_obs: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<Vec2>,
    /// True on the last transition of an episode.
    pub dones: Vec<bool>,
    pub old_means: Vec<Vec<f64>>,
    pub old_stds: Vec<Vec<f64>>,
    pub old_logprobs: Vec<f64>,
}

impl TransitionBatch {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let n = self.obs.len();
        for (what, len) in [
            ("next_obs", self.next_obs.len()),
            ("actions", self.actions.len()),
            ("rewards", self.rewards.len()),
            ("dones", self.dones.len()),
            ("old_means", self.old_means.len()),
            ("old_stds", self.old_stds.len()),
            ("old_logprobs", self.old_logprobs.len()),
        ] {
            if len != n {
                return Err(NnError::DimensionMismatch { what, expected: n, got: len });
            }
        }
        if self.old_stds.iter().flatten().any(|s| !(*s > 0.0)) {
            return Err(NnError::NonFinite("old stds must be positive".into()));
        }
        Ok(())
    }

    pub fn append(&mut self, other: TransitionBatch) {
        self.obs.extend(other.obs);
        self.next_obs.extend(other.next_obs);
        self.actions.extend(other.actions);
        self.rewards.extend(other.rewards);
        self.dones.extend(other.dones);
        self.old_means.extend(other.old_means);
        self.old_stds.extend(other.old_stds);
        self.old_logprobs.extend(other.old_logprobs);
    }

    /// Critic values at `obs` and `next_obs`.
    pub fn values(&self, critic: &VectorCritic) -> Result<(Vec<Vec2>, Vec<Vec2>), NnError> {
        let v = self.obs.iter().map(|o| critic.value(o)).collect::<Result<_, _>>()?;
        let nv = self.next_obs.iter().map(|o| critic.value(o)).collect::<Result<_, _>>()?;
        Ok((v, nv))
    }
}

/// Per-objective generalized advantage estimation.
///
/// Returns `(advantages, lambda_returns)` where the returns are
/// `advantage + value`. Recursion restarts after every `done`.
pub fn gae(
    rewards: &[Vec2],
    values: &[Vec2],
    next_values: &[Vec2],
    dones: &[bool],
    gammas: Vec2,
    lambda: f64,
) -> (Vec<Vec2>, Vec<Vec2>) {
    let n = rewards.len();
    assert!(values.len() == n && next_values.len() == n && dones.len() == n, "misaligned GAE inputs");
    let mut adv = vec![[0.0; N_OBJECTIVES]; n];
    let mut running = [0.0; N_OBJECTIVES];
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        for k in 0..N_OBJECTIVES {
            let delta = rewards[t][k] + gammas[k] * next_values[t][k] * live - values[t][k];
            running[k] = delta + gammas[k] * lambda * live * running[k];
            adv[t][k] = running[k];
        }
    }
    let returns = adv.iter().zip(values).map(|(a, v)| [a[0] + v[0], a[1] + v[1]]).collect();
    (adv, returns)
}

/// [`gae`] using a critic on the batch.
pub fn gae_per_objective(
    batch: &TransitionBatch,
    critic: &VectorCritic,
    gammas: Vec2,
    lambda: f64,
) -> Result<(Vec<Vec2>, Vec<Vec2>), NnError> {
    batch.validate()?;
    let (v, nv) = batch.values(critic)?;
    Ok(gae(&batch.rewards, &v, &nv, &batch.dones, gammas, lambda))
}

/// Scalar advantage `w . A` per step.
pub fn extended_advantage(adv: &[Vec2], w: &WeightVector) -> Vec<f64> {
    let w = w.as_array();
    adv.iter().map(|a| a[0] * w[0] + a[1] * w[1]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    #[test]
    fn lambda_zero_is_td_error() {
        let r = [[1.0, -2.0], [0.5, 0.0]];
        let v = [[0.3, 0.1], [0.2, -0.4]];
        let nv = [[0.2, -0.4], [9.0, 9.0]];
        let (a, _) = gae(&r, &v, &nv, &[false, true], [0.9, 0.8], 0.0);
        assert_eq!(a[0], [1.0 + 0.9 * 0.2 - 0.3, -2.0 + 0.8 * -0.4 - 0.1]);
        assert_eq!(a[1], [0.5 - 0.2, 0.0 + 0.4]);
    }

    #[test]
    fn gamma_zero_is_reward_minus_value() {
        let r = [[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let v = [[0.5, 0.5], [1.0, 1.0], [2.0, 2.0]];
        let (a, _) = gae(&r, &v, &v, &[false, false, true], [0.0, 0.0], 0.95);
        for t in 0..3 {
            assert_eq!(a[t], [r[t][0] - v[t][0], r[t][1] - v[t][1]]);
        }
    }

    #[test]
    fn three_step_hand_recursion() {
        // gamma = 0.5, lambda = 0.5 on objective 0; gamma = 1, lambda = 0.5 on 1.
        let r = [[1.0, 0.0], [2.0, 1.0], [3.0, -1.0]];
        let v = [[0.0, 1.0], [1.0, 0.0], [2.0, 2.0]];
        let nv = [[1.0, 0.0], [2.0, 2.0], [7.0, 7.0]];
        let (a, ret) = gae(&r, &v, &nv, &[false, false, true], [0.5, 1.0], 0.5);
        // objective 0: d2 = 3 - 2 = 1; d1 = 2 + 1 - 1 = 2; d0 = 1 + 0.5 - 0 = 1.5
        // A2 = 1; A1 = 2 + 0.25 = 2.25; A0 = 1.5 + 0.25 * 2.25 = 2.0625
        assert_eq!([a[0][0], a[1][0], a[2][0]], [2.0625, 2.25, 1.0]);
        // objective 1: d2 = -1 - 2 = -3; d1 = 1 + 2 - 0 = 3; d0 = 0 + 0 - 1 = -1
        // A2 = -3; A1 = 3 - 1.5 = 1.5; A0 = -1 + 0.75 = -0.25
        assert_eq!([a[0][1], a[1][1], a[2][1]], [-0.25, 1.5, -3.0]);
        assert_eq!(ret[1], [3.25, 1.5]);
    }

    #[test]
    fn episodes_are_isolated() {
        let mut rng = seed::rng(3);
        let mut gen = |n: usize| -> (Vec<Vec2>, Vec<Vec2>, Vec<Vec2>, Vec<bool>) {
            let mut f = || [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let r = (0..n).map(|_| f()).collect();
            let v = (0..n).map(|_| f()).collect();
            let nv = (0..n).map(|_| f()).collect();
            let mut d = vec![false; n];
            d[n - 1] = true;
            (r, v, nv, d)
        };
        let (r1, v1, n1, d1) = gen(5);
        let (r2, v2, n2, d2) = gen(7);
        let g = [0.99, 0.9];
        let (a1, _) = gae(&r1, &v1, &n1, &d1, g, 0.95);
        let (a2, _) = gae(&r2, &v2, &n2, &d2, g, 0.95);
        let cat = |a: &[Vec2], b: &[Vec2]| [a, b].concat();
        let (a, _) = gae(&cat(&r1, &r2), &cat(&v1, &v2), &cat(&n1, &n2), &[d1, d2].concat(), g, 0.95);
        assert_eq!(a, cat(&a1, &a2));
    }

    #[test]
    fn extended_advantage_examples() {
        let a = [[-3.0, 5.0], [-2.0, 4.0]];
        assert_eq!(extended_advantage(&a[..1], &WeightVector::new([1.0, 0.0]).unwrap()), vec![-3.0]);
        assert_eq!(extended_advantage(&a[1..], &WeightVector::new([0.5, 0.5]).unwrap()), vec![1.0]);
        assert!(WeightVector::new([0.0, 0.0]).is_err());
    }

    #[test]
    fn batch_validation() {
        let mut b = TransitionBatch {
            obs: vec![vec![0.0]],
            next_obs: vec![vec![0.0]],
            actions: vec![vec![0.0]],
            rewards: vec![[0.0, 0.0]],
            dones: vec![true],
            old_means: vec![vec![0.0]],
            old_stds: vec![vec![1.0]],
            old_logprobs: vec![0.0],
        };
        b.validate().unwrap();
        b.old_stds[0][0] = 0.0;
        assert!(b.validate().is_err());
        b.old_stds[0][0] = 1.0;
        b.dones.push(false);
        assert!(b.validate().is_err());
    }
}
