//! Diagonal Gaussian policy and vector-valued critic.

use super::mlp::{ForwardCache, Mlp, MlpSpec};
use super::NnError;
use crate::seed::Rng;
use crate::N_OBJECTIVES;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Added to the softplus head so the state std never underflows to zero.
pub const STD_FLOOR: f64 = 1e-6;

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Composed std `sigma^(1/(phi+1)) * sigma_tilde^(phi/(phi+1))`.
pub fn compose_std(sigma: f64, sigma_tilde: f64, phi: f64) -> f64 {
    sigma.powf(1.0 / (phi + 1.0)) * sigma_tilde.powf(phi / (phi + 1.0))
}

/// Log density of a diagonal Gaussian.
pub fn log_prob(mean: &[f64], std: &[f64], action: &[f64]) -> f64 {
    let half_ln_2pi = 0.5 * (2.0 * PI).ln();
    mean.iter()
        .zip(std)
        .zip(action)
        .map(|((m, s), a)| {
            let z = (a - m) / s;
            -0.5 * z * z - s.ln() - half_ln_2pi
        })
        .sum()
}

/// Per-dimension derivative of [`log_prob`] with respect to mean and std.
pub fn log_prob_grad(mean: &[f64], std: &[f64], action: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut dm = Vec::with_capacity(mean.len());
    let mut ds = Vec::with_capacity(mean.len());
    for ((m, s), a) in mean.iter().zip(std).zip(action) {
        let d = a - m;
        dm.push(d / (s * s));
        ds.push(d * d / (s * s * s) - 1.0 / s);
    }
    (dm, ds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub mean: Vec<f64>,
    /// Composed std used for sampling.
    pub std: Vec<f64>,
    /// State-dependent std from the softplus head.
    pub state_std: Vec<f64>,
    /// Pre-softplus head output.
    pub raw_std: Vec<f64>,
}

/// Forward caches of both heads, for backpropagation.
#[derive(Debug, Clone)]
pub struct PolicyCache {
    pub out: PolicyOutput,
    mean: ForwardCache,
    std: ForwardCache,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub mean_net: Mlp,
    pub std_net: Mlp,
    /// Global per-dimension variance `sigma^2`.
    sigma_sq: Vec<f64>,
    phi: f64,
}

impl GaussianPolicy {
    /// Random mean/std heads; the global std starts at the value the std
    /// head produces for a zero pre-activation, so initially both agree.
    pub fn new(obs_dim: usize, act_dim: usize, hidden: &[usize], phi: f64, rng: &mut Rng) -> Result<Self, NnError> {
        let spec = MlpSpec::with_hidden(obs_dim, hidden, act_dim)?;
        let mean_net = Mlp::init(spec.clone(), rng);
        let std_net = Mlp::init(spec, rng);
        let s0 = softplus(0.0) + STD_FLOOR;
        Self::from_parts(mean_net, std_net, vec![s0 * s0; act_dim], phi)
    }

    pub fn from_parts(mean_net: Mlp, std_net: Mlp, sigma_sq: Vec<f64>, phi: f64) -> Result<Self, NnError> {
        if mean_net.spec() != std_net.spec() {
            return Err(NnError::InvalidSpec("mean and std heads must share a spec".into()));
        }
        if !(phi > 0.0 && phi.is_finite()) {
            return Err(NnError::InvalidSpec(format!("phi must be positive, got {phi}")));
        }
        let mut p = Self { mean_net, std_net, sigma_sq: Vec::new(), phi };
        p.set_sigma_sq(sigma_sq)?;
        Ok(p)
    }

    pub fn obs_dim(&self) -> usize {
        self.mean_net.spec().input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.mean_net.spec().output_dim()
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// Global per-dimension std multiplier.
    pub fn sigma(&self) -> Vec<f64> {
        self.sigma_sq.iter().map(|v| v.sqrt()).collect()
    }

    pub fn sigma_sq(&self) -> &[f64] {
        &self.sigma_sq
    }

    pub fn set_sigma_sq(&mut self, sigma_sq: Vec<f64>) -> Result<(), NnError> {
        if sigma_sq.len() != self.act_dim() {
            return Err(NnError::DimensionMismatch { what: "global sigma", expected: self.act_dim(), got: sigma_sq.len() });
        }
        if sigma_sq.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(NnError::NonFinite(format!("global variance must be positive and finite: {sigma_sq:?}")));
        }
        self.sigma_sq = sigma_sq;
        Ok(())
    }

    pub fn forward(&self, obs: &[f64]) -> Result<PolicyOutput, NnError> {
        Ok(self.forward_cached(obs)?.out)
    }

    pub fn forward_cached(&self, obs: &[f64]) -> Result<PolicyCache, NnError> {
        let mean_c = self.mean_net.forward_cached(obs)?;
        let std_c = self.std_net.forward_cached(obs)?;
        let raw_std = std_c.output().to_vec();
        let state_std: Vec<f64> = raw_std.iter().map(|r| softplus(*r) + STD_FLOOR).collect();
        let std = state_std.iter().zip(&self.sigma_sq).map(|(st, v)| compose_std(v.sqrt(), *st, self.phi)).collect();
        let out = PolicyOutput { mean: mean_c.output().to_vec(), std, state_std, raw_std };
        Ok(PolicyCache { out, mean: mean_c, std: std_c })
    }

    /// Accumulates parameter gradients given loss derivatives with respect
    /// to the mean and to the state std (the softplus head output).
    pub fn backward_state_std(
        &self,
        cache: &PolicyCache,
        d_mean: &[f64],
        d_state_std: &[f64],
        g_mean: &mut [f64],
        g_std: &mut [f64],
    ) {
        self.mean_net.backward(&cache.mean, d_mean, g_mean);
        let d_raw: Vec<f64> = d_state_std.iter().zip(&cache.out.raw_std).map(|(d, r)| d * sigmoid(*r)).collect();
        self.std_net.backward(&cache.std, &d_raw, g_std);
    }

    /// As [`Self::backward_state_std`] with the derivative taken with respect
    /// to the composed std.
    pub fn backward(&self, cache: &PolicyCache, d_mean: &[f64], d_std: &[f64], g_mean: &mut [f64], g_std: &mut [f64]) {
        let k = self.phi / (self.phi + 1.0);
        let d_state: Vec<f64> = d_std
            .iter()
            .zip(&cache.out.std)
            .zip(&cache.out.state_std)
            .map(|((d, s), st)| d * k * s / st)
            .collect();
        self.backward_state_std(cache, d_mean, &d_state, g_mean, g_std);
    }

    pub fn sample(&self, obs: &[f64], rng: &mut Rng) -> Result<(Vec<f64>, f64, PolicyOutput), NnError> {
        let out = self.forward(obs)?;
        let action: Vec<f64> = out
            .mean
            .iter()
            .zip(&out.std)
            .map(|(m, s)| {
                let z: f64 = StandardNormal.sample(rng);
                m + s * z
            })
            .collect();
        let lp = log_prob(&out.mean, &out.std, &action);
        Ok((action, lp, out))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorCritic {
    pub net: Mlp,
}

impl VectorCritic {
    pub fn new(obs_dim: usize, hidden: &[usize], rng: &mut Rng) -> Result<Self, NnError> {
        Ok(Self { net: Mlp::init(MlpSpec::with_hidden(obs_dim, hidden, N_OBJECTIVES)?, rng) })
    }

    pub fn from_net(net: Mlp) -> Result<Self, NnError> {
        if net.spec().output_dim() != N_OBJECTIVES {
            return Err(NnError::DimensionMismatch { what: "critic output", expected: N_OBJECTIVES, got: net.spec().output_dim() });
        }
        Ok(Self { net })
    }

    pub fn value(&self, obs: &[f64]) -> Result<[f64; N_OBJECTIVES], NnError> {
        let v = self.net.forward(obs)?;
        Ok([v[0], v[1]])
    }
}
