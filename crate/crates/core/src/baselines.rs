//! Non-learning trajectory controllers with greedy task acceptance.
//!
//! Every controller accepts whenever a pending task is in range of the pose
//! it is about to reach. Baseline evaluations run the onboard queue in
//! arrival order (nearest device first within a slot).

use crate::env::{rollout_in, ActionSource, ActionTuple, EnvConfig, EnvError, EnvState, EpisodeLedger, UavMecEnv};
use crate::model::{self, Position3, UavLimits};
use crate::mopg::train::mean_objectives;
use crate::scheduler::SchedulerKind;
use crate::seed;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    /// Uniform heading, full speed.
    RandomWalk,
    /// Circle around the area centre at full speed.
    Circular,
    /// Archimedean spiral out of the area centre.
    Spiral,
    /// Stays in place.
    Hover,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [Self::RandomWalk, Self::Circular, Self::Spiral, Self::Hover];
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::RandomWalk => "random-walk",
            Self::Circular => "circular",
            Self::Spiral => "spiral",
            Self::Hover => "hover",
        })
    }
}

impl FromStr for BaselineKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "random-walk" | "randomwalk" => Ok(Self::RandomWalk),
            "circular" => Ok(Self::Circular),
            "spiral" => Ok(Self::Spiral),
            "hover" => Ok(Self::Hover),
            other => Err(format!("unknown baseline '{other}' (random-walk, circular, spiral, hover)")),
        }
    }
}

/// Geometry of the circular and spiral paths; `None` picks the defaults
/// (circle radius a third of the shorter side, spiral reaching 45% of it).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BaselineParams {
    pub circle_radius: Option<f64>,
    pub spiral_max_radius: Option<f64>,
}

fn centre(l: &UavLimits) -> (f64, f64) {
    (l.x_max / 2.0, l.y_max / 2.0)
}

pub struct BaselinePolicy {
    kind: BaselineKind,
    params: BaselineParams,
    rng: seed::Rng,
    /// Spiral steps taken since reaching the centre.
    spiral_step: Option<usize>,
}

impl BaselinePolicy {
    pub fn new(kind: BaselineKind, params: BaselineParams, seed_: u64) -> Self {
        Self { kind, params, rng: seed::child_rng(seed_, "baseline", &[]), spiral_step: None }
    }

    pub fn circle_radius(&self, l: &UavLimits) -> f64 {
        self.params.circle_radius.unwrap_or(l.x_max.min(l.y_max) / 3.0)
    }

    pub fn spiral_max_radius(&self, l: &UavLimits) -> f64 {
        self.params.spiral_max_radius.unwrap_or(0.45 * l.x_max.min(l.y_max))
    }

    /// Heading and distance toward `(tx, ty)`, capped at `d_max`.
    fn toward(p: Position3, tx: f64, ty: f64, d_max: f64) -> (f64, f64) {
        let (dx, dy) = (tx - p.x, ty - p.y);
        let d = dx.hypot(dy);
        if d == 0.0 {
            return (0.0, 0.0);
        }
        (dy.atan2(dx).rem_euclid(TAU), d.min(d_max))
    }

    fn motion(&mut self, state: &EnvState, env: &UavMecEnv) -> (f64, f64) {
        let l = env.config().limits;
        let d_max = l.d_max();
        let p = state.uav_pose;
        let (cx, cy) = centre(&l);
        match self.kind {
            BaselineKind::Hover => (0.0, 0.0),
            BaselineKind::RandomWalk => (self.rng.random_range(0.0..TAU), d_max),
            BaselineKind::Circular => {
                let r_c = self.circle_radius(&l);
                let (dx, dy) = (p.x - cx, p.y - cy);
                let r = dx.hypot(dy);
                if (r - r_c).abs() > 1e-6 {
                    // approach the nearest point of the circle
                    let (ux, uy) = if r > 0.0 { (dx / r, dy / r) } else { (1.0, 0.0) };
                    return Self::toward(p, cx + r_c * ux, cy + r_c * uy, d_max);
                }
                // chord of length d_max along the circle
                let step = 2.0 * (d_max / (2.0 * r_c)).min(1.0).asin();
                let phi = dy.atan2(dx) + step;
                Self::toward(p, cx + r_c * phi.cos(), cy + r_c * phi.sin(), d_max)
            }
            BaselineKind::Spiral => {
                let k = match self.spiral_step {
                    Some(k) => k,
                    None => {
                        if (p.x - cx).hypot(p.y - cy) > 1e-6 {
                            return Self::toward(p, cx, cy, d_max);
                        }
                        0
                    }
                };
                // r(s) = sqrt(2 b s) with arc length s = k d_max reaching
                // the maximum radius at the end of the horizon
                let r_max = self.spiral_max_radius(&l);
                let b = r_max * r_max / (2.0 * env.config().horizon as f64 * d_max);
                let r = (2.0 * b * (k + 1) as f64 * d_max).sqrt().min(r_max);
                let phi = r / b;
                let (tx, ty) = (cx + r * phi.cos(), cy + r * phi.sin());
                let (theta, dist) = Self::toward(p, tx, ty, d_max);
                // advance along the spiral only once its point is reached
                let reached = (tx - p.x).hypot(ty - p.y) <= d_max;
                self.spiral_step = Some(if reached { k + 1 } else { k });
                (theta, dist)
            }
        }
    }
}

/// Accept flag for a planned move: 1 if any pending task is in range of
/// the resulting (clamped) pose.
pub fn greedy_accept(env: &UavMecEnv, pose: Position3, theta: f64, dist: f64) -> f64 {
    let l = &env.config().limits;
    let next = match model::move_uav(pose, theta, dist, l) {
        Ok(p) => p,
        Err(model::MoveError::OutOfArea(p)) => l.clamp(p),
        Err(model::MoveError::Invalid(..)) => pose,
    };
    if env.pending_in_range(next).is_empty() {
        0.0
    } else {
        1.0
    }
}

impl ActionSource for BaselinePolicy {
    fn act(&mut self, state: &EnvState, env: &UavMecEnv) -> ActionTuple {
        if state.clock == 0 {
            self.spiral_step = None;
        }
        let (theta, dist) = self.motion(state, env);
        ActionTuple { theta, dist, accept: greedy_accept(env, state.uav_pose, theta, dist) }
    }
}

/// The environment configuration baselines are evaluated under.
pub fn baseline_env(cfg: &EnvConfig) -> EnvConfig {
    EnvConfig { scheduler_kind: SchedulerKind::Fcfs, ..cfg.clone() }
}

pub fn baseline_ledgers(
    kind: BaselineKind,
    params: BaselineParams,
    cfg: &EnvConfig,
    seeds: &[u64],
) -> Result<Vec<EpisodeLedger>, EnvError> {
    let mut env = UavMecEnv::new(baseline_env(cfg))?;
    seeds
        .iter()
        .map(|&s| {
            let mut policy = BaselinePolicy::new(kind, params, s);
            Ok(rollout_in(&mut env, &mut policy, s)?.0)
        })
        .collect()
}

/// Mean `(f1, f2)` over the seeds.
pub fn evaluate_baseline(kind: BaselineKind, params: BaselineParams, cfg: &EnvConfig, seeds: &[u64]) -> Result<[f64; 2], EnvError> {
    mean_objectives(&baseline_ledgers(kind, params, cfg, seeds)?)
}
