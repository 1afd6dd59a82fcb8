//! Simulation and learning core for a UAV-carried edge server.
//!
//! The crate is layered bottom-up:
//!
//! * [`model`] evaluates the physical, channel and energy formulas.
//! * [`scheduler`] orders the onboard task queue (simulated annealing plus
//!   FCFS / SJF / priority baselines).
//! * [`env`] wraps both into an episodic environment with a two-component
//!   reward `(-delay, -energy)` and an episode ledger for the objectives.
//! * [`nn`] holds the small MLP engine, Gaussian policy and vector critic.
//! * [`mopg`] implements the weighted policy-gradient updates (clipped
//!   surrogate and target distribution learning).
//! * [`evo`] runs the evolutionary population loop and Pareto analysis.
//! * [`baselines`] provides non-learning trajectory controllers.

// `!(x > 0.0)` guards deliberately reject NaN; index loops read closer to the math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baselines;
pub mod config;
pub mod env;
pub mod evo;
pub mod model;
pub mod mopg;
pub mod nn;
pub mod scheduler;
pub mod seed;

pub use config::ExperimentConfig;
pub use env::{ActionTuple, EnvConfig, EnvState, EpisodeLedger, UavMecEnv, VectorReward};
pub use evo::{ExternalParetoArchive, ObjectivePoint};
pub use mopg::{TaskTuple, WeightVector};

/// Number of objectives optimized jointly (total delay, UAV energy).
pub const N_OBJECTIVES: usize = 2;
