//! Experiment configuration: one TOML tree holding every constant of a run.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::EnvConfig;
use crate::evo::EvoConfig;
use crate::mopg::{LearnerConfig, PpoConfig, TdlConfig, TrainConfig, UpdateRule};
use crate::scheduler::SchedulerKind;

#[derive(Debug, Error)]
pub enum ConfigError {
    /// Syntax or type error; `path` is the dotted field path ("." for the root).
    #[error("config field `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("cannot serialize config: {0}")]
    Serialize(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every stream of the run derives from it.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub update_rule: UpdateRule,
    pub scheduler_kind: SchedulerKind,
    pub env: EnvConfig,
    pub evo: EvoConfig,
    pub ppo: PpoConfig,
    pub tdl: TdlConfig,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            update_rule: UpdateRule::Tdl,
            scheduler_kind: SchedulerKind::Sa,
            env: EnvConfig::default(),
            evo: EvoConfig::default(),
            ppo: PpoConfig::default(),
            tdl: TdlConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Small preset that finishes in seconds on one core: 5 devices,
    /// 60-slot episodes, 4 tasks, 10 iterations, 10 generations. The area
    /// shrinks to 400 m so that the 100 m coverage disc matters.
    pub fn desk() -> Self {
        let mut cfg = Self { output_dir: PathBuf::from("runs/desk"), ..Self::default() };
        cfg.env.n_gds = 5;
        cfg.env.horizon = 60;
        cfg.env.limits.x_max = 400.0;
        cfg.env.limits.y_max = 400.0;
        cfg.env.task_gen.period_slots = 6;
        cfg.evo.n_tasks = 4;
        cfg.evo.warmup_iters = 10;
        cfg.evo.generations = 10;
        cfg.ppo.lr = 1e-3;
        cfg.ppo.steps_per_iter = 120;
        cfg.ppo.minibatch = 60;
        cfg.ppo.epochs = 5;
        cfg.train.hidden = vec![32, 32];
        cfg
    }

    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let de = toml::de::Deserializer::parse(s)
            .map_err(|e| ConfigError::Parse { path: ".".into(), message: e.to_string() })?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        toml::to_string(self).map_err(|e| ConfigError::Serialize(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        // TOML integers are signed 64-bit.
        if self.seed > i64::MAX as u64 || self.env.rng_seed > i64::MAX as u64 {
            return Err(ConfigError::Invalid("seed and env.rng_seed must be at most 2^63 - 1".into()));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(ConfigError::Invalid("output_dir must not be empty".into()));
        }
        self.env_config().validate().map_err(|e| invalid(&e))?;
        self.evo.validate().map_err(|e| invalid(&e))?;
        self.learner().validate().map_err(|e| invalid(&e))?;
        Ok(())
    }

    /// Environment config with the top-level scheduler applied.
    pub fn env_config(&self) -> EnvConfig {
        EnvConfig { scheduler_kind: self.scheduler_kind, ..self.env.clone() }
    }

    pub fn learner(&self) -> LearnerConfig {
        LearnerConfig { rule: self.update_rule, ppo: self.ppo.clone(), tdl: self.tdl.clone(), train: self.train.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_identity() {
        for cfg in [ExperimentConfig::default(), ExperimentConfig::desk()] {
            let text = cfg.to_toml_string().unwrap();
            let back = ExperimentConfig::from_toml_str(&text).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.to_toml_string().unwrap(), text);
        }
    }

    #[test]
    fn missing_field_reports_path() {
        let text = ExperimentConfig::desk().to_toml_string().unwrap();
        let pruned: String = text.lines().filter(|l| !l.starts_with("v_max")).map(|l| format!("{l}\n")).collect();
        assert_ne!(pruned, text);
        match ExperimentConfig::from_toml_str(&pruned) {
            Err(ConfigError::Parse { path, message }) => {
                assert_eq!(path, "env.limits");
                assert!(message.contains("v_max"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_and_invalid_values_rejected() {
        let text = ExperimentConfig::desk().to_toml_string().unwrap();
        let extra = text.replacen("[env]\n", "[env]\nbogus = 1\n", 1);
        assert!(matches!(ExperimentConfig::from_toml_str(&extra), Err(ConfigError::Parse { .. })));
        let bad = text.replacen("n_gds = 5", "n_gds = 0", 1);
        assert!(matches!(ExperimentConfig::from_toml_str(&bad), Err(ConfigError::Invalid(_))));
        let mut cfg = ExperimentConfig::desk();
        cfg.seed = u64::MAX;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn top_level_scheduler_reaches_env() {
        let cfg = ExperimentConfig { scheduler_kind: SchedulerKind::Fcfs, ..ExperimentConfig::desk() };
        assert_eq!(cfg.env_config().scheduler_kind, SchedulerKind::Fcfs);
        assert!(!cfg.to_toml_string().unwrap().contains("[env]\nscheduler_kind"));
    }
}
