//! Run configuration: one JSON file drives every subcommand.
//!
//! An empty object is a valid config — every field falls back to the
//! defaults of the module it configures. Unknown keys are rejected so typos
//! fail loudly instead of silently running the defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cfrl_core::agents::{AgentConfig, AgentKind};
use cfrl_core::augment::AugmentConfig;
use cfrl_core::csp::CspTrainerConfig;
use cfrl_core::envsim::EnvConfig;

use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub csp_trainer: CspTrainerConfig,
    pub augment: AugmentConfig,
    /// Agent kind trained by `train`/`eval`; `compare` always runs all three.
    pub agent_kind: AgentKind,
    pub seeds: Vec<u64>,
    /// Episode budget for pretraining the frozen policy.
    pub pretrain_budget: usize,
    /// Episode budget for deployment training (`train`, `compare` arms).
    pub budget: usize,
    /// Evaluate every this many episodes during training; 0 disables curves.
    pub eval_every: usize,
    /// Greedy episodes per evaluation point and for `eval`.
    pub eval_episodes: usize,
    /// Hidden sizes swept by `sweep` (applied to the CSP agent).
    pub sweep_hidden: Vec<usize>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            env: EnvConfig::default(),
            agent: AgentConfig::default(),
            csp_trainer: CspTrainerConfig::default(),
            augment: AugmentConfig::default(),
            agent_kind: AgentKind::Ddpg,
            seeds: vec![0],
            pretrain_budget: 300,
            budget: 1000,
            eval_every: 100,
            eval_episodes: 10,
            sweep_hidden: vec![64, 128, 256],
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Validate everything and report all failures at once, one line each.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let mut problems = Vec::new();
        if let Err(e) = self.env.validate() {
            problems.push(format!("env: {e}"));
        }
        if let Err(e) = self.agent.validate() {
            problems.push(format!("agent: {e}"));
        }
        if let Err(e) = self.csp_trainer.validate() {
            problems.push(format!("csp_trainer: {e}"));
        }
        if let Err(e) = self.augment.validate() {
            problems.push(format!("augment: {e}"));
        }
        if self.seeds.is_empty() {
            problems.push("seeds: must list at least one seed".to_string());
        }
        if self.sweep_hidden.is_empty() || self.sweep_hidden.contains(&0) {
            problems.push("sweep_hidden: values must be non-empty and positive".to_string());
        }
        if self.eval_every > 0 && self.eval_episodes == 0 {
            problems.push("eval_episodes: must be >= 1 when eval_every > 0".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::Config(problems.join("\n")))
        }
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|_| HarnessError::MissingArtifact(path.to_path_buf()))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Directory holding one seed's artifacts.
    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.output_dir.join(format!("seed-{seed}"))
    }

    pub fn pretrained_dir(&self, seed: u64) -> PathBuf {
        self.seed_dir(seed).join("pretrained")
    }

    pub fn csp_dir(&self, seed: u64) -> PathBuf {
        self.seed_dir(seed).join("csp")
    }

    pub fn agent_dir(&self, seed: u64, kind: AgentKind, augmented: bool) -> PathBuf {
        self.seed_dir(seed).join(format!("agent-{kind}-{}", arm_name(augmented)))
    }

    pub fn metrics_path(&self, seed: u64, kind: AgentKind, augmented: bool) -> PathBuf {
        self.seed_dir(seed).join(format!("metrics-{kind}-{}.csv", arm_name(augmented)))
    }
}

pub fn arm_name(augmented: bool) -> &'static str {
    if augmented {
        "augmented"
    } else {
        "baseline"
    }
}
