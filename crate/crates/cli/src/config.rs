use std::fs;
use std::path::Path;

use amlas_core::abstraction::AbstractionConfig;
use amlas_core::agent::DdpgHyperparams;
use amlas_core::env::WorldConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Name of the resolved configuration written into each run directory.
pub const RUN_CONFIG_FILE: &str = "config.toml";

/// Trial counts for each plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanSizes {
    pub train_episodes: usize,
    pub internal_trials: usize,
    pub general_trials: usize,
    pub targeted_trials: usize,
    pub trace_trials: usize,
    pub integration_trials: usize,
    pub balance_resets: usize,
    /// Steps of context kept in the erroneous-behaviour log.
    pub error_window: usize,
}

impl Default for PlanSizes {
    fn default() -> Self {
        Self {
            train_episodes: 500,
            internal_trials: 1000,
            general_trials: 500,
            targeted_trials: 250,
            trace_trials: 5000,
            integration_trials: 500,
            balance_resets: 1000,
            error_window: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub world: WorldConfig,
    pub ddpg: DdpgHyperparams,
    pub abstraction: AbstractionConfig,
    pub plans: PlanSizes,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |e: &dyn std::fmt::Display| CliError::Config(e.to_string());
        self.world.validate().map_err(|e| bad(&e))?;
        self.ddpg.validate().map_err(|e| bad(&e))?;
        self.abstraction.validate().map_err(|e| bad(&e))?;
        let p = &self.plans;
        if [
            p.train_episodes,
            p.internal_trials,
            p.general_trials,
            p.targeted_trials,
            p.trace_trials,
            p.integration_trials,
            p.error_window,
        ]
        .contains(&0)
        {
            return Err(CliError::Config("plan sizes must be positive".into()));
        }
        Ok(())
    }
}
