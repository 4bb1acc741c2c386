//! Training, internal test and verification plans.
//!
//! Every trial is seeded from a [`SeedPlan`]: seed = `base·10⁷ + regime·10⁶ + index`,
//! so the development (training, internal test) and verification (general,
//! targeted, trace collection) regimes draw from disjoint seed ranges.

mod balance;
mod requirements;
mod train;
mod trials;

pub use balance::{audit_scenario_balance, BalanceReport, ClassHistogram, MIN_BALANCE_RESETS};
pub use requirements::{
    evaluate_requirements, MetricSummary, Requirement, RequirementVerdict, SR1_MIN_GOAL_RATE,
    SR2_MAX_UNSAFE_TIME, SR3_MAX_COLLISION_RATE,
};
pub use train::{train, train_with_progress, DevelopmentLog, EpisodeLogEntry, TrainedModel};
pub use trials::{
    collect_traces, integration_trials, internal_test, run_trials, trial_record, verify_general,
    verify_targeted, AggregateReport, TraceSetSummary, TrialRecord, TARGETED_SPAWN,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::AgentError;
use crate::env::EnvError;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("training diverged in episode {episode}: {source}")]
    Divergence {
        episode: usize,
        #[source]
        source: AgentError,
    },
    #[error("incomplete evidence: {0}")]
    IncompleteEvidence(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Training,
    Internal,
    General,
    Targeted,
    Traces,
    Integration,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::Training => "training",
            Regime::Internal => "internal",
            Regime::General => "general",
            Regime::Targeted => "targeted",
            Regime::Traces => "traces",
            Regime::Integration => "integration",
        }
    }

    fn offset(self) -> u64 {
        match self {
            Regime::Training => 0,
            Regime::Internal => 1,
            Regime::General => 2,
            Regime::Targeted => 3,
            Regime::Traces => 4,
            Regime::Integration => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPlan {
    pub base: u64,
}

impl SeedPlan {
    pub const REGIME_STRIDE: u64 = 1_000_000;
    pub const BASE_STRIDE: u64 = 10_000_000;

    pub fn new(base: u64) -> Self {
        Self { base }
    }

    pub fn seed(&self, regime: Regime, index: usize) -> u64 {
        debug_assert!((index as u64) < Self::REGIME_STRIDE);
        self.base
            .wrapping_mul(Self::BASE_STRIDE)
            .wrapping_add(regime.offset() * Self::REGIME_STRIDE)
            .wrapping_add(index as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regimes_use_disjoint_seed_ranges() {
        let plan = SeedPlan::new(3);
        let regimes = [
            Regime::Training,
            Regime::Internal,
            Regime::General,
            Regime::Targeted,
            Regime::Traces,
            Regime::Integration,
        ];
        let mut all = std::collections::HashSet::new();
        for r in regimes {
            for i in [0usize, 1, 4_999, 999_999] {
                assert!(all.insert(plan.seed(r, i)), "{r:?} {i}");
            }
        }
        assert_eq!(
            plan.seed(Regime::General, 7),
            3 * 10_000_000 + 2_000_000 + 7
        );
    }
}
