//! Assured reinforcement-learning navigation pipeline.
//!
//! - [`env`]: seeded differential-drive simulator with pseudo-lidar sensing.
//! - [`agent`]: DDPG actor/critic networks, replay, targets and the shaped reward.
//! - [`plans`]: training, internal test and verification trial plans, metric
//!   aggregation and requirement verdicts.
//! - [`abstraction`]: abstract states and maximum-likelihood DTMC estimation.
//! - [`pctl`]: parser and exact checker for reachability and reward properties.
//! - [`assurance`]: hash-chained evidence ledger, erroneous-behaviour log and
//!   stage reports.

pub mod abstraction;
pub mod agent;
pub mod assurance;
pub mod env;
pub mod pctl;
pub mod plans;
