use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{PlanError, Regime, SeedPlan, TrainedModel};
use crate::agent::{reward_for, RewardParams};
use crate::env::{
    run_episode, EpisodeTrace, MissionMode, Policy, SpawnMode, TerminationCause, TraceWriter,
    World, WorldConfig,
};

/// Spawn band used by targeted verification trials.
pub const TARGETED_SPAWN: SpawnMode = SpawnMode::NearObstacle { min: 0.2, max: 0.3 };

/// Unsafe-time threshold used for the per-trial SR2 exceedance rate.
const UNSAFE_TIME_LIMIT: u32 = 20;

/// Trials per parallel batch when streaming traces to disk.
const TRACE_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub success: bool,
    pub steps: u32,
    pub energy_remaining: u32,
    pub unsafe_time: u32,
    pub collided: bool,
    pub total_reward: f64,
    pub cause: TerminationCause,
}

pub fn trial_record(trace: &EpisodeTrace, reward: &RewardParams) -> TrialRecord {
    let last = trace.final_state();
    let total_reward = trace
        .steps
        .iter()
        .filter_map(|s| s.reward_inputs.as_ref())
        .map(|r| reward_for(r, reward))
        .sum();
    TrialRecord {
        seed: trace.seed,
        success: last.mode == MissionMode::GoalReached && last.energy > 0,
        steps: last.step_count,
        energy_remaining: last.energy,
        unsafe_time: last.unsafe_time,
        collided: last.mode == MissionMode::Collided,
        total_reward,
        cause: trace.cause,
    }
}

/// Aggregate metrics of a set of trials, in the shape of the result tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub regime: String,
    pub n_trials: usize,
    pub goal_rate: f64,
    /// Mean energy left over successful trials only; `None` without successes.
    pub mean_energy_on_success: Option<f64>,
    pub mean_unsafe_time: f64,
    pub collision_rate: f64,
    /// Fraction of trials whose cumulative unsafe time exceeds 20 steps.
    pub unsafe_exceedance_rate: f64,
    pub records: Vec<TrialRecord>,
}

impl AggregateReport {
    pub fn from_records(regime: &str, records: Vec<TrialRecord>) -> Result<Self, PlanError> {
        if records.is_empty() {
            return Err(PlanError::Usage(format!(
                "{regime}: cannot aggregate zero trials"
            )));
        }
        let n = records.len() as f64;
        let successes: Vec<&TrialRecord> = records.iter().filter(|r| r.success).collect();
        let mut energy_sum = 0.0;
        for r in &successes {
            energy_sum += r.energy_remaining as f64;
        }
        let mut unsafe_sum = 0.0;
        for r in &records {
            unsafe_sum += r.unsafe_time as f64;
        }
        let collisions = records.iter().filter(|r| r.collided).count();
        let exceed = records
            .iter()
            .filter(|r| r.unsafe_time > UNSAFE_TIME_LIMIT)
            .count();
        Ok(Self {
            regime: regime.to_string(),
            n_trials: records.len(),
            goal_rate: successes.len() as f64 / n,
            mean_energy_on_success: (!successes.is_empty())
                .then(|| energy_sum / successes.len() as f64),
            mean_unsafe_time: unsafe_sum / n,
            collision_rate: collisions as f64 / n,
            unsafe_exceedance_rate: exceed as f64 / n,
            records,
        })
    }
}

/// Runs `n` independent trials in parallel; results are ordered by trial index.
#[allow(clippy::too_many_arguments)]
pub fn run_trials<F, P>(
    world: &World,
    regime: Regime,
    n: usize,
    seeds: &SeedPlan,
    spawn: SpawnMode,
    reward: &RewardParams,
    make_policy: F,
) -> Result<Vec<TrialRecord>, PlanError>
where
    F: Fn(u64) -> P + Sync,
    P: Policy,
{
    if n == 0 {
        return Err(PlanError::Usage(format!(
            "{} plan needs at least one trial",
            regime.label()
        )));
    }
    (0..n)
        .into_par_iter()
        .map(|i| {
            let seed = seeds.seed(regime, i);
            let mut policy = make_policy(seed);
            let trace = run_episode(world, &mut policy, seed, spawn)?;
            Ok(trial_record(&trace, reward))
        })
        .collect()
}

/// Test and verification trials end when the energy budget is spent.
fn evaluation_world(config: &WorldConfig) -> Result<World, PlanError> {
    Ok(World::new(WorldConfig {
        energy_terminates: true,
        ..config.clone()
    })?)
}

pub fn internal_test(
    model: &TrainedModel,
    config: &WorldConfig,
    n: usize,
    seeds: &SeedPlan,
    reward: &RewardParams,
) -> Result<AggregateReport, PlanError> {
    let world = evaluation_world(config)?;
    let records = run_trials(
        &world,
        Regime::Internal,
        n,
        seeds,
        SpawnMode::Random,
        reward,
        |_| model.policy(),
    )?;
    AggregateReport::from_records(Regime::Internal.label(), records)
}

pub fn verify_general(
    model: &TrainedModel,
    config: &WorldConfig,
    n: usize,
    seeds: &SeedPlan,
    reward: &RewardParams,
) -> Result<AggregateReport, PlanError> {
    let world = evaluation_world(config)?;
    let records = run_trials(
        &world,
        Regime::General,
        n,
        seeds,
        SpawnMode::Random,
        reward,
        |_| model.policy(),
    )?;
    AggregateReport::from_records(Regime::General.label(), records)
}

pub fn verify_targeted(
    model: &TrainedModel,
    config: &WorldConfig,
    n: usize,
    seeds: &SeedPlan,
    reward: &RewardParams,
) -> Result<AggregateReport, PlanError> {
    let world = evaluation_world(config)?;
    let records = run_trials(
        &world,
        Regime::Targeted,
        n,
        seeds,
        TARGETED_SPAWN,
        reward,
        |_| model.policy(),
    )?;
    AggregateReport::from_records(Regime::Targeted.label(), records)
}

/// Operational-scenario trials of the integrated system. Full traces are
/// kept so that violations can be logged with their context.
pub fn integration_trials(
    model: &TrainedModel,
    config: &WorldConfig,
    n: usize,
    seeds: &SeedPlan,
    reward: &RewardParams,
) -> Result<(AggregateReport, Vec<EpisodeTrace>), PlanError> {
    if n == 0 {
        return Err(PlanError::Usage(
            "integration plan needs at least one trial".into(),
        ));
    }
    let world = evaluation_world(config)?;
    let traces: Vec<EpisodeTrace> = (0..n)
        .into_par_iter()
        .map(|i| {
            let seed = seeds.seed(Regime::Integration, i);
            run_episode(&world, &mut model.policy(), seed, SpawnMode::Random)
        })
        .collect::<Result<_, _>>()?;
    let records = traces.iter().map(|t| trial_record(t, reward)).collect();
    let report = AggregateReport::from_records(Regime::Integration.label(), records)?;
    Ok((report, traces))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSetSummary {
    pub path: PathBuf,
    pub report: AggregateReport,
}

/// Runs `n` general-regime trials and streams their full traces to `path`.
/// On failure no trace file is left behind.
pub fn collect_traces<F, P>(
    config: &WorldConfig,
    n: usize,
    seeds: &SeedPlan,
    reward: &RewardParams,
    path: &Path,
    make_policy: F,
) -> Result<TraceSetSummary, PlanError>
where
    F: Fn(u64) -> P + Sync,
    P: Policy,
{
    if n == 0 {
        return Err(PlanError::Usage(
            "trace collection needs at least one trial".into(),
        ));
    }
    let world = evaluation_world(config)?;
    let mut writer = TraceWriter::create(path)?;
    let mut records = Vec::with_capacity(n);
    for start in (0..n).step_by(TRACE_CHUNK) {
        let end = (start + TRACE_CHUNK).min(n);
        let traces: Vec<EpisodeTrace> = (start..end)
            .into_par_iter()
            .map(|i| {
                let seed = seeds.seed(Regime::Traces, i);
                let mut policy = make_policy(seed);
                run_episode(&world, &mut policy, seed, SpawnMode::Random)
            })
            .collect::<Result<_, _>>()?;
        for trace in &traces {
            writer.write(&world, trace)?;
            records.push(trial_record(trace, reward));
        }
    }
    writer.finish()?;
    Ok(TraceSetSummary {
        path: path.to_path_buf(),
        report: AggregateReport::from_records(Regime::Traces.label(), records)?,
    })
}
