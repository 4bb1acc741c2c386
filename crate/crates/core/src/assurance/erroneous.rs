use serde::{Deserialize, Serialize};

use crate::env::{Action, EpisodeTrace, MissionMode, World};

/// Steps of context kept before each violation.
pub const DEFAULT_WINDOW: usize = 10;
/// Cumulative unsafe steps beyond which a mission violates SR2.
pub const UNSAFE_TIME_LIMIT: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViolationKind {
    Collision,
    UnsafeTimeExceeded,
    EnergyDepleted,
}

/// State-action context at step `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowStep {
    pub t: u32,
    pub observation: Vec<f64>,
    pub action: Action,
    pub mode: MissionMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErroneousBehaviourEntry {
    pub seed: u64,
    pub violation: ViolationKind,
    /// Step index of the first state exhibiting the violation.
    pub step: u32,
    /// Steps `max(0, step - k) .. step - 1`, oldest first.
    pub window: Vec<WindowStep>,
    pub model_hash: String,
}

/// One entry per violation event in `trace`, each with the `k` steps that
/// led up to it.
pub fn log_erroneous(
    world: &World,
    trace: &EpisodeTrace,
    k: usize,
    model_hash: &str,
) -> Vec<ErroneousBehaviourEntry> {
    let mut events = Vec::new();
    if let Some(t) = trace
        .steps
        .iter()
        .position(|s| s.state.unsafe_time > UNSAFE_TIME_LIMIT)
    {
        events.push((t, ViolationKind::UnsafeTimeExceeded));
    }
    if let Some(t) = trace
        .steps
        .iter()
        .position(|s| s.state.mode == MissionMode::Collided)
    {
        events.push((t, ViolationKind::Collision));
    }
    if let Some(t) = trace.steps.iter().position(|s| s.state.energy == 0) {
        if trace.steps[t].state.mode != MissionMode::Collided {
            events.push((t, ViolationKind::EnergyDepleted));
        }
    }
    events.sort_by_key(|&(t, _)| t);

    events
        .into_iter()
        .map(|(t, violation)| {
            let window = trace.steps[t.saturating_sub(k)..t]
                .iter()
                .enumerate()
                .map(|(i, s)| WindowStep {
                    t: (t.saturating_sub(k) + i) as u32,
                    observation: world.observe(&s.state).to_vec(),
                    action: s.action.unwrap_or_default(),
                    mode: s.state.mode,
                })
                .collect();
            ErroneousBehaviourEntry {
                seed: trace.seed,
                violation,
                step: t as u32,
                window,
                model_hash: model_hash.to_string(),
            }
        })
        .collect()
}
