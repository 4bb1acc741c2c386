use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PlanError, Regime, SeedPlan};
use crate::agent::{
    actor_forward, load_model_expecting, reward_for, save_model, select_action, ActorNet,
    AgentError, CriticNet, Ddpg, DdpgHyperparams, ReplayBuffer, TransitionSample, ACTION_DIM,
};
use crate::env::{
    Action, MissionMode, Observation, SpawnMode, TerminationCause, World, WorldConfig,
    OBSERVATION_DIM,
};

pub const ACTOR_FILE: &str = "actor.amlp";
pub const CRITIC_FILE: &str = "critic.amlp";

/// Deployed policy plus the critic it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub actor: ActorNet,
    pub critic: CriticNet,
}

impl TrainedModel {
    /// Deterministic policy: the actor output without exploration noise.
    pub fn act(&self, obs: &Observation) -> Action {
        // Shapes are checked on construction, so the forward pass cannot fail.
        actor_forward(&self.actor, obs).unwrap_or_default()
    }

    pub fn policy(&self) -> impl FnMut(&Observation) -> Action + '_ {
        move |obs| self.act(obs)
    }

    pub fn save(&self, dir: &Path) -> Result<(), PlanError> {
        std::fs::create_dir_all(dir)?;
        save_model(&dir.join(ACTOR_FILE), self.actor.mlp())?;
        save_model(&dir.join(CRITIC_FILE), self.critic.mlp())?;
        Ok(())
    }

    /// Loads both networks; `hidden` gives the expected hidden widths.
    pub fn load(dir: &Path, hidden: &[usize]) -> Result<Self, PlanError> {
        let with = |input: usize, output: usize| -> Vec<usize> {
            std::iter::once(input)
                .chain(hidden.iter().copied())
                .chain(std::iter::once(output))
                .collect()
        };
        let actor =
            load_model_expecting(&dir.join(ACTOR_FILE), &with(OBSERVATION_DIM, ACTION_DIM))?;
        let critic = load_model_expecting(
            &dir.join(CRITIC_FILE),
            &with(OBSERVATION_DIM + ACTION_DIM, 1),
        )?;
        Ok(Self {
            actor: ActorNet::from_mlp(actor)?,
            critic: CriticNet::from_mlp(critic)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLogEntry {
    pub episode: usize,
    pub seed: u64,
    pub steps: u32,
    pub total_reward: f64,
    pub cause: TerminationCause,
    pub goal_reached: bool,
    /// Steps taken to reach the goal; `None` when the goal was not reached.
    pub time_to_goal: Option<u32>,
    pub collided: bool,
    pub unsafe_time: u32,
    pub noise: f64,
    pub updates: usize,
    pub mean_critic_loss: Option<f64>,
    pub mean_actor_loss: Option<f64>,
}

/// Everything needed to reproduce and audit a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DevelopmentLog {
    pub config_hash: String,
    pub seed_base: u64,
    pub n_episodes: usize,
    pub hyperparams: DdpgHyperparams,
    pub reward_description: String,
    pub entries: Vec<EpisodeLogEntry>,
}

impl DevelopmentLog {
    /// Goal rate over the last `window` training episodes.
    pub fn recent_goal_rate(&self, window: usize) -> Option<f64> {
        let n = window.min(self.entries.len());
        if n == 0 {
            return None;
        }
        let hits = self.entries[self.entries.len() - n..]
            .iter()
            .filter(|e| e.goal_reached)
            .count();
        Some(hits as f64 / n as f64)
    }
}

pub fn train(
    config: &WorldConfig,
    hp: &DdpgHyperparams,
    n_episodes: usize,
    seeds: &SeedPlan,
) -> Result<(TrainedModel, DevelopmentLog), PlanError> {
    train_with_progress(config, hp, n_episodes, seeds, |_| {})
}

/// Trains a fresh agent for `n_episodes`, calling `progress` after each one.
///
/// Episodes use the training world: energy saturates instead of ending the
/// run, and only goal, collision or the step cap stop an episode. The step cap
/// is a truncation, so those transitions still bootstrap.
pub fn train_with_progress(
    config: &WorldConfig,
    hp: &DdpgHyperparams,
    n_episodes: usize,
    seeds: &SeedPlan,
    mut progress: impl FnMut(&EpisodeLogEntry),
) -> Result<(TrainedModel, DevelopmentLog), PlanError> {
    if n_episodes == 0 {
        return Err(PlanError::Usage(
            "training needs at least one episode".into(),
        ));
    }
    hp.validate()?;
    let world = World::new(config.training())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.seed(Regime::Training, 999_999));
    let mut agent = Ddpg::new(hp.clone(), &mut rng)?;
    let mut buffer = ReplayBuffer::new(hp.buffer_capacity);
    let mut total_steps = 0usize;
    let mut entries = Vec::with_capacity(n_episodes);

    for episode in 0..n_episodes {
        let seed = seeds.seed(Regime::Training, episode);
        let noise = hp.noise_at(episode, n_episodes);
        let mut state = world.reset(seed, SpawnMode::Random)?;
        let mut obs = world.observe(&state);
        let mut total_reward = 0.0;
        let (mut updates, mut critic_sum, mut actor_sum) = (0usize, 0.0, 0.0);
        let diverged = |source: AgentError| PlanError::Divergence { episode, source };

        let cause = loop {
            if let Some(cause) = world.termination_cause(&state) {
                break cause;
            }
            let action = if total_steps < hp.warmup_steps {
                Action::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            } else {
                select_action(&agent.actor, &obs, noise, &mut rng).map_err(diverged)?
            };
            let outcome = world.step(&state, action)?;
            let reward = reward_for(&outcome.reward_inputs, &hp.reward);
            let next_obs = world.observe(&outcome.next_state);
            let terminal = matches!(
                outcome.next_state.mode,
                MissionMode::GoalReached | MissionMode::Collided
            );
            buffer.push(TransitionSample {
                obs,
                action,
                reward,
                next_obs: next_obs.clone(),
                terminal,
            });
            total_reward += reward;
            total_steps += 1;

            if total_steps >= hp.warmup_steps
                && buffer.len() >= hp.batch_size
                && total_steps.is_multiple_of(hp.update_every)
            {
                let batch = buffer.sample(hp.batch_size, &mut rng);
                let diag = agent.update(&batch).map_err(diverged)?;
                updates += 1;
                critic_sum += diag.critic_loss;
                actor_sum += diag.actor_loss;
            }
            state = outcome.next_state;
            obs = next_obs;
        };

        let mean = |sum: f64| (updates > 0).then(|| sum / updates as f64);
        let entry = EpisodeLogEntry {
            episode,
            seed,
            steps: state.step_count,
            total_reward,
            cause,
            goal_reached: cause == TerminationCause::Goal,
            time_to_goal: (cause == TerminationCause::Goal).then_some(state.step_count),
            collided: cause == TerminationCause::Collision,
            unsafe_time: state.unsafe_time,
            noise,
            updates,
            mean_critic_loss: mean(critic_sum),
            mean_actor_loss: mean(actor_sum),
        };
        progress(&entry);
        entries.push(entry);
    }

    let log = DevelopmentLog {
        config_hash: world.config().config_hash(),
        seed_base: seeds.base,
        n_episodes,
        hyperparams: hp.clone(),
        reward_description: hp.reward.describe(),
        entries,
    };
    let model = TrainedModel {
        actor: agent.actor,
        critic: agent.critic,
    };
    Ok((model, log))
}
