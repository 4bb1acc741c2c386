use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::mlp::{soft_update_in_place, Activation, Mlp};
use super::replay::TransitionSample;
use super::reward::RewardParams;
use super::AgentError;
use crate::env::{Action, Observation, OBSERVATION_DIM};

pub const ACTION_DIM: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DdpgHyperparams {
    pub gamma: f64,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Hidden layer widths shared by actor and critic.
    pub hidden: Vec<usize>,
    /// Exploration noise standard deviation at the first and last episode;
    /// interpolated linearly in between.
    pub noise_start: f64,
    pub noise_end: f64,
    /// Uniformly random actions taken before the first gradient update.
    pub warmup_steps: usize,
    /// Environment steps between gradient updates.
    pub update_every: usize,
    pub reward: RewardParams,
}

impl Default for DdpgHyperparams {
    fn default() -> Self {
        Self {
            gamma: 0.98,
            tau: 0.005,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            batch_size: 64,
            buffer_capacity: 100_000,
            hidden: vec![64, 64],
            noise_start: 0.3,
            noise_end: 0.05,
            warmup_steps: 1_000,
            update_every: 1,
            reward: RewardParams::default(),
        }
    }
}

impl DdpgHyperparams {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |what: &str| Err(AgentError::Usage(what.to_string()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(self.actor_lr >= 0.0 && self.critic_lr >= 0.0) {
            return bad("learning rates must be non-negative");
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 || self.update_every == 0 {
            return bad("batch_size, buffer_capacity and update_every must be positive");
        }
        if !(self.noise_start >= 0.0 && self.noise_end >= 0.0) {
            return bad("noise scales must be non-negative");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layers must be non-empty");
        }
        Ok(())
    }

    /// Noise standard deviation for `episode` out of `n_episodes`.
    pub fn noise_at(&self, episode: usize, n_episodes: usize) -> f64 {
        if n_episodes <= 1 {
            return self.noise_start;
        }
        let frac = episode as f64 / (n_episodes - 1) as f64;
        self.noise_start + (self.noise_end - self.noise_start) * frac
    }
}

/// Policy network: 48 sensor readings to two wheel commands in (-1, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ActorNet(Mlp);

/// Value network over the concatenated (observation, action) vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticNet(Mlp);

impl ActorNet {
    pub fn from_mlp(net: Mlp) -> Result<Self, AgentError> {
        if net.input_dim() != OBSERVATION_DIM || net.output_dim() != ACTION_DIM {
            return Err(AgentError::Usage(format!(
                "actor must map {OBSERVATION_DIM} -> {ACTION_DIM}, got {:?}",
                net.dims()
            )));
        }
        if net.layers().last().unwrap().activation != Activation::Tanh {
            return Err(AgentError::Usage(
                "actor output must be bounded (tanh)".into(),
            ));
        }
        Ok(Self(net))
    }

    pub fn random<R: Rng + ?Sized>(hidden: &[usize], rng: &mut R) -> Self {
        let dims = dims(OBSERVATION_DIM, hidden, ACTION_DIM);
        Self(Mlp::random(
            &dims,
            Activation::Relu,
            Activation::Tanh,
            3e-3,
            rng,
        ))
    }

    pub fn mlp(&self) -> &Mlp {
        &self.0
    }

    pub fn into_mlp(self) -> Mlp {
        self.0
    }
}

impl CriticNet {
    pub fn from_mlp(net: Mlp) -> Result<Self, AgentError> {
        if net.input_dim() != OBSERVATION_DIM + ACTION_DIM || net.output_dim() != 1 {
            return Err(AgentError::Usage(format!(
                "critic must map {} -> 1, got {:?}",
                OBSERVATION_DIM + ACTION_DIM,
                net.dims()
            )));
        }
        Ok(Self(net))
    }

    pub fn random<R: Rng + ?Sized>(hidden: &[usize], rng: &mut R) -> Self {
        let dims = dims(OBSERVATION_DIM + ACTION_DIM, hidden, 1);
        Self(Mlp::random(
            &dims,
            Activation::Relu,
            Activation::Identity,
            3e-3,
            rng,
        ))
    }

    pub fn mlp(&self) -> &Mlp {
        &self.0
    }

    pub fn into_mlp(self) -> Mlp {
        self.0
    }
}

fn dims(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    std::iter::once(input)
        .chain(hidden.iter().copied())
        .chain(std::iter::once(output))
        .collect()
}

pub fn actor_forward(net: &ActorNet, obs: &Observation) -> Result<Action, AgentError> {
    let out = net.0.forward_one(&obs.to_vec())?;
    Ok(Action::new(out[0], out[1]))
}

pub fn critic_forward(
    net: &CriticNet,
    obs: &Observation,
    action: Action,
) -> Result<f64, AgentError> {
    let mut input = obs.to_vec();
    input.extend([action.left, action.right]);
    Ok(net.0.forward_one(&input)?[0])
}

/// Actor output plus zero-mean Gaussian noise, clamped into (-1, 1).
pub fn select_action<R: Rng + ?Sized>(
    net: &ActorNet,
    obs: &Observation,
    noise_scale: f64,
    rng: &mut R,
) -> Result<Action, AgentError> {
    let a = actor_forward(net, obs)?;
    if noise_scale <= 0.0 {
        return Ok(a);
    }
    let noise = Normal::new(0.0, noise_scale)
        .map_err(|e| AgentError::Usage(format!("noise scale {noise_scale}: {e}")))?;
    Ok(Action::new(
        a.left + noise.sample(rng),
        a.right + noise.sample(rng),
    ))
}

/// Bootstrapped critic target; terminal transitions do not bootstrap.
pub fn td_target(reward: f64, gamma: f64, next_q: f64, terminal: bool) -> f64 {
    if terminal {
        reward
    } else {
        reward + gamma * next_q
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateDiagnostics {
    pub critic_loss: f64,
    pub actor_loss: f64,
    /// Mean of `y - Q(s, a)` over the batch before the update.
    pub mean_td_error: f64,
}

/// Online and target actor/critic pairs with their optimisers.
#[derive(Debug, Clone)]
pub struct Ddpg {
    pub actor: ActorNet,
    pub critic: CriticNet,
    pub actor_target: ActorNet,
    pub critic_target: CriticNet,
    actor_opt: Adam,
    critic_opt: Adam,
    pub hp: DdpgHyperparams,
}

impl Ddpg {
    pub fn new<R: Rng + ?Sized>(hp: DdpgHyperparams, rng: &mut R) -> Result<Self, AgentError> {
        hp.validate()?;
        let actor = ActorNet::random(&hp.hidden, rng);
        let critic = CriticNet::random(&hp.hidden, rng);
        Ok(Self::from_nets(actor, critic, hp))
    }

    pub fn from_nets(actor: ActorNet, critic: CriticNet, hp: DdpgHyperparams) -> Self {
        Self {
            actor_opt: Adam::new(actor.mlp(), hp.actor_lr),
            critic_opt: Adam::new(critic.mlp(), hp.critic_lr),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            hp,
        }
    }

    /// One critic step on the squared TD error, one actor step ascending
    /// `Q(s, μ(s))`, then soft updates of both targets.
    pub fn update(&mut self, batch: &[&TransitionSample]) -> Result<UpdateDiagnostics, AgentError> {
        if batch.is_empty() {
            return Err(AgentError::Usage(
                "DDPG update needs a non-empty batch".into(),
            ));
        }
        let n = batch.len();
        let obs = stack(batch.iter().map(|t| t.obs.to_vec()), OBSERVATION_DIM);
        let next_obs = stack(batch.iter().map(|t| t.next_obs.to_vec()), OBSERVATION_DIM);
        let actions = stack(
            batch.iter().map(|t| vec![t.action.left, t.action.right]),
            ACTION_DIM,
        );

        let next_actions = self.actor_target.0.forward(next_obs.view())?;
        let next_q = self
            .critic_target
            .0
            .forward(concat(next_obs.view(), next_actions.view()).view())?;
        let targets: Vec<f64> = batch
            .iter()
            .enumerate()
            .map(|(i, t)| td_target(t.reward, self.hp.gamma, next_q[[i, 0]], t.terminal))
            .collect();

        let critic_input = concat(obs.view(), actions.view());
        let mut td_sum = 0.0;
        let (critic_loss, critic_grads) = self.critic.0.gradients(critic_input.view(), |q| {
            let mut grad = Array2::zeros((n, 1));
            let mut loss = 0.0;
            for i in 0..n {
                let diff = q[[i, 0]] - targets[i];
                td_sum -= diff;
                loss += diff * diff;
                grad[[i, 0]] = 2.0 * diff / n as f64;
            }
            (loss / n as f64, grad)
        })?;
        self.critic_opt.step(&mut self.critic.0, &critic_grads);

        let actor_cache = self.actor.0.forward_cached(obs.view())?;
        let policy_actions = actor_cache.output().clone();
        let q_cache = self
            .critic
            .0
            .forward_cached(concat(obs.view(), policy_actions.view()).view())?;
        let actor_loss = -q_cache.output().mean().unwrap_or(0.0);
        if !actor_loss.is_finite() {
            return Err(AgentError::Numeric(format!(
                "non-finite actor loss {actor_loss}"
            )));
        }
        let dq = Array2::from_elem((n, 1), -1.0 / n as f64);
        let (_, input_grad) = self.critic.0.backward(&q_cache, dq.view())?;
        let action_grad = input_grad.slice(s![.., OBSERVATION_DIM..]).to_owned();
        let (actor_grads, _) = self.actor.0.backward(&actor_cache, action_grad.view())?;
        self.actor_opt.step(&mut self.actor.0, &actor_grads);

        soft_update_in_place(&mut self.critic_target.0, &self.critic.0, self.hp.tau);
        soft_update_in_place(&mut self.actor_target.0, &self.actor.0, self.hp.tau);

        Ok(UpdateDiagnostics {
            critic_loss,
            actor_loss,
            mean_td_error: td_sum / n as f64,
        })
    }
}

fn stack(rows: impl Iterator<Item = Vec<f64>>, width: usize) -> Array2<f64> {
    let flat: Vec<f64> = rows.flatten().collect();
    let n = flat.len() / width;
    Array2::from_shape_vec((n, width), flat).expect("rows have uniform width")
}

fn concat(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    ndarray::concatenate(Axis(1), &[a, b]).expect("matching batch sizes")
}
