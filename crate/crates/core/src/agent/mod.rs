//! DDPG learner for the navigation task: feed-forward actor and critic,
//! replay buffer, target networks, exploration noise and the shaped reward.

mod adam;
mod ddpg;
mod mlp;
mod model_file;
mod replay;
mod reward;

pub use adam::Adam;
pub use ddpg::{
    actor_forward, critic_forward, select_action, td_target, ActorNet, CriticNet, Ddpg,
    DdpgHyperparams, UpdateDiagnostics, ACTION_DIM,
};
pub use mlp::{soft_update, Activation, ForwardCache, Layer, Mlp, MlpGrads};
pub use model_file::{
    decode_model, encode_model, inspect_model, load_model, load_model_expecting, save_model,
    ModelHeader,
};
pub use replay::{ReplayBuffer, TransitionSample};
pub use reward::{reward, reward_for, RewardParams};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: String,
        expected: usize,
        found: usize,
    },
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
