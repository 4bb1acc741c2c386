use serde::{Deserialize, Serialize};

use crate::env::RewardInputs;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardParams {
    /// Scale applied to the per-step reduction in goal distance.
    pub beta: f64,
    /// Magnitude of the per-step cost inside an unsafe zone.
    pub unsafe_cost: f64,
    /// Magnitude of the cost on collision.
    pub collision_cost: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            beta: 1.0,
            unsafe_cost: 0.1,
            collision_cost: 10.0,
        }
    }
}

impl RewardParams {
    pub fn describe(&self) -> String {
        format!(
            "R = (D_prev - D_now) * {} - {} if collided, else - {} if inside an unsafe zone",
            self.beta, self.collision_cost, self.unsafe_cost
        )
    }
}

/// Progress towards the goal scaled by `beta`, minus a cost for collisions or,
/// failing that, for being inside an unsafe zone.
pub fn reward(
    goal_distance_before: f64,
    goal_distance_after: f64,
    in_unsafe: bool,
    collided: bool,
    params: &RewardParams,
) -> f64 {
    let progress = (goal_distance_before - goal_distance_after) * params.beta;
    let penalty = if collided {
        params.collision_cost
    } else if in_unsafe {
        params.unsafe_cost
    } else {
        0.0
    };
    progress - penalty
}

pub fn reward_for(inputs: &RewardInputs, params: &RewardParams) -> f64 {
    reward(
        inputs.goal_distance_before,
        inputs.goal_distance_after,
        inputs.in_unsafe,
        inputs.collided,
        params,
    )
}
